#pragma once

// Recorded forward pass and the mirrored backward pass through the branch
// tree. Branch gradients route back through the four-phase split bijectively;
// conv parameters are shared across branches, so their gradients accumulate
// into one buffer. The head's softmax gradient is fused into the loss, so the
// backward entry point takes gradients with respect to the head logits.

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "taofcn/net.hpp"
#include "taofcn/tensor.hpp"

namespace tao {

template <typename T>
struct TraceNode {
  LayerKind kind;
  int ki = -1;                 // kernel index (Conv / Head)
  TensorT<T> input;            // Conv / Head input
  TensorT<T> output;           // Conv: post-relu map (doubles as relu mask)
  int in_c = 0, in_h = 0, in_w = 0;  // pool parent shape
  std::array<std::unique_ptr<TraceNode>, 4> children;  // BranchPool
  std::array<std::vector<std::int64_t>, 4> branch_argmax;  // ShiftedMax mode
  std::vector<std::int64_t> pool_argmax;               // StridedPool
  std::unique_ptr<TraceNode> next;
};

template <typename T>
struct DenseTrace {
  std::unique_ptr<TraceNode<T>> root;
  int full_h = 0, full_w = 0;  // stitched extent before cropping
  DenseOutputT<T> out;
  int grid_h = 0, grid_w = 0;
};

namespace detail {

template <typename T>
TensorT<T> forward_train_from(const NetworkSpec& spec, const ParamsT<T>& params,
                              const TensorT<T>& x, std::size_t li, int ki,
                              TraceNode<T>& tr) {
  const LayerSpec& l = spec.layers[li];
  tr.kind = l.kind;
  switch (l.kind) {
    case LayerKind::Conv: {
      tr.ki = ki;
      tr.input = x;
      TensorT<T> y = conv2d_valid(x, params.kernels[ki]);
      relu_inplace(y);
      tr.output = y;
      tr.next = std::make_unique<TraceNode<T>>();
      return forward_train_from(spec, params, y, li + 1, ki + 1, *tr.next);
    }
    case LayerKind::Head: {
      tr.ki = ki;
      tr.input = x;
      return softmax_channels(conv2d_valid(x, params.kernels[ki]));
    }
    case LayerKind::StridedPool: {
      tr.in_c = x.channels;
      tr.in_h = x.height;
      tr.in_w = x.width;
      TensorT<T> y = shifted_maxpool(x, 0, 0, &tr.pool_argmax);
      tr.next = std::make_unique<TraceNode<T>>();
      return forward_train_from(spec, params, y, li + 1, ki, *tr.next);
    }
    case LayerKind::BranchPool: {
      tr.in_c = x.channels;
      tr.in_h = x.height;
      tr.in_w = x.width;
      TensorT<T> outs[4];
      const TensorT<T>* ptrs[4];
      for (int p = 0; p < 4; ++p) {
        const int py = p >> 1, px = p & 1;
        TensorT<T> child =
            spec.mode == BranchMode::Decimate
                ? phase_decimate(x, py, px)
                : shifted_maxpool(x, py, px, &tr.branch_argmax[p]);
        tr.children[p] = std::make_unique<TraceNode<T>>();
        outs[p] = forward_train_from(spec, params, child, li + 1, ki,
                                     *tr.children[p]);
        ptrs[p] = &outs[p];
      }
      return phase_interleave(ptrs);
    }
  }
  throw std::logic_error("forward_train_from: unreachable");
}

// Takes gradient w.r.t. the subtree output (head logits at the leaves),
// returns gradient w.r.t. the subtree input.
template <typename T>
TensorT<T> backward_from(const NetworkSpec& spec, const ParamsT<T>& params,
                         TraceNode<T>& tr, const TensorT<T>& dout,
                         ParamsT<T>& grads) {
  switch (tr.kind) {
    case LayerKind::Head:
      return conv2d_valid_bwd(tr.input, params.kernels[tr.ki], dout,
                              grads.kernels[tr.ki]);
    case LayerKind::Conv: {
      TensorT<T> dy = backward_from(spec, params, *tr.next, dout, grads);
      dy = relu_bwd(tr.output, dy);
      return conv2d_valid_bwd(tr.input, params.kernels[tr.ki], dy,
                              grads.kernels[tr.ki]);
    }
    case LayerKind::StridedPool: {
      TensorT<T> dy = backward_from(spec, params, *tr.next, dout, grads);
      TensorT<T> din(tr.in_c, tr.in_h, tr.in_w);
      shifted_maxpool_bwd(dy, tr.pool_argmax, din);
      return din;
    }
    case LayerKind::BranchPool: {
      TensorT<T> din(tr.in_c, tr.in_h, tr.in_w);
      for (int p = 0; p < 4; ++p) {
        const int py = p >> 1, px = p & 1;
        TensorT<T> dchild_out = phase_decimate(dout, py, px);
        TensorT<T> dchild = backward_from(spec, params, *tr.children[p],
                                          dchild_out, grads);
        if (spec.mode == BranchMode::Decimate)
          phase_decimate_bwd(dchild, py, px, din);
        else
          shifted_maxpool_bwd(dchild, tr.branch_argmax[p], din);
      }
      return din;
    }
  }
  throw std::logic_error("backward_from: unreachable");
}

}  // namespace detail

template <typename T>
DenseTrace<T> forward_dense_train(const NetworkSpec& spec,
                                  const ParamsT<T>& params,
                                  const PaddedImageT<T>& image) {
  spec.validate();
  DenseTrace<T> dt;
  dt.root = std::make_unique<TraceNode<T>>();
  TensorT<T> full =
      detail::forward_train_from(spec, params, image.tensor, 0, 0, *dt.root);
  dt.full_h = full.height;
  dt.full_w = full.width;
  dt.grid_h = image.grid_h;
  dt.grid_w = image.grid_w;
  dt.out.stride = image.stride;
  TensorT<T> cropped(full.channels, image.grid_h, image.grid_w);
  for (int c = 0; c < full.channels; ++c)
    for (int y = 0; y < image.grid_h; ++y)
      for (int x = 0; x < image.grid_w; ++x)
        cropped.at(c, y, x) = full.at(c, y, x);
  dt.out.probs = std::move(cropped);
  return dt;
}

// dlogits is on the cropped grid; it is zero-embedded back into the stitched
// extent before walking the trace. Returns the input-image gradient.
template <typename T>
TensorT<T> backward_dense(const NetworkSpec& spec, const ParamsT<T>& params,
                          DenseTrace<T>& dt, const TensorT<T>& dlogits,
                          ParamsT<T>& grads) {
  if (dlogits.height != dt.grid_h || dlogits.width != dt.grid_w)
    throw std::invalid_argument("backward_dense: gradient grid mismatch");
  TensorT<T> full(dlogits.channels, dt.full_h, dt.full_w);
  for (int c = 0; c < dlogits.channels; ++c)
    for (int y = 0; y < dt.grid_h; ++y)
      for (int x = 0; x < dt.grid_w; ++x)
        full.at(c, y, x) = dlogits.at(c, y, x);
  return detail::backward_from(spec, params, *dt.root, full, grads);
}

}  // namespace tao
