#pragma once

// Minimal deterministic tensor kernels: valid convolution, branch-phase
// pooling, activation, softmax and the matching backward passes. All loops
// are plain and sequential; the direct convolution here is the normative
// reference for any faster path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tao {

template <typename T>
struct TensorT {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;  // row-major, c * (H*W) + y * W + x

  TensorT() = default;
  TensorT(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("TensorT: non-positive shape " + shape_str());
  }

  std::size_t size() const { return data.size(); }

  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const TensorT& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

using Tensor = TensorT<float>;

template <typename T>
struct ConvKernelT {
  int out_channels = 0;
  int in_channels = 0;
  int k = 0;  // odd side length (1 or 3 in the reference nets)
  std::vector<T> weights;  // out * in * k * k
  std::vector<T> bias;     // out

  ConvKernelT() = default;
  ConvKernelT(int out, int in, int kk)
      : out_channels(out), in_channels(in), k(kk),
        weights(static_cast<std::size_t>(out) * in * kk * kk, T(0)),
        bias(static_cast<std::size_t>(out), T(0)) {
    if (kk < 1 || kk % 2 == 0)
      throw std::invalid_argument("ConvKernelT: kernel side must be odd, got " +
                                  std::to_string(kk));
  }

  T& w(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * k + ky) * k + kx];
  }
  T w(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * k + ky) * k + kx];
  }
};

using ConvKernel = ConvKernelT<float>;

// ---------------------------------------------------------------------------
// forward ops

template <typename T>
TensorT<T> conv2d_valid(const TensorT<T>& in, const ConvKernelT<T>& ker) {
  if (in.channels != ker.in_channels || in.height < ker.k || in.width < ker.k)
    throw std::invalid_argument("conv2d_valid: input " + in.shape_str() +
                                " incompatible with kernel " +
                                std::to_string(ker.out_channels) + "x" +
                                std::to_string(ker.in_channels) + "x" +
                                std::to_string(ker.k) + "x" + std::to_string(ker.k));
  const int oh = in.height - ker.k + 1;
  const int ow = in.width - ker.k + 1;
  TensorT<T> out(ker.out_channels, oh, ow);
  for (int o = 0; o < ker.out_channels; ++o) {
    T* op = &out.at(o, 0, 0);
    const T b = ker.bias[o];
    for (int i = 0; i < oh * ow; ++i) op[i] = b;
    for (int c = 0; c < in.channels; ++c) {
      for (int ky = 0; ky < ker.k; ++ky) {
        for (int kx = 0; kx < ker.k; ++kx) {
          const T wv = ker.w(o, c, ky, kx);
          for (int y = 0; y < oh; ++y) {
            const T* ip = &in.at(c, y + ky, kx);
            T* orow = op + y * ow;
            for (int x = 0; x < ow; ++x) orow[x] += wv * ip[x];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> pad2d(const TensorT<T>& in, int margin, T value) {
  if (margin < 0) throw std::invalid_argument("pad2d: negative margin");
  if (margin == 0) return in;
  TensorT<T> out(in.channels, in.height + 2 * margin, in.width + 2 * margin, value);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        out.at(c, y + margin, x + margin) = in.at(c, y, x);
  return out;
}

// Asymmetric padding; used by the dense pipeline for evenness margins.
template <typename T>
TensorT<T> pad2d_lrtb(const TensorT<T>& in, int left, int right, int top,
                      int bottom, T value) {
  if (left < 0 || right < 0 || top < 0 || bottom < 0)
    throw std::invalid_argument("pad2d_lrtb: negative margin");
  if ((left | right | top | bottom) == 0) return in;
  TensorT<T> out(in.channels, in.height + top + bottom, in.width + left + right,
                 value);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        out.at(c, y + top, x + left) = in.at(c, y, x);
  return out;
}

// One of the four stride-2 sub-maps of a feature map. The four phase outputs
// partition the input units exactly.
template <typename T>
TensorT<T> phase_decimate(const TensorT<T>& in, int phase_y, int phase_x) {
  if (in.height % 2 != 0 || in.width % 2 != 0)
    throw std::invalid_argument("phase_decimate: odd extent " + in.shape_str() +
                                " (caller must pad/crop to even)");
  TensorT<T> out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.at(c, y, x) = in.at(c, 2 * y + phase_y, 2 * x + phase_x);
  return out;
}

// Inverse of the four-phase split: children[py*2+px] goes to (2y+py, 2x+px).
template <typename T>
TensorT<T> phase_interleave(const TensorT<T>* children[4]) {
  const TensorT<T>& c0 = *children[0];
  for (int p = 1; p < 4; ++p)
    if (!children[p]->same_shape(c0))
      throw std::invalid_argument("phase_interleave: ragged children");
  TensorT<T> out(c0.channels, c0.height * 2, c0.width * 2);
  for (int p = 0; p < 4; ++p) {
    const int py = p >> 1, px = p & 1;
    const TensorT<T>& ch = *children[p];
    for (int c = 0; c < ch.channels; ++c)
      for (int y = 0; y < ch.height; ++y)
        for (int x = 0; x < ch.width; ++x)
          out.at(c, 2 * y + py, 2 * x + px) = ch.at(c, y, x);
  }
  return out;
}

// 2x2 stride-2 max pool whose window grid is shifted by (offset_y, offset_x).
// Window elements falling past the edge are ignored; output is half-size.
// argmax (flat input index per output unit) is recorded when requested.
template <typename T>
TensorT<T> shifted_maxpool(const TensorT<T>& in, int offset_y, int offset_x,
                           std::vector<std::int64_t>* argmax = nullptr) {
  if (in.height % 2 != 0 || in.width % 2 != 0)
    throw std::invalid_argument("shifted_maxpool: odd extent " + in.shape_str());
  TensorT<T> out(in.channels, in.height / 2, in.width / 2);
  if (argmax) argmax->assign(out.size(), -1);
  std::size_t oi = 0;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x, ++oi) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t bi = -1;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * y + offset_y + dy;
            const int sx = 2 * x + offset_x + dx;
            if (sy >= in.height || sx >= in.width) continue;
            const T v = in.at(c, sy, sx);
            if (v > best) {
              best = v;
              bi = (static_cast<std::int64_t>(c) * in.height + sy) * in.width + sx;
            }
          }
        }
        out.data[oi] = best;
        if (argmax) (*argmax)[oi] = bi;
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& in) {
  TensorT<T> out = in;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
void relu_inplace(TensorT<T>& t) {
  for (T& v : t.data) v = v > T(0) ? v : T(0);
}

// Per-position channel softmax, max-subtracted.
template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& in) {
  if (in.channels < 2)
    throw std::invalid_argument("softmax_channels: need >= 2 channels");
  TensorT<T> out(in.channels, in.height, in.width);
  const int hw = in.height * in.width;
  for (int i = 0; i < hw; ++i) {
    T m = in.data[i];
    for (int c = 1; c < in.channels; ++c)
      m = std::max(m, in.data[static_cast<std::size_t>(c) * hw + i]);
    T sum = T(0);
    for (int c = 0; c < in.channels; ++c) {
      const T e = std::exp(in.data[static_cast<std::size_t>(c) * hw + i] - m);
      out.data[static_cast<std::size_t>(c) * hw + i] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < in.channels; ++c)
      out.data[static_cast<std::size_t>(c) * hw + i] *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward ops

template <typename T>
TensorT<T> conv2d_valid_bwd(const TensorT<T>& in, const ConvKernelT<T>& ker,
                            const TensorT<T>& dout, ConvKernelT<T>& grad) {
  if (dout.channels != ker.out_channels ||
      dout.height != in.height - ker.k + 1 || dout.width != in.width - ker.k + 1)
    throw std::invalid_argument("conv2d_valid_bwd: upstream " + dout.shape_str() +
                                " mismatches forward " + in.shape_str());
  if (grad.out_channels != ker.out_channels || grad.in_channels != ker.in_channels ||
      grad.k != ker.k)
    throw std::invalid_argument("conv2d_valid_bwd: grad buffer shape mismatch");
  TensorT<T> din(in.channels, in.height, in.width);
  for (int o = 0; o < ker.out_channels; ++o) {
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        const T g = dout.at(o, y, x);
        if (g == T(0)) continue;
        grad.bias[o] += g;
        for (int c = 0; c < in.channels; ++c)
          for (int ky = 0; ky < ker.k; ++ky)
            for (int kx = 0; kx < ker.k; ++kx) {
              grad.w(o, c, ky, kx) += g * in.at(c, y + ky, x + kx);
              din.at(c, y + ky, x + kx) += g * ker.w(o, c, ky, kx);
            }
      }
    }
  }
  return din;
}

// Scatters a half-size phase gradient into its unique parent units.
template <typename T>
void phase_decimate_bwd(const TensorT<T>& dphase, int phase_y, int phase_x,
                        TensorT<T>& dparent) {
  if (dparent.height != dphase.height * 2 || dparent.width != dphase.width * 2 ||
      dparent.channels != dphase.channels)
    throw std::invalid_argument("phase_decimate_bwd: shape mismatch");
  for (int c = 0; c < dphase.channels; ++c)
    for (int y = 0; y < dphase.height; ++y)
      for (int x = 0; x < dphase.width; ++x)
        dparent.at(c, 2 * y + phase_y, 2 * x + phase_x) += dphase.at(c, y, x);
}

template <typename T>
void shifted_maxpool_bwd(const TensorT<T>& dpool,
                         const std::vector<std::int64_t>& argmax,
                         TensorT<T>& dparent) {
  if (argmax.size() != dpool.size())
    throw std::invalid_argument("shifted_maxpool_bwd: argmax size mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i)
    if (argmax[i] >= 0) dparent.data[static_cast<std::size_t>(argmax[i])] += dpool.data[i];
}

template <typename T>
TensorT<T> relu_bwd(const TensorT<T>& post, const TensorT<T>& dout) {
  if (!post.same_shape(dout))
    throw std::invalid_argument("relu_bwd: shape mismatch");
  TensorT<T> din = dout;
  for (std::size_t i = 0; i < din.size(); ++i)
    if (!(post.data[i] > T(0))) din.data[i] = T(0);
  return din;
}

// ---------------------------------------------------------------------------
// SGD with momentum: v <- momentum*v + g; p <- p - lr*v.

template <typename T>
void sgd_update(std::vector<T>& params, const std::vector<T>& grads, T lr,
                T momentum, std::vector<T>& velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("sgd_update: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("sgd_update: non-finite gradient (training diverged)");
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

}  // namespace tao
