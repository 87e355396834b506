#pragma once

// Tree-arranged dense forward pass: every pooling layer splits each feature
// map into four phase branches so no unit is discarded; branch leaves are
// stitched back into a full-resolution prediction map. The plain patch CNN
// extracted from the same spec is the pixelwise oracle for the dense pass.

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "taofcn/tensor.hpp"

namespace tao {

inline constexpr const char* kClasses = "0123456789-.";
inline constexpr int kNumClasses = 12;           // characters, background excluded
inline constexpr int kNumChannels = kNumClasses + 1;  // + background

enum class LayerKind { Conv, BranchPool, StridedPool, Head };
enum class BranchMode { Decimate, ShiftedMax };

inline const char* to_string(BranchMode m) {
  return m == BranchMode::Decimate ? "decimate" : "shiftedmax";
}
inline BranchMode branch_mode_from_string(const std::string& s) {
  if (s == "decimate") return BranchMode::Decimate;
  if (s == "shiftedmax") return BranchMode::ShiftedMax;
  throw std::invalid_argument("unknown branch mode: " + s);
}

struct LayerSpec {
  LayerKind kind;
  int k = 0;             // Conv kernel side; Head is always 1x1
  int out_channels = 0;  // Conv / Head

  static LayerSpec conv(int k, int out) { return {LayerKind::Conv, k, out}; }
  static LayerSpec branch_pool() { return {LayerKind::BranchPool, 0, 0}; }
  static LayerSpec strided_pool() { return {LayerKind::StridedPool, 0, 0}; }
  static LayerSpec head(int classes_plus_bg) {
    return {LayerKind::Head, 1, classes_plus_bg};
  }
};

struct NetworkSpec {
  std::string name;
  int input_channels = 1;
  BranchMode mode = BranchMode::Decimate;
  std::vector<LayerSpec> layers;

  void validate() const {
    if (layers.empty() || layers.back().kind != LayerKind::Head)
      throw std::invalid_argument("NetworkSpec: last layer must be the head");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      if (layers[i].kind == LayerKind::Head)
        throw std::invalid_argument("NetworkSpec: head must be the only and last head layer");
  }

  int num_channels() const { return layers.back().out_channels; }

  int branch_depth() const {
    int d = 0;
    for (const auto& l : layers)
      if (l.kind == LayerKind::BranchPool) ++d;
    return d;
  }
};

// ---------------------------------------------------------------------------
// Parameters: one kernel per Conv/Head layer, in layer order.

template <typename T>
struct ParamsT {
  std::vector<ConvKernelT<T>> kernels;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& k : kernels) n += k.weights.size() + k.bias.size();
    return n;
  }

  void fill(T v) {
    for (auto& k : kernels) {
      std::fill(k.weights.begin(), k.weights.end(), v);
      std::fill(k.bias.begin(), k.bias.end(), v);
    }
  }

  template <typename U>
  ParamsT<U> cast() const {
    ParamsT<U> o;
    for (const auto& k : kernels) {
      ConvKernelT<U> ck(k.out_channels, k.in_channels, k.k);
      for (std::size_t i = 0; i < k.weights.size(); ++i)
        ck.weights[i] = static_cast<U>(k.weights[i]);
      for (std::size_t i = 0; i < k.bias.size(); ++i)
        ck.bias[i] = static_cast<U>(k.bias[i]);
      o.kernels.push_back(std::move(ck));
    }
    return o;
  }
};

using Params = ParamsT<float>;

template <typename T>
ParamsT<T> make_params(const NetworkSpec& spec) {
  spec.validate();
  ParamsT<T> p;
  int in_c = spec.input_channels;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Head) {
      p.kernels.emplace_back(l.out_channels, in_c, l.kind == LayerKind::Head ? 1 : l.k);
      in_c = l.out_channels;
    }
  }
  return p;
}

// Fan-in-scaled uniform init, seeded.
template <typename T>
ParamsT<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  ParamsT<T> p = make_params<T>(spec);
  std::mt19937_64 rng(seed);
  for (auto& k : p.kernels) {
    const double fan_in = static_cast<double>(k.in_channels) * k.k * k.k;
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : k.weights) w = static_cast<T>(dist(rng));
    // biases stay zero
  }
  return p;
}

// ---------------------------------------------------------------------------
// Receptive-field arithmetic: r grows by (k_eff - 1) * j per layer, j doubles
// at every stride-2 pool.

struct FieldInfo {
  int r = 1;       // patch side length
  int jump = 1;    // pre-stitch stride of the deepest feature grid
  int stride = 1;  // stitched output grid stride (StridedPools only)
  int branch_depth = 0;
};

inline FieldInfo receptive_field(const NetworkSpec& spec) {
  spec.validate();
  FieldInfo f;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        f.r += (l.k - 1) * f.jump;
        break;
      case LayerKind::Head:
        break;
      case LayerKind::BranchPool:
        if (spec.mode == BranchMode::ShiftedMax) f.r += f.jump;
        f.jump *= 2;
        ++f.branch_depth;
        break;
      case LayerKind::StridedPool:
        f.r += f.jump;
        f.jump *= 2;
        f.stride *= 2;
        break;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Dense-pass padding. Interior margin comes from the receptive field; extra
// bottom/right margin keeps every pool input even and guarantees a full
// output grid, cropped back to the input's own grid after stitching.

template <typename T>
struct PaddedImageT {
  TensorT<T> tensor;
  int orig_h = 0, orig_w = 0;
  int grid_h = 0, grid_w = 0;  // crop target on the (possibly coarse) grid
  int stride = 1;
};

using PaddedImage = PaddedImageT<float>;

namespace detail {

// Simulates per-leaf dims through the layers; returns the final leaf extent,
// or -1 if some pool would see an odd extent or a conv would underflow.
inline int simulate_extent(const NetworkSpec& spec, int d) {
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        d -= l.k - 1;
        if (d < 1) return -1;
        break;
      case LayerKind::Head:
        break;
      case LayerKind::BranchPool:
      case LayerKind::StridedPool:
        if (d % 2 != 0) return -1;
        d /= 2;
        break;
    }
  }
  return d;
}

inline int extra_margin(const NetworkSpec& spec, int base, int grid_target,
                        int branch_depth_exp) {
  for (int e = 0; e < 64; ++e) {
    const int leaf = simulate_extent(spec, base + e);
    if (leaf < 1) continue;
    if (leaf * branch_depth_exp >= grid_target) return e;
  }
  throw std::invalid_argument("pad_for_dense: no feasible margin for spec (underflowing layer?)");
}

}  // namespace detail

template <typename T>
PaddedImageT<T> pad_for_dense(const TensorT<T>& image, const NetworkSpec& spec,
                              T pad_value) {
  const FieldInfo f = receptive_field(spec);
  const int leaves = 1 << f.branch_depth;
  PaddedImageT<T> out;
  out.orig_h = image.height;
  out.orig_w = image.width;
  out.stride = f.stride;
  out.grid_h = (image.height + f.stride - 1) / f.stride;
  out.grid_w = (image.width + f.stride - 1) / f.stride;
  const int top = (f.r - 1) / 2;
  const int bottom0 = f.r - 1 - top;
  // grid targets are in units of the deepest (pre-stitch) feature grid: the
  // stitched extent is leaf_extent * leaves, and the coarse-grid crop target
  // corresponds to grid_h stitched rows.
  const int eh = detail::extra_margin(spec, image.height + top + bottom0,
                                      out.grid_h, leaves);
  const int ew = detail::extra_margin(spec, image.width + top + bottom0,
                                      out.grid_w, leaves);
  out.tensor = pad2d_lrtb(image, top, bottom0 + ew, top, bottom0 + eh, pad_value);
  return out;
}

// ---------------------------------------------------------------------------
// Dense output: per-pixel class probabilities on the stitched grid. Grid
// position (i, j) maps to input pixel (i * stride, j * stride).

template <typename T>
struct DenseOutputT {
  TensorT<T> probs;
  int stride = 1;
  int offset_y = 0, offset_x = 0;
};

using DenseOutput = DenseOutputT<float>;

// Branch feature tree, exposed for inspection. Internal nodes carry the map
// entering the split; leaves carry the pre-stitch head output.
template <typename T>
struct FeatureTreeT {
  TensorT<T> node;
  std::array<std::unique_ptr<FeatureTreeT>, 4> children;  // keyed (py, px)

  bool is_leaf() const { return !children[0]; }
  int leaf_count() const {
    if (is_leaf()) return 1;
    int n = 0;
    for (const auto& c : children) n += c->leaf_count();
    return n;
  }
};

using FeatureTree = FeatureTreeT<float>;

namespace detail {

template <typename T>
TensorT<T> forward_from(const NetworkSpec& spec, const ParamsT<T>& params,
                        const TensorT<T>& x, std::size_t li, int ki,
                        FeatureTreeT<T>* tree) {
  if (li == spec.layers.size())
    throw std::logic_error("forward_from: ran past the head");
  const LayerSpec& l = spec.layers[li];
  switch (l.kind) {
    case LayerKind::Conv: {
      if (x.height < l.k || x.width < l.k)
        throw std::invalid_argument("forward_dense: feature map " + x.shape_str() +
                                    " underflows conv at layer " + std::to_string(li));
      TensorT<T> y = conv2d_valid(x, params.kernels[ki]);
      relu_inplace(y);
      return forward_from(spec, params, y, li + 1, ki + 1, tree);
    }
    case LayerKind::Head: {
      TensorT<T> probs = softmax_channels(conv2d_valid(x, params.kernels[ki]));
      if (tree) tree->node = probs;
      return probs;
    }
    case LayerKind::StridedPool: {
      // ordinary information-discarding pool: the (0, 0) window grid only
      TensorT<T> y = shifted_maxpool(x, 0, 0);
      return forward_from(spec, params, y, li + 1, ki, tree);
    }
    case LayerKind::BranchPool: {
      TensorT<T> outs[4];
      const TensorT<T>* ptrs[4];
      if (tree) tree->node = x;
      for (int p = 0; p < 4; ++p) {
        const int py = p >> 1, px = p & 1;
        TensorT<T> child = spec.mode == BranchMode::Decimate
                               ? phase_decimate(x, py, px)
                               : shifted_maxpool(x, py, px);
        FeatureTreeT<T>* ct = nullptr;
        if (tree) {
          tree->children[p] = std::make_unique<FeatureTreeT<T>>();
          ct = tree->children[p].get();
        }
        outs[p] = forward_from(spec, params, child, li + 1, ki, ct);
        ptrs[p] = &outs[p];
      }
      return phase_interleave(ptrs);
    }
  }
  throw std::logic_error("forward_from: unreachable");
}

}  // namespace detail

template <typename T>
DenseOutputT<T> forward_dense(const NetworkSpec& spec, const ParamsT<T>& params,
                              const PaddedImageT<T>& image,
                              FeatureTreeT<T>* tree = nullptr) {
  spec.validate();
  TensorT<T> full = detail::forward_from(spec, params, image.tensor, 0, 0, tree);
  DenseOutputT<T> out;
  out.stride = image.stride;
  if (full.height < image.grid_h || full.width < image.grid_w)
    throw std::logic_error("forward_dense: stitched grid smaller than crop target");
  TensorT<T> cropped(full.channels, image.grid_h, image.grid_w);
  for (int c = 0; c < full.channels; ++c)
    for (int y = 0; y < image.grid_h; ++y)
      for (int x = 0; x < image.grid_w; ++x)
        cropped.at(c, y, x) = full.at(c, y, x);
  out.probs = std::move(cropped);
  return out;
}

// Convenience: pad + dense forward in one call.
template <typename T>
DenseOutputT<T> run_dense(const NetworkSpec& spec, const ParamsT<T>& params,
                          const TensorT<T>& image, T pad_value = T(0)) {
  return forward_dense(spec, params, pad_for_dense(image, spec, pad_value));
}

// ---------------------------------------------------------------------------
// Stitching as a standalone op on a feature tree (leaves hold the maps).

template <typename T>
TensorT<T> stitch(const FeatureTreeT<T>& tree) {
  if (tree.is_leaf()) return tree.node;
  TensorT<T> outs[4];
  const TensorT<T>* ptrs[4];
  for (int p = 0; p < 4; ++p) {
    outs[p] = stitch(*tree.children[p]);
    ptrs[p] = &outs[p];
  }
  return phase_interleave(ptrs);
}

// Repeated four-phase split to the given depth; inverse of stitch.
template <typename T>
FeatureTreeT<T> split_tree(const TensorT<T>& t, int depth) {
  FeatureTreeT<T> node;
  if (depth == 0) {
    node.node = t;
    return node;
  }
  node.node = t;
  for (int p = 0; p < 4; ++p) {
    node.children[p] = std::make_unique<FeatureTreeT<T>>(
        split_tree(phase_decimate(t, p >> 1, p & 1), depth - 1));
  }
  return node;
}

// ---------------------------------------------------------------------------
// Patch-CNN oracle: same convs and head, each branch pool replaced by its
// single-patch counterpart operating on one receptive-field patch.

template <typename T>
TensorT<T> subsample_topleft(const TensorT<T>& in) {
  TensorT<T> out(in.channels, (in.height + 1) / 2, (in.width + 1) / 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.at(c, y, x) = in.at(c, 2 * y, 2 * x);
  return out;
}

template <typename T>
TensorT<T> maxpool2x2(const TensorT<T>& in) {
  if (in.height % 2 != 0 || in.width % 2 != 0)
    throw std::invalid_argument("maxpool2x2: odd extent " + in.shape_str());
  TensorT<T> out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.at(c, y, x) = std::max(
            std::max(in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1)),
            std::max(in.at(c, 2 * y + 1, 2 * x), in.at(c, 2 * y + 1, 2 * x + 1)));
  return out;
}

// The patch net is the same spec re-read: BranchPool acts on a single patch as
// a top-left-phase subsample (Decimate) or a plain 2x2 max pool (ShiftedMax).
struct PatchNetSpec {
  NetworkSpec spec;  // shares layer list and parameter layout with the dense net
  int patch_side = 0;
};

inline PatchNetSpec extract_patch_cnn(const NetworkSpec& spec) {
  PatchNetSpec p;
  p.spec = spec;
  p.patch_side = receptive_field(spec).r;
  return p;
}

template <typename T>
std::vector<T> forward_patch(const PatchNetSpec& pnet, const ParamsT<T>& params,
                             const TensorT<T>& patch) {
  if (patch.height != pnet.patch_side || patch.width != pnet.patch_side)
    throw std::invalid_argument("forward_patch: patch " + patch.shape_str() +
                                " but receptive field is " +
                                std::to_string(pnet.patch_side));
  TensorT<T> x = patch;
  int ki = 0;
  for (const auto& l : pnet.spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        x = conv2d_valid(x, params.kernels[ki++]);
        relu_inplace(x);
        break;
      case LayerKind::Head:
        x = softmax_channels(conv2d_valid(x, params.kernels[ki++]));
        break;
      case LayerKind::BranchPool:
        x = pnet.spec.mode == BranchMode::Decimate ? subsample_topleft(x)
                                                   : maxpool2x2(x);
        break;
      case LayerKind::StridedPool:
        x = maxpool2x2(x);
        break;
    }
  }
  if (x.height != 1 || x.width != 1)
    throw std::logic_error("forward_patch: head output is not 1x1");
  std::vector<T> v(x.data.begin(), x.data.end());
  return v;
}

// ---------------------------------------------------------------------------

struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive pixel bounds
  int center_x() const { return (x0 + x1) / 2; }
  int center_y() const { return (y0 + y1) / 2; }
};

// Argmax over character channels (background excluded) at the box-center grid
// position; ties go to the lowest class id.
template <typename T>
int center_pixel_classify(const DenseOutputT<T>& dense, const Box& box,
                          int image_h, int image_w) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 >= image_w || box.y1 >= image_h ||
      box.x1 < box.x0 || box.y1 < box.y0)
    throw std::invalid_argument("center_pixel_classify: box outside image");
  int gy = (box.center_y() - dense.offset_y + dense.stride / 2) / dense.stride;
  int gx = (box.center_x() - dense.offset_x + dense.stride / 2) / dense.stride;
  gy = std::min(std::max(gy, 0), dense.probs.height - 1);
  gx = std::min(std::max(gx, 0), dense.probs.width - 1);
  int best = 0;
  T bp = dense.probs.at(0, gy, gx);
  for (int c = 1; c < dense.probs.channels - 1; ++c) {
    const T p = dense.probs.at(c, gy, gx);
    if (p > bp) {
      bp = p;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Named reference specs.

inline NetworkSpec make_spec(const std::string& name,
                             BranchMode mode = BranchMode::Decimate) {
  NetworkSpec s;
  s.name = name;
  s.mode = mode;
  if (name == "ref") {
    // r = 15: large enough to see most of a full-height glyph at once
    s.layers = {LayerSpec::conv(3, 8),  LayerSpec::branch_pool(),
                LayerSpec::conv(3, 16), LayerSpec::branch_pool(),
                LayerSpec::conv(3, 24), LayerSpec::head(kNumChannels)};
  } else if (name == "ref-fcn") {
    // single-branch baseline: branch pools replaced by ordinary strided pools
    s.layers = {LayerSpec::conv(3, 8),  LayerSpec::strided_pool(),
                LayerSpec::conv(3, 16), LayerSpec::strided_pool(),
                LayerSpec::conv(3, 24), LayerSpec::head(kNumChannels)};
  } else if (name == "tiny") {
    s.layers = {LayerSpec::conv(3, 4), LayerSpec::branch_pool(),
                LayerSpec::conv(3, 6), LayerSpec::head(kNumChannels)};
  } else if (name == "head-only") {
    s.layers = {LayerSpec::head(kNumChannels)};
  } else {
    throw std::invalid_argument("unknown spec name: " + name);
  }
  s.validate();
  return s;
}

}  // namespace tao
