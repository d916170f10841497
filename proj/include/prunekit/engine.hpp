#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prunekit/dims.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// Node ids whose activations the caller wants back.
using ActivationTap = std::vector<std::string>;

// Channel indices to zero out, per (layer, side) axis. Zeroing is applied as
// a weight overlay: the stored model is never touched.
struct ChannelMask {
  std::map<DimKey, std::set<int>> zeroed;

  bool empty() const { return zeroed.empty(); }

  void add(const DimKey& key, int channel) { zeroed[key].insert(channel); }
};

struct ExecStats {
  std::vector<std::string> executed;  // node ids actually evaluated, in order
};

using ActivationMap = std::map<std::string, Tensor>;

namespace detail {

inline void conv2d_eval(const Tensor& in, const Tensor& w, const Tensor* bias,
                        int stride, int padding, Tensor& out) {
  const int64_t N = in.shape.dims[0], Cin = in.shape.dims[1];
  const int64_t H = in.shape.dims[2], W = in.shape.dims[3];
  const int64_t F = w.shape.dims[0], kh = w.shape.dims[2], kw = w.shape.dims[3];
  const int64_t Ho = out.shape.dims[2], Wo = out.shape.dims[3];
  std::vector<double> acc(static_cast<size_t>(Ho * Wo));
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t f = 0; f < F; ++f) {
      std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias->data[f]) : 0.0);
      for (int64_t c = 0; c < Cin; ++c) {
        const float* in_ch = in.data.data() + ((n * Cin + c) * H) * W;
        const float* w_ch = w.data.data() + ((f * Cin + c) * kh) * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx) {
            const double wv = w_ch[ky * kw + kx];
            // Zero taps contribute exactly zero on finite inputs; skipping
            // them reproduces the summation a physically pruned model does.
            if (wv == 0.0) continue;
            for (int64_t oy = 0; oy < Ho; ++oy) {
              const int64_t y = oy * stride + ky - padding;
              if (y < 0 || y >= H) continue;
              // ox range with ox*stride + kx - padding inside [0, W)
              int64_t lo = 0;
              if (kx < padding) lo = (padding - kx + stride - 1) / stride;
              int64_t hi = Wo;
              {
                const int64_t max_x = W - 1 - kx + padding;
                if (max_x < 0) continue;
                hi = std::min<int64_t>(Wo, max_x / stride + 1);
              }
              const float* src = in_ch + y * W;
              double* dst = acc.data() + oy * Wo;
              for (int64_t ox = lo; ox < hi; ++ox) {
                dst[ox] += wv * src[ox * stride + kx - padding];
              }
            }
          }
        }
      }
      float* out_ch = out.data.data() + ((n * F + f) * Ho) * Wo;
      for (int64_t i = 0; i < Ho * Wo; ++i) out_ch[i] = static_cast<float>(acc[i]);
    }
  }
}

inline void depthwise_eval(const Tensor& in, const Tensor& w, const Tensor* bias,
                           int stride, int padding, Tensor& out) {
  const int64_t N = in.shape.dims[0], C = in.shape.dims[1];
  const int64_t H = in.shape.dims[2], W = in.shape.dims[3];
  const int64_t kh = w.shape.dims[2], kw = w.shape.dims[3];
  const int64_t Ho = out.shape.dims[2], Wo = out.shape.dims[3];
  std::vector<double> acc(static_cast<size_t>(Ho * Wo));
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias->data[c]) : 0.0);
      const float* in_ch = in.data.data() + ((n * C + c) * H) * W;
      const float* w_ch = w.data.data() + (c * kh) * kw;
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          const double wv = w_ch[ky * kw + kx];
          if (wv == 0.0) continue;
          for (int64_t oy = 0; oy < Ho; ++oy) {
            const int64_t y = oy * stride + ky - padding;
            if (y < 0 || y >= H) continue;
            int64_t lo = 0;
            if (kx < padding) lo = (padding - kx + stride - 1) / stride;
            const int64_t max_x = W - 1 - kx + padding;
            if (max_x < 0) continue;
            const int64_t hi = std::min<int64_t>(Wo, max_x / stride + 1);
            const float* src = in_ch + y * W;
            double* dst = acc.data() + oy * Wo;
            for (int64_t ox = lo; ox < hi; ++ox) {
              dst[ox] += wv * src[ox * stride + kx - padding];
            }
          }
        }
      }
      float* out_ch = out.data.data() + ((n * C + c) * Ho) * Wo;
      for (int64_t i = 0; i < Ho * Wo; ++i) out_ch[i] = static_cast<float>(acc[i]);
    }
  }
}

inline void linear_eval(const Tensor& in, const Tensor& w, const Tensor* bias, Tensor& out) {
  const int64_t N = in.shape.dims[0], Cin = in.shape.dims[1];
  const int64_t H = in.shape.dims[2], W = in.shape.dims[3];
  const int64_t F = w.shape.dims[0];
  const int64_t plane = H * W;
  std::vector<double> acc(static_cast<size_t>(plane));
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t f = 0; f < F; ++f) {
      std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias->data[f]) : 0.0);
      for (int64_t c = 0; c < Cin; ++c) {
        const double wv = w.data[f * Cin + c];
        if (wv == 0.0) continue;
        const float* src = in.data.data() + ((n * Cin + c)) * plane;
        for (int64_t i = 0; i < plane; ++i) acc[i] += wv * src[i];
      }
      float* dst = out.data.data() + ((n * F + f)) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(acc[i]);
    }
  }
}

inline void batchnorm_eval(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& var, double eps, Tensor& out) {
  const int64_t N = in.shape.dims[0], C = in.shape.dims[1];
  const int64_t plane = in.shape.dims[2] * in.shape.dims[3];
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double scale = static_cast<double>(gamma.data[c]) /
                           std::sqrt(static_cast<double>(var.data[c]) + eps);
      const double mu = mean.data[c];
      const double shift = beta.data[c];
      const float* src = in.data.data() + (n * C + c) * plane;
      float* dst = out.data.data() + (n * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        dst[i] = static_cast<float>(scale * (static_cast<double>(src[i]) - mu) + shift);
      }
    }
  }
}

inline void pool_eval(const Tensor& in, int kernel, int stride, int padding,
                      bool take_max, Tensor& out) {
  const int64_t N = in.shape.dims[0], C = in.shape.dims[1];
  const int64_t H = in.shape.dims[2], W = in.shape.dims[3];
  const int64_t Ho = out.shape.dims[2], Wo = out.shape.dims[3];
  const double window = static_cast<double>(kernel) * kernel;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const float* src = in.data.data() + (n * C + c) * H * W;
      float* dst = out.data.data() + (n * C + c) * Ho * Wo;
      for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
          const int64_t y0 = oy * stride - padding;
          const int64_t x0 = ox * stride - padding;
          if (take_max) {
            float best = -std::numeric_limits<float>::infinity();
            for (int64_t ky = 0; ky < kernel; ++ky) {
              const int64_t y = y0 + ky;
              if (y < 0 || y >= H) continue;
              for (int64_t kx = 0; kx < kernel; ++kx) {
                const int64_t x = x0 + kx;
                if (x < 0 || x >= W) continue;
                best = std::max(best, src[y * W + x]);
              }
            }
            dst[oy * Wo + ox] = best;
          } else {
            // average counts padded positions as zeros (divisor is k*k)
            double sum = 0.0;
            for (int64_t ky = 0; ky < kernel; ++ky) {
              const int64_t y = y0 + ky;
              if (y < 0 || y >= H) continue;
              for (int64_t kx = 0; kx < kernel; ++kx) {
                const int64_t x = x0 + kx;
                if (x < 0 || x >= W) continue;
                sum += src[y * W + x];
              }
            }
            dst[oy * Wo + ox] = static_cast<float>(sum / window);
          }
        }
      }
    }
  }
}

inline void upsample_eval(const Tensor& in, int factor, Tensor& out) {
  const int64_t N = in.shape.dims[0], C = in.shape.dims[1];
  const int64_t H = in.shape.dims[2], W = in.shape.dims[3];
  const int64_t Ho = out.shape.dims[2], Wo = out.shape.dims[3];
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const float* src = in.data.data() + (n * C + c) * H * W;
      float* dst = out.data.data() + (n * C + c) * Ho * Wo;
      for (int64_t y = 0; y < Ho; ++y) {
        for (int64_t x = 0; x < Wo; ++x) {
          dst[y * Wo + x] = src[(y / factor) * W + (x / factor)];
        }
      }
    }
  }
}

inline void add_eval(const std::vector<const Tensor*>& ins, Tensor& out) {
  const int64_t total = out.shape.elems();
  for (int64_t i = 0; i < total; ++i) {
    double acc = 0.0;
    for (const Tensor* t : ins) acc += t->data[i];
    out.data[i] = static_cast<float>(acc);
  }
}

inline void concat_eval(const std::vector<const Tensor*>& ins, Tensor& out) {
  const int64_t N = out.shape.dims[0], Cout = out.shape.dims[1];
  const int64_t plane = out.shape.dims[2] * out.shape.dims[3];
  for (int64_t n = 0; n < N; ++n) {
    int64_t c_off = 0;
    for (const Tensor* t : ins) {
      const int64_t Ci = t->shape.dims[1];
      const float* src = t->data.data() + n * Ci * plane;
      float* dst = out.data.data() + (n * Cout + c_off) * plane;
      std::copy(src, src + Ci * plane, dst);
      c_off += Ci;
    }
  }
}

// Copy of every param tensor touched by the mask, with the selected slices
// zeroed. Keyed by param name.
inline std::map<std::string, Tensor> masked_params(const ModelGraph& m, const ShapeMap& shapes,
                                                   const ChannelMask& mask) {
  std::map<std::string, Tensor> overlay;
  auto edit = [&](const std::string& name) -> Tensor& {
    auto it = overlay.find(name);
    if (it == overlay.end()) it = overlay.emplace(name, m.param(name)).first;
    return it->second;
  };
  for (const auto& [key, channels] : mask.zeroed) {
    const NodeSpec& n = m.node(key.layer);
    const int64_t extent = key.side == Side::Out ? out_channels(m, shapes, key.layer)
                                                 : in_channels(m, shapes, key.layer);
    for (int c : channels) {
      check(c >= 0 && c < extent, "mask channel " + std::to_string(c) + " out of range for " +
                                      key.str() + " (extent " + std::to_string(extent) + ")");
    }
    switch (n.op) {
      case OpKind::Conv2d: {
        Tensor& w = edit(n.param_ref("weight"));
        const int64_t F = w.shape.dims[0], C = w.shape.dims[1];
        const int64_t k2 = w.shape.dims[2] * w.shape.dims[3];
        if (key.side == Side::Out) {
          for (int f : channels) {
            std::fill_n(w.data.begin() + f * C * k2, C * k2, 0.0f);
          }
          if (n.has_param("bias")) {
            Tensor& b = edit(n.param_ref("bias"));
            for (int f : channels) b.data[f] = 0.0f;
          }
        } else {
          for (int64_t f = 0; f < F; ++f) {
            for (int c : channels) {
              std::fill_n(w.data.begin() + (f * C + c) * k2, k2, 0.0f);
            }
          }
        }
        break;
      }
      case OpKind::DepthwiseConv2d: {
        Tensor& w = edit(n.param_ref("weight"));
        const int64_t k2 = w.shape.dims[2] * w.shape.dims[3];
        for (int c : channels) std::fill_n(w.data.begin() + c * k2, k2, 0.0f);
        if (n.has_param("bias")) {
          Tensor& b = edit(n.param_ref("bias"));
          for (int c : channels) b.data[c] = 0.0f;
        }
        break;
      }
      case OpKind::Linear: {
        Tensor& w = edit(n.param_ref("weight"));
        const int64_t F = w.shape.dims[0], C = w.shape.dims[1];
        if (key.side == Side::Out) {
          for (int f : channels) std::fill_n(w.data.begin() + f * C, C, 0.0f);
          if (n.has_param("bias")) {
            Tensor& b = edit(n.param_ref("bias"));
            for (int f : channels) b.data[f] = 0.0f;
          }
        } else {
          for (int64_t f = 0; f < F; ++f) {
            for (int c : channels) w.data[f * C + c] = 0.0f;
          }
        }
        break;
      }
      case OpKind::BatchNorm: {
        Tensor& g = edit(n.param_ref("gamma"));
        Tensor& b = edit(n.param_ref("beta"));
        for (int c : channels) {
          g.data[c] = 0.0f;
          b.data[c] = 0.0f;
        }
        break;
      }
      default:
        // param-less op: zeroing rides on the producing/consuming layers
        break;
    }
  }
  return overlay;
}

}  // namespace detail

// Forward pass over the subgraph feeding `taps`. With a mask, weight slices
// are zeroed via a copy-on-write overlay. With `base_acts` (activations of
// the same model and batch, unmasked), only nodes downstream of a masked
// layer are recomputed; everything else is served from the cache.
inline ActivationMap forward_masked(const ModelGraph& m, const Tensor& batch,
                                    const ChannelMask& mask, const ActivationTap& taps,
                                    const ActivationMap* base_acts = nullptr,
                                    ExecStats* stats = nullptr) {
  check(batch.shape.rank() == 4, "input batch must have rank 4");
  check(!taps.empty(), "at least one tap is required");
  const TensorShape& decl = m.input_shape;
  for (int axis = 1; axis < 4; ++axis) {
    check(batch.shape.dims[axis] == decl.dims[axis],
          "input batch axis " + std::to_string(axis) + " is " +
              std::to_string(batch.shape.dims[axis]) + ", model declares " +
              std::to_string(decl.dims[axis]));
  }
  for (float v : batch.data) check(std::isfinite(v), "input batch contains non-finite values");

  const ShapeMap shapes = infer_shapes(m);
  for (const std::string& t : taps) {
    check(m.has_node(t), "unknown tap node '" + t + "'");
    // A tap whose own output channels are being zeroed would compare a
    // deleted signal against itself; reject it.
    auto hit = mask.zeroed.find(DimKey{t, Side::Out});
    check(hit == mask.zeroed.end() || hit->second.empty(),
          "mask zeroes the output channels of tap '" + t + "'");
    if (channels_tied(m.node(t).op)) {
      hit = mask.zeroed.find(DimKey{t, Side::In});
      check(hit == mask.zeroed.end() || hit->second.empty(),
            "mask zeroes the (tied) channels of tap '" + t + "'");
    }
  }

  const std::map<std::string, Tensor> overlay = detail::masked_params(m, shapes, mask);

  // Nodes whose parameters changed seed the dirty cone.
  std::set<std::string> dirty;
  if (base_acts != nullptr) {
    std::set<std::string> seeds;
    for (const auto& [key, channels] : mask.zeroed) {
      if (channels.empty()) continue;
      const NodeSpec& n = m.node(key.layer);
      if (n.op == OpKind::Conv2d || n.op == OpKind::DepthwiseConv2d ||
          n.op == OpKind::Linear || n.op == OpKind::BatchNorm) {
        seeds.insert(key.layer);
      }
    }
    const auto consumers = m.consumers();
    std::deque<std::string> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      std::string id = queue.front();
      queue.pop_front();
      if (!dirty.insert(id).second) continue;
      auto it = consumers.find(id);
      if (it == consumers.end()) continue;
      for (const std::string& next : it->second) queue.push_back(next);
    }
  }

  // Walk back from the taps; stop at nodes the cache can serve.
  std::set<std::string> compute, cached;
  {
    std::vector<std::string> stack(taps.begin(), taps.end());
    std::set<std::string> seen;
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (!seen.insert(id).second) continue;
      if (base_acts != nullptr && dirty.count(id) == 0 && base_acts->count(id) != 0) {
        cached.insert(id);
        continue;
      }
      compute.insert(id);
      for (const std::string& in : m.node(id).inputs) stack.push_back(in);
    }
  }

  std::map<std::string, Tensor> owned;
  std::map<std::string, const Tensor*> acts;
  for (const std::string& id : cached) acts[id] = &base_acts->at(id);

  auto param_of = [&](const std::string& name) -> const Tensor& {
    auto it = overlay.find(name);
    return it != overlay.end() ? it->second : m.param(name);
  };

  for (const std::string& id : m.topo_order()) {
    if (compute.count(id) == 0) continue;
    const NodeSpec& n = m.node(id);
    std::vector<const Tensor*> ins;
    ins.reserve(n.inputs.size());
    for (const std::string& in : n.inputs) ins.push_back(acts.at(in));
    Tensor out;
    switch (n.op) {
      case OpKind::Input:
        out = batch;
        break;
      case OpKind::Output:
        out = *ins[0];
        break;
      case OpKind::Conv2d: {
        const Tensor& w = param_of(n.param_ref("weight"));
        const Tensor* b = n.has_param("bias") ? &param_of(n.param_ref("bias")) : nullptr;
        TensorShape os = ins[0]->shape;
        os.dims[1] = w.shape.dims[0];
        os.dims[2] = conv_out_extent(os.dims[2], w.shape.dims[2], n.attrs.stride, n.attrs.padding);
        os.dims[3] = conv_out_extent(os.dims[3], w.shape.dims[3], n.attrs.stride, n.attrs.padding);
        out = Tensor::zeros(os);
        detail::conv2d_eval(*ins[0], w, b, n.attrs.stride, n.attrs.padding, out);
        break;
      }
      case OpKind::DepthwiseConv2d: {
        const Tensor& w = param_of(n.param_ref("weight"));
        const Tensor* b = n.has_param("bias") ? &param_of(n.param_ref("bias")) : nullptr;
        TensorShape os = ins[0]->shape;
        os.dims[2] = conv_out_extent(os.dims[2], w.shape.dims[2], n.attrs.stride, n.attrs.padding);
        os.dims[3] = conv_out_extent(os.dims[3], w.shape.dims[3], n.attrs.stride, n.attrs.padding);
        out = Tensor::zeros(os);
        detail::depthwise_eval(*ins[0], w, b, n.attrs.stride, n.attrs.padding, out);
        break;
      }
      case OpKind::Linear: {
        const Tensor& w = param_of(n.param_ref("weight"));
        const Tensor* b = n.has_param("bias") ? &param_of(n.param_ref("bias")) : nullptr;
        TensorShape os = ins[0]->shape;
        os.dims[1] = w.shape.dims[0];
        out = Tensor::zeros(os);
        detail::linear_eval(*ins[0], w, b, out);
        break;
      }
      case OpKind::BatchNorm: {
        out = Tensor::zeros(ins[0]->shape);
        detail::batchnorm_eval(*ins[0], param_of(n.param_ref("gamma")),
                               param_of(n.param_ref("beta")), param_of(n.param_ref("mean")),
                               param_of(n.param_ref("var")), n.attrs.eps, out);
        break;
      }
      case OpKind::ReLU: {
        out = *ins[0];
        for (float& v : out.data) v = std::max(0.0f, v);
        break;
      }
      case OpKind::Add: {
        out = Tensor::zeros(ins[0]->shape);
        detail::add_eval(ins, out);
        break;
      }
      case OpKind::Concat: {
        TensorShape os = ins[0]->shape;
        int64_t c_sum = 0;
        for (const Tensor* t : ins) c_sum += t->shape.dims[1];
        os.dims[1] = c_sum;
        out = Tensor::zeros(os);
        detail::concat_eval(ins, out);
        break;
      }
      case OpKind::MaxPool:
      case OpKind::AvgPool: {
        TensorShape os = ins[0]->shape;
        os.dims[2] = conv_out_extent(os.dims[2], n.attrs.kernel, n.attrs.stride, n.attrs.padding);
        os.dims[3] = conv_out_extent(os.dims[3], n.attrs.kernel, n.attrs.stride, n.attrs.padding);
        out = Tensor::zeros(os);
        detail::pool_eval(*ins[0], n.attrs.kernel, n.attrs.stride, n.attrs.padding,
                          n.op == OpKind::MaxPool, out);
        break;
      }
      case OpKind::UpsampleNearest: {
        TensorShape os = ins[0]->shape;
        os.dims[2] *= n.attrs.factor;
        os.dims[3] *= n.attrs.factor;
        out = Tensor::zeros(os);
        detail::upsample_eval(*ins[0], n.attrs.factor, out);
        break;
      }
    }
    if (stats != nullptr) stats->executed.push_back(id);
    auto [it, ok] = owned.emplace(id, std::move(out));
    (void)ok;
    acts[id] = &it->second;
  }

  ActivationMap result;
  for (const std::string& t : taps) result.emplace(t, *acts.at(t));
  return result;
}

// Unmasked forward pass returning only the tapped activations.
inline ActivationMap forward_tapped(const ModelGraph& m, const Tensor& batch,
                                    const ActivationTap& taps, ExecStats* stats = nullptr) {
  return forward_masked(m, batch, ChannelMask{}, taps, nullptr, stats);
}

// Full forward pass; returns activations at every Output node.
inline ActivationMap forward(const ModelGraph& m, const Tensor& batch) {
  return forward_tapped(m, batch, m.output_ids());
}

// Activations for every node in the graph, keyed by node id. Used as the
// reuse cache for repeated masked evaluations over one batch.
inline ActivationMap forward_all(const ModelGraph& m, const Tensor& batch) {
  ActivationTap all;
  for (const std::string& id : m.topo_order()) all.push_back(id);
  return forward_masked(m, batch, ChannelMask{}, all, nullptr, nullptr);
}

}  // namespace prunekit
