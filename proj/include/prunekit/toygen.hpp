#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "prunekit/error.hpp"
#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// Seeded normal sampler on top of mt19937_64 with an explicit Box-Muller
// transform, so streams do not depend on the standard library's
// distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class BlockKind { Plain, Residual, Concat, Depthwise, DownUp };

inline std::string block_name(BlockKind b) {
  switch (b) {
    case BlockKind::Plain: return "plain";
    case BlockKind::Residual: return "residual";
    case BlockKind::Concat: return "concat";
    case BlockKind::Depthwise: return "depthwise";
    case BlockKind::DownUp: return "downup";
  }
  fail("bad block kind");
}

inline BlockKind parse_block(const std::string& s) {
  if (s == "plain") return BlockKind::Plain;
  if (s == "residual") return BlockKind::Residual;
  if (s == "concat") return BlockKind::Concat;
  if (s == "depthwise") return BlockKind::Depthwise;
  if (s == "downup") return BlockKind::DownUp;
  fail("unknown block kind '" + s + "' (expected plain, residual, concat, depthwise, downup)");
}

struct ToySpec {
  uint64_t seed = 1;
  int64_t width = 16;
  int64_t in_channels = 3;
  int64_t in_size = 16;
  std::vector<BlockKind> blocks{BlockKind::Plain};
  int64_t calib_batch = 2;
  int64_t val_batch = 2;
};

inline Tensor gen_batch(const TensorShape& shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(shape);
  for (float& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

namespace detail {

struct ToyBuilder {
  ModelGraph& m;
  Rng& rng;

  void node(const std::string& id, OpKind op, std::vector<std::string> inputs,
            Attrs attrs = Attrs{}) {
    NodeSpec n;
    n.id = id;
    n.op = op;
    n.attrs = attrs;
    n.inputs = std::move(inputs);
    m.nodes.push_back(std::move(n));
  }

  void param(const std::string& node_id, const std::string& role, Tensor t) {
    const std::string name = node_id + "." + role;
    m.node(node_id).params[role] = name;
    m.params[name] = std::move(t);
    m.param_order.push_back(name);
  }

  Tensor he_weight(int64_t out_c, int64_t in_c, int64_t k) {
    Tensor w = Tensor::zeros(TensorShape{{out_c, in_c, k, k}});
    const double std = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
    for (float& v : w.data) v = static_cast<float>(std * rng.normal());
    return w;
  }

  Tensor small_bias(int64_t n) {
    Tensor b = Tensor::zeros(TensorShape{{n}});
    for (float& v : b.data) v = static_cast<float>(0.01 * rng.normal());
    return b;
  }

  // in -> conv(k, stride, pad) -> id
  std::string conv(const std::string& id, const std::string& in, int64_t in_c, int64_t out_c,
                   int k, int stride = 1, int padding = 0) {
    Attrs a;
    a.stride = stride;
    a.padding = padding;
    node(id, OpKind::Conv2d, {in}, a);
    param(id, "weight", he_weight(out_c, in_c, k));
    param(id, "bias", small_bias(out_c));
    return id;
  }

  std::string dwconv(const std::string& id, const std::string& in, int64_t channels, int k,
                     int padding) {
    Attrs a;
    a.padding = padding;
    node(id, OpKind::DepthwiseConv2d, {in}, a);
    Tensor w = Tensor::zeros(TensorShape{{channels, 1, k, k}});
    const double std = std::sqrt(2.0 / static_cast<double>(k * k));
    for (float& v : w.data) v = static_cast<float>(std * rng.normal());
    param(id, "weight", std::move(w));
    param(id, "bias", small_bias(channels));
    return id;
  }

  std::string bn(const std::string& id, const std::string& in, int64_t channels) {
    node(id, OpKind::BatchNorm, {in});
    Tensor g = Tensor::zeros(TensorShape{{channels}});
    Tensor b = Tensor::zeros(TensorShape{{channels}});
    Tensor mu = Tensor::zeros(TensorShape{{channels}});
    Tensor var = Tensor::zeros(TensorShape{{channels}});
    for (int64_t i = 0; i < channels; ++i) {
      g.data[i] = static_cast<float>(1.0 + 0.1 * rng.normal());
      b.data[i] = static_cast<float>(0.05 * rng.normal());
      mu.data[i] = static_cast<float>(0.01 * rng.normal());
      var.data[i] = static_cast<float>(1.0 + 0.1 * std::abs(rng.normal()));
    }
    param(id, "gamma", std::move(g));
    param(id, "beta", std::move(b));
    param(id, "mean", std::move(mu));
    param(id, "var", std::move(var));
    return id;
  }

  std::string relu(const std::string& id, const std::string& in) {
    node(id, OpKind::ReLU, {in});
    return id;
  }
};

}  // namespace detail

// Stem conv + one sub-graph per requested block + a 1x1 head, all at a fixed
// channel width. Residual, concat, depthwise, and down/upsample blocks mirror
// the coupling patterns of multi-scale aggregation nets at toy size.
inline ModelGraph gen_toy_model(const ToySpec& spec) {
  check(spec.width >= 2, "width must be >= 2");
  check(spec.in_channels >= 1, "input channels must be >= 1");
  check(spec.in_size >= 4, "input size must be >= 4");
  check(!spec.blocks.empty(), "at least one block is required");
  for (BlockKind b : spec.blocks) {
    if (b == BlockKind::DownUp) {
      check(spec.in_size % 2 == 0, "downup blocks need an even input size");
    }
  }

  ModelGraph m;
  m.input_shape = TensorShape{{1, spec.in_channels, spec.in_size, spec.in_size}};
  Rng rng(spec.seed);
  detail::ToyBuilder b{m, rng};
  const int64_t w = spec.width;

  b.node("input", OpKind::Input, {});
  std::string cur = b.conv("stem", "input", spec.in_channels, w, 3, 1, 1);
  cur = b.bn("stem_bn", cur, w);
  cur = b.relu("stem_relu", cur);

  int downup_seen = 0;
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const std::string p = "b" + std::to_string(i + 1) + "_";
    switch (spec.blocks[i]) {
      case BlockKind::Plain: {
        cur = b.conv(p + "conv", cur, w, w, 3, 1, 1);
        cur = b.bn(p + "bn", cur, w);
        cur = b.relu(p + "relu", cur);
        break;
      }
      case BlockKind::Residual: {
        const std::string skip = cur;
        cur = b.conv(p + "conv1", cur, w, w, 3, 1, 1);
        cur = b.bn(p + "bn1", cur, w);
        cur = b.relu(p + "relu1", cur);
        cur = b.conv(p + "conv2", cur, w, w, 3, 1, 1);
        cur = b.bn(p + "bn2", cur, w);
        b.node(p + "add", OpKind::Add, {skip, cur});
        cur = b.relu(p + "relu2", p + "add");
        break;
      }
      case BlockKind::Concat: {
        const int64_t wa = (w + 1) / 2;
        const int64_t wb = w - wa;
        const std::string a = b.conv(p + "conv_a", cur, w, wa, 3, 1, 1);
        const std::string bb = b.conv(p + "conv_b", cur, w, wb, 1, 1, 0);
        b.node(p + "cat", OpKind::Concat, {a, bb});
        cur = b.conv(p + "mix", p + "cat", w, w, 1, 1, 0);
        cur = b.relu(p + "relu", cur);
        break;
      }
      case BlockKind::Depthwise: {
        cur = b.dwconv(p + "dw", cur, w, 3, 1);
        cur = b.bn(p + "bn", cur, w);
        cur = b.relu(p + "relu", cur);
        cur = b.conv(p + "pw", cur, w, w, 1, 1, 0);
        cur = b.relu(p + "relu2", cur);
        break;
      }
      case BlockKind::DownUp: {
        Attrs pool;
        pool.kernel = 2;
        pool.stride = 2;
        // alternate the pooling flavor between occurrences
        b.node(p + "pool", downup_seen % 2 == 0 ? OpKind::MaxPool : OpKind::AvgPool, {cur}, pool);
        ++downup_seen;
        cur = b.conv(p + "conv", p + "pool", w, w, 3, 1, 1);
        cur = b.bn(p + "bn", cur, w);
        cur = b.relu(p + "relu", cur);
        Attrs up;
        up.factor = 2;
        b.node(p + "up", OpKind::UpsampleNearest, {cur}, up);
        cur = b.conv(p + "post", p + "up", w, w, 1, 1, 0);
        cur = b.relu(p + "relu2", cur);
        break;
      }
    }
  }

  const int64_t head_out = std::max<int64_t>(2, w / 4);
  cur = b.conv("head", cur, w, head_out, 1, 1, 0);
  b.node("out", OpKind::Output, {cur});

  validate(m);
  return m;
}

}  // namespace prunekit
