// Shared fixtures and independently coded oracles for the test suite.
// The oracles deliberately avoid the production data structures: closure is a
// channel-level BFS (no union-find), gates come from a full reachability
// matrix, and the reference greedy rescans every candidate from scratch.

#pragma once

#include <prunekit/prunekit.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace fixtures {

using namespace prunekit;

inline Tensor patterned(const TensorShape& shape, double scale, int phase) {
  Tensor t = Tensor::zeros(shape);
  for (size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = static_cast<float>(scale * std::sin(0.7 * static_cast<double>(i + phase) + 0.3));
  }
  return t;
}

struct Builder {
  ModelGraph m;
  int phase = 1;

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

  void conv(const std::string& id, const std::string& input, int64_t in_c, int64_t out_c,
            int64_t k, int stride = 1, int padding = 0) {
    Attrs a;
    a.kernel = static_cast<int>(k);
    a.stride = stride;
    a.padding = padding;
    node(id, OpKind::Conv2d, {input}, a);
    param(id, "weight", patterned(TensorShape{{out_c, in_c, k, k}}, 0.5, phase++));
    param(id, "bias", patterned(TensorShape{{out_c}}, 0.1, phase++));
  }

  void dwconv(const std::string& id, const std::string& input, int64_t c, int64_t k,
              int stride = 1, int padding = 0) {
    Attrs a;
    a.kernel = static_cast<int>(k);
    a.stride = stride;
    a.padding = padding;
    node(id, OpKind::DepthwiseConv2d, {input}, a);
    param(id, "weight", patterned(TensorShape{{c, 1, k, k}}, 0.5, phase++));
    param(id, "bias", patterned(TensorShape{{c}}, 0.1, phase++));
  }

  void bn(const std::string& id, const std::string& input, int64_t c) {
    node(id, OpKind::BatchNorm, {input});
    Tensor gamma = Tensor::zeros(TensorShape{{c}});
    Tensor beta = patterned(TensorShape{{c}}, 0.05, phase++);
    Tensor mean = patterned(TensorShape{{c}}, 0.01, phase++);
    Tensor var = Tensor::zeros(TensorShape{{c}});
    for (int64_t i = 0; i < c; ++i) {
      gamma.data[i] = 1.0f + 0.1f * static_cast<float>(i % 5);
      var.data[i] = 1.0f + 0.2f * static_cast<float>(i % 3);
    }
    param(id, "gamma", std::move(gamma));
    param(id, "beta", std::move(beta));
    param(id, "mean", std::move(mean));
    param(id, "var", std::move(var));
  }
};

// input -> conv1 (3->8) -> conv2 (8->4) -> out. One group, gate {conv2}.
inline ModelGraph chain() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("conv1", "input", 3, 8, 3, 1, 1);
  b.conv("conv2", "conv1", 8, 4, 3, 1, 1);
  b.node("out", OpKind::Output, {"conv2"});
  validate(b.m);
  return b.m;
}

// Branchy fixture: l1 conv -> l2 bn -> l3 relu -> {l4 conv, l5 dwconv} ->
// l6 add -> l7 relu -> l8 conv -> out. The add folds l4:out into the group
// of l4:in, so the whole middle couples together and l8 is the only gate.
inline ModelGraph fig2() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("l1", "input", 3, 8, 3, 1, 1);
  b.bn("l2", "l1", 8);
  b.node("l3", OpKind::ReLU, {"l2"});
  b.conv("l4", "l3", 8, 8, 3, 1, 1);
  b.dwconv("l5", "l3", 8, 3, 1, 1);
  b.node("l6", OpKind::Add, {"l4", "l5"});
  b.node("l7", OpKind::ReLU, {"l6"});
  b.conv("l8", "l7", 8, 4, 3, 1, 1);
  b.node("out", OpKind::Output, {"l8"});
  validate(b.m);
  return b.m;
}

// One producer feeding two independent consumers, each with its own output.
inline ModelGraph parallel() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("c1", "input", 3, 6, 3, 1, 1);
  b.conv("c2", "c1", 6, 4, 3, 1, 1);
  b.conv("c3", "c1", 6, 4, 1);
  b.node("out1", OpKind::Output, {"c2"});
  b.node("out2", OpKind::Output, {"c3"});
  validate(b.m);
  return b.m;
}

// Two branches of different widths concatenated, then mixed by a 1x1 conv.
inline ModelGraph concat_mix() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("a", "input", 3, 4, 3, 1, 1);
  b.conv("bb", "input", 3, 3, 3, 1, 1);
  b.node("cat", OpKind::Concat, {"a", "bb"});
  b.conv("mix", "cat", 7, 5, 1);
  b.node("out", OpKind::Output, {"mix"});
  validate(b.m);
  return b.m;
}

// Residual: c0 -> c1 -> add(c1, c0) -> c2 -> out.
inline ModelGraph residual() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("c0", "input", 3, 8, 3, 1, 1);
  b.conv("c1", "c0", 8, 8, 3, 1, 1);
  b.node("add", OpKind::Add, {"c1", "c0"});
  b.conv("c2", "add", 8, 4, 3, 1, 1);
  b.node("out", OpKind::Output, {"c2"});
  validate(b.m);
  return b.m;
}

// Depthwise conv between two regular convs; dw ties its input to its output.
inline ModelGraph depthwise_mid() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("c1", "input", 3, 6, 3, 1, 1);
  b.dwconv("dw", "c1", 6, 3, 1, 1);
  b.conv("c2", "dw", 6, 4, 3, 1, 1);
  b.node("out", OpKind::Output, {"c2"});
  validate(b.m);
  return b.m;
}

// Hand-checkable 1x1 pair on a 1x1x1x1 input of ones. convP maps x -> (x, x);
// convG has weights [1, 2], so its output is 3x. Removing channel 1 of
// convP:out drops the contribution 2x, leaving x: squared error (3-1)^2 = 4.
inline ModelGraph anchor11() {
  Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 1, 1, 1}};
  b.node("convP", OpKind::Conv2d, {"input"}, [] {
    Attrs a;
    a.kernel = 1;
    return a;
  }());
  {
    Tensor w = Tensor::zeros(TensorShape{{2, 1, 1, 1}});
    w.data = {1.0f, 1.0f};
    b.param("convP", "weight", std::move(w));
  }
  b.node("convG", OpKind::Conv2d, {"convP"}, [] {
    Attrs a;
    a.kernel = 1;
    return a;
  }());
  {
    Tensor w = Tensor::zeros(TensorShape{{1, 2, 1, 1}});
    w.data = {1.0f, 2.0f};
    b.param("convG", "weight", std::move(w));
  }
  b.node("out", OpKind::Output, {"convG"});
  validate(b.m);
  return b.m;
}

inline Tensor ones(const TensorShape& shape) {
  Tensor t = Tensor::zeros(shape);
  for (float& v : t.data) v = 1.0f;
  return t;
}

}  // namespace fixtures

namespace oracles {

using namespace prunekit;

using ChanRef = std::pair<DimKey, int64_t>;

// Channel-level coupling closure by plain BFS over the rule table. Returns
// every (axis, channel) forced by pruning `root_ch` of `root`, including the
// seed itself. Interface axes (Input:out, Output:in) are reported if reached.
inline std::set<ChanRef> closure(const ModelGraph& m, const DimKey& root, int64_t root_ch) {
  const ShapeMap shapes = infer_shapes(m);

  auto out_ch = [&](const std::string& id) { return shapes.at(id).dims[1]; };

  // concat input offset: sum of the channel counts of earlier inputs
  auto concat_offset = [&](const NodeSpec& n, size_t pos) {
    int64_t off = 0;
    for (size_t i = 0; i < pos; ++i) off += out_ch(n.inputs[i]);
    return off;
  };

  std::set<ChanRef> seen;
  std::vector<ChanRef> queue{{root, root_ch}};
  seen.insert(queue[0]);

  while (!queue.empty()) {
    auto [key, ch] = queue.back();
    queue.pop_back();
    const NodeSpec& node = m.node(key.layer);

    std::vector<ChanRef> next;

    if (channels_tied(node.op)) {
      next.push_back({DimKey(key.layer, key.side == Side::In ? Side::Out : Side::In), ch});
    }

    if (key.side == Side::Out) {
      // producer out channel couples every consumer's matching in channel
      for (const NodeSpec& n : m.nodes) {
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          if (n.inputs[i] != key.layer) continue;
          const int64_t off = n.op == OpKind::Concat ? concat_offset(n, i) : 0;
          next.push_back({DimKey(n.id, Side::In), ch + off});
        }
      }
    } else {
      // consumer in channel couples back to the producing slice
      if (node.op != OpKind::Input) {
        if (node.op == OpKind::Concat) {
          int64_t off = 0;
          for (const std::string& in : node.inputs) {
            const int64_t w = out_ch(in);
            if (ch >= off && ch < off + w) {
              next.push_back({DimKey(in, Side::Out), ch - off});
              break;
            }
            off += w;
          }
        } else {
          for (const std::string& in : node.inputs) {
            next.push_back({DimKey(in, Side::Out), ch});
          }
        }
      }
    }

    for (const ChanRef& r : next) {
      if (seen.insert(r).second) queue.push_back(r);
    }
  }
  return seen;
}

// Expected closure of a group at one root channel, from its index maps.
inline std::set<ChanRef> group_slice(const PruningGroup& g, int64_t root_ch) {
  std::set<ChanRef> out;
  for (const GroupMember& mem : g.members) {
    const int64_t c = mem.map.apply(root_ch);
    if (c >= 0) out.insert({mem.key, c});
  }
  return out;
}

// Gate oracle: member layers from which no other member layer is reachable,
// using a per-layer DFS over consumer edges rebuilt from scratch.
inline std::set<std::string> gates(const ModelGraph& m, const PruningGroup& g) {
  std::set<std::string> members;
  for (const GroupMember& mem : g.members) members.insert(mem.key.layer);

  std::map<std::string, std::vector<std::string>> next;
  for (const NodeSpec& n : m.nodes) {
    for (const std::string& in : n.inputs) next[in].push_back(n.id);
  }

  auto reaches_member = [&](const std::string& start) {
    std::set<std::string> seen;
    std::vector<std::string> stack = next.count(start) ? next.at(start) : std::vector<std::string>{};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      if (members.count(cur)) return true;
      if (next.count(cur)) {
        for (const std::string& c : next.at(cur)) stack.push_back(c);
      }
    }
    return false;
  };

  std::set<std::string> out;
  for (const std::string& layer : members) {
    if (!reaches_member(layer)) out.insert(layer);
  }
  return out;
}

// Reconstruction error rewritten from its definition: squared deviation at
// the gates between reference activations and a masked pass, whole tensors.
inline double score(const ModelGraph& m, const PruningGroup& g,
                    const std::vector<std::string>& gate_ids,
                    const std::vector<int64_t>& removed, const Tensor& calib,
                    const ActivationMap& reference, Aggregation agg) {
  ChannelMask mask;
  for (int64_t r : removed) {
    for (const GroupMember& mem : g.members) {
      const int64_t c = mem.map.apply(r);
      if (c >= 0) mask.add(mem.key, static_cast<int>(c));
    }
  }
  const ActivationMap got = forward_masked(m, calib, mask, gate_ids);

  std::vector<double> per;
  for (const std::string& gid : gate_ids) {
    const Tensor& a = reference.at(gid);
    const Tensor& b = got.at(gid);
    double sq = 0.0, energy = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
      const double rv = a.data[i];
      const double d = rv - static_cast<double>(b.data[i]);
      sq += d * d;
      energy += rv * rv;
    }
    per.push_back(sq / (energy + 1e-12));
  }
  double v = 0.0;
  if (agg == Aggregation::Max) {
    v = *std::max_element(per.begin(), per.end());
  } else {
    for (double x : per) v += x;
    if (agg == Aggregation::Mean) v /= static_cast<double>(per.size());
  }
  return v;
}

struct GreedyStep {
  int64_t channel = -1;
  double score = 0.0;
};

// Reference greedy: no caching, no incremental state; rescans every remaining
// candidate at every step and keeps the first strict minimum.
inline std::vector<GreedyStep> greedy(const ModelGraph& m, const PruningGroup& g, int64_t k,
                                      const Tensor& calib, Aggregation agg) {
  const std::set<std::string> gset = gates(m, g);
  std::vector<std::string> gate_ids;  // topo order, so gate folds sum in the same order
  for (const std::string& id : m.topo_order()) {
    if (gset.count(id)) gate_ids.push_back(id);
  }
  const ActivationMap reference = forward_tapped(m, calib, gate_ids);

  std::vector<int64_t> removed;
  std::vector<GreedyStep> out;
  for (int64_t step = 0; step < k; ++step) {
    GreedyStep best;
    for (int64_t c = 0; c < g.extent; ++c) {
      if (std::find(removed.begin(), removed.end(), c) != removed.end()) continue;
      std::vector<int64_t> trial = removed;
      trial.push_back(c);
      const double s = score(m, g, gate_ids, trial, calib, reference, agg);
      if (best.channel < 0 || s < best.score) {
        best.channel = c;
        best.score = s;
      }
    }
    removed.push_back(best.channel);
    out.push_back(best);
  }
  return out;
}

}  // namespace oracles
