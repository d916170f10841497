#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "prunekit/error.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

enum class OpKind {
  Input,
  Output,
  Conv2d,
  DepthwiseConv2d,
  Linear,
  BatchNorm,
  ReLU,
  Add,
  Concat,
  MaxPool,
  AvgPool,
  UpsampleNearest,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "Input";
    case OpKind::Output: return "Output";
    case OpKind::Conv2d: return "Conv2d";
    case OpKind::DepthwiseConv2d: return "DepthwiseConv2d";
    case OpKind::Linear: return "Linear";
    case OpKind::BatchNorm: return "BatchNorm";
    case OpKind::ReLU: return "ReLU";
    case OpKind::Add: return "Add";
    case OpKind::Concat: return "Concat";
    case OpKind::MaxPool: return "MaxPool";
    case OpKind::AvgPool: return "AvgPool";
    case OpKind::UpsampleNearest: return "UpsampleNearest";
  }
  fail("bad op kind");
}

inline OpKind parse_op(const std::string& s) {
  static const std::map<std::string, OpKind> table = {
      {"Input", OpKind::Input},
      {"Output", OpKind::Output},
      {"Conv2d", OpKind::Conv2d},
      {"DepthwiseConv2d", OpKind::DepthwiseConv2d},
      {"Linear", OpKind::Linear},
      {"BatchNorm", OpKind::BatchNorm},
      {"ReLU", OpKind::ReLU},
      {"Add", OpKind::Add},
      {"Concat", OpKind::Concat},
      {"MaxPool", OpKind::MaxPool},
      {"AvgPool", OpKind::AvgPool},
      {"UpsampleNearest", OpKind::UpsampleNearest},
  };
  auto it = table.find(s);
  if (it == table.end()) fail("unsupported op kind '" + s + "'");
  return it->second;
}

// Ops whose input and output channel axes are the same axis: pruning one
// side forces the other (depthwise applies one filter per input channel).
inline bool channels_tied(OpKind k) {
  switch (k) {
    case OpKind::BatchNorm:
    case OpKind::ReLU:
    case OpKind::Add:
    case OpKind::Concat:
    case OpKind::MaxPool:
    case OpKind::AvgPool:
    case OpKind::UpsampleNearest:
    case OpKind::DepthwiseConv2d:
      return true;
    default:
      return false;
  }
}

// Op attributes; only the fields an op reads are meaningful.
struct Attrs {
  int stride = 1;    // Conv2d, DepthwiseConv2d, pools
  int padding = 0;   // Conv2d, DepthwiseConv2d, pools
  int kernel = 0;    // pools only (conv kernel comes from the weight shape)
  int factor = 2;    // UpsampleNearest
  int axis = 1;      // Concat; channel axis is the only supported value
  double eps = 1e-5; // BatchNorm

  bool operator==(const Attrs& o) const {
    return stride == o.stride && padding == o.padding && kernel == o.kernel &&
           factor == o.factor && axis == o.axis && eps == o.eps;
  }
};

struct NodeSpec {
  std::string id;
  OpKind op = OpKind::Input;
  Attrs attrs;
  std::map<std::string, std::string> params;  // role -> tensor name
  std::vector<std::string> inputs;            // ordered predecessor node ids

  bool has_param(const std::string& role) const { return params.count(role) != 0; }
  const std::string& param_ref(const std::string& role) const {
    auto it = params.find(role);
    if (it == params.end()) fail("node '" + id + "' has no param role '" + role + "'");
    return it->second;
  }
};

// Immutable-after-validation computational graph plus its parameter store.
// Node order is the container order; param_order is the weights blob order.
struct ModelGraph {
  std::vector<NodeSpec> nodes;
  std::map<std::string, Tensor> params;
  std::vector<std::string> param_order;
  TensorShape input_shape;

  bool has_node(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id == id) return true;
    return false;
  }

  const NodeSpec& node(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id == id) return n;
    fail("unknown node '" + id + "'");
  }

  NodeSpec& node(const std::string& id) {
    for (auto& n : nodes)
      if (n.id == id) return n;
    fail("unknown node '" + id + "'");
  }

  const Tensor& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) fail("unknown param '" + name + "'");
    return it->second;
  }

  Tensor& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) fail("unknown param '" + name + "'");
    return it->second;
  }

  const NodeSpec& input_node() const {
    for (const auto& n : nodes)
      if (n.op == OpKind::Input) return n;
    fail("model has no Input node");
  }

  std::vector<std::string> output_ids() const {
    std::vector<std::string> out;
    for (const auto& n : nodes)
      if (n.op == OpKind::Output) out.push_back(n.id);
    return out;
  }

  // consumer adjacency: node id -> ids that read it, in node order
  std::map<std::string, std::vector<std::string>> consumers() const {
    std::map<std::string, std::vector<std::string>> m;
    for (const auto& n : nodes) m[n.id];  // ensure every node has an entry
    for (const auto& n : nodes)
      for (const auto& in : n.inputs) m[in].push_back(n.id);
    return m;
  }

  // Deterministic topological order (Kahn; ready nodes taken in container
  // order). Throws with an offending node id if a cycle exists.
  std::vector<std::string> topo_order() const {
    std::unordered_map<std::string, int> pending;
    for (const auto& n : nodes) pending[n.id] = static_cast<int>(n.inputs.size());
    auto cons = consumers();
    std::vector<std::string> order;
    order.reserve(nodes.size());
    std::vector<char> emitted(nodes.size(), 0);
    bool progress = true;
    while (progress) {
      progress = false;
      for (size_t i = 0; i < nodes.size(); ++i) {
        if (emitted[i] || pending[nodes[i].id] != 0) continue;
        emitted[i] = 1;
        order.push_back(nodes[i].id);
        for (const auto& c : cons[nodes[i].id]) pending[c]--;
        progress = true;
      }
    }
    if (order.size() != nodes.size()) {
      for (size_t i = 0; i < nodes.size(); ++i)
        if (!emitted[i]) fail("cycle detected involving node '" + nodes[i].id + "'");
    }
    return order;
  }

  // Structure-only checks; validate() in shapes.hpp adds shape inference.
  void validate_structure() const {
    check(!nodes.empty(), "model has no nodes");
    std::set<std::string> ids;
    int n_input = 0, n_output = 0;
    for (const auto& n : nodes) {
      check(!n.id.empty(), "node with empty id");
      check(ids.insert(n.id).second, "duplicate node id '" + n.id + "'");
      if (n.op == OpKind::Input) n_input++;
      if (n.op == OpKind::Output) n_output++;
    }
    check(n_input == 1, "model must have exactly one Input node");
    check(n_output >= 1, "model must have at least one Output node");

    input_shape.validate("declared input shape");
    check(input_shape.rank() == 4, "declared input shape must be rank 4, got " + input_shape.str());

    for (const auto& n : nodes) {
      for (const auto& in : n.inputs)
        check(ids.count(in) != 0, "node '" + n.id + "' references unknown input '" + in + "'");
      validate_node_arity(n);
      validate_node_params(n);
    }

    topo_order();  // throws on cycles

    auto cons = consumers();
    for (const auto& n : nodes) {
      if (n.op == OpKind::Output)
        check(cons[n.id].empty(), "Output node '" + n.id + "' must not feed other nodes");
      else
        check(!cons[n.id].empty(), "dangling node '" + n.id + "' has no consumers");
    }
  }

 private:
  void validate_node_arity(const NodeSpec& n) const {
    size_t k = n.inputs.size();
    switch (n.op) {
      case OpKind::Input:
        check(k == 0, "Input node '" + n.id + "' must have no inputs");
        break;
      case OpKind::Add:
      case OpKind::Concat:
        check(k >= 2, std::string(op_name(n.op)) + " node '" + n.id + "' needs >= 2 inputs");
        break;
      default:
        check(k == 1, std::string(op_name(n.op)) + " node '" + n.id + "' needs exactly 1 input");
        break;
    }
    if (n.op == OpKind::Concat)
      check(n.attrs.axis == 1, "Concat node '" + n.id + "' must concatenate on the channel axis");
    if (n.op == OpKind::UpsampleNearest)
      check(n.attrs.factor >= 1, "UpsampleNearest node '" + n.id + "' needs factor >= 1");
    if (n.op == OpKind::MaxPool || n.op == OpKind::AvgPool)
      check(n.attrs.kernel >= 1, std::string(op_name(n.op)) + " node '" + n.id + "' needs kernel >= 1");
    if (n.op == OpKind::Conv2d || n.op == OpKind::DepthwiseConv2d ||
        n.op == OpKind::MaxPool || n.op == OpKind::AvgPool) {
      check(n.attrs.stride >= 1, "node '" + n.id + "' needs stride >= 1");
      check(n.attrs.padding >= 0, "node '" + n.id + "' needs padding >= 0");
    }
    if (n.op == OpKind::BatchNorm)
      check(n.attrs.eps > 0.0, "BatchNorm node '" + n.id + "' needs eps > 0");
  }

  void validate_node_params(const NodeSpec& n) const {
    auto resolve = [&](const std::string& role) -> const Tensor& {
      const std::string& name = n.param_ref(role);
      auto it = params.find(name);
      if (it == params.end())
        fail("node '" + n.id + "': dangling param ref '" + name + "' (role " + role + ")");
      return it->second;
    };
    auto no_params = [&]() {
      check(n.params.empty(), "node '" + n.id + "' (" + op_name(n.op) + ") takes no params");
    };
    switch (n.op) {
      case OpKind::Conv2d: {
        check(n.has_param("weight"), "Conv2d node '" + n.id + "' needs a weight ref");
        const Tensor& w = resolve("weight");
        check(w.shape.rank() == 4,
              "node '" + n.id + "': conv weight must be rank 4 (out,in,kh,kw), got " + w.shape.str());
        if (n.has_param("bias")) {
          const Tensor& b = resolve("bias");
          check(b.shape.rank() == 1 && b.shape[0] == w.shape[0],
                "node '" + n.id + "': bias length must equal out channels");
        }
        break;
      }
      case OpKind::DepthwiseConv2d: {
        check(n.has_param("weight"), "DepthwiseConv2d node '" + n.id + "' needs a weight ref");
        const Tensor& w = resolve("weight");
        check(w.shape.rank() == 4 && w.shape[1] == 1,
              "node '" + n.id + "': depthwise weight must be (C,1,kh,kw), got " + w.shape.str());
        if (n.has_param("bias")) {
          const Tensor& b = resolve("bias");
          check(b.shape.rank() == 1 && b.shape[0] == w.shape[0],
                "node '" + n.id + "': bias length must equal channel count");
        }
        break;
      }
      case OpKind::Linear: {
        check(n.has_param("weight"), "Linear node '" + n.id + "' needs a weight ref");
        const Tensor& w = resolve("weight");
        check(w.shape.rank() == 2,
              "node '" + n.id + "': linear weight must be rank 2 (out,in), got " + w.shape.str());
        if (n.has_param("bias")) {
          const Tensor& b = resolve("bias");
          check(b.shape.rank() == 1 && b.shape[0] == w.shape[0],
                "node '" + n.id + "': bias length must equal out features");
        }
        break;
      }
      case OpKind::BatchNorm: {
        int64_t c = -1;
        for (const char* role : {"gamma", "beta", "mean", "var"}) {
          check(n.has_param(role),
                "BatchNorm node '" + n.id + "' needs a " + std::string(role) + " ref");
          const Tensor& t = resolve(role);
          check(t.shape.rank() == 1,
                "node '" + n.id + "': BatchNorm " + std::string(role) + " must be rank 1");
          if (c < 0) c = t.shape[0];
          check(t.shape[0] == c,
                "node '" + n.id + "': BatchNorm param lengths disagree");
        }
        break;
      }
      default:
        no_params();
        break;
    }
  }
};

}  // namespace prunekit
