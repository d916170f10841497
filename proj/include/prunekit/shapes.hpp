#pragma once

#include <map>
#include <string>

#include "prunekit/model.hpp"

namespace prunekit {

using ShapeMap = std::map<std::string, TensorShape>;

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Deterministic full-graph shape inference; throws with the offending node id.
inline ShapeMap infer_shapes(const ModelGraph& m) {
  ShapeMap shapes;
  auto at = [&](const std::string& id) -> const TensorShape& { return shapes.at(id); };

  for (const auto& id : m.topo_order()) {
    const NodeSpec& n = m.node(id);
    auto err = [&](const std::string& msg) -> TensorShape {
      fail("shape inference at node '" + id + "': " + msg);
    };
    TensorShape out;
    switch (n.op) {
      case OpKind::Input:
        out = m.input_shape;
        break;
      case OpKind::Output:
        out = at(n.inputs[0]);
        break;
      case OpKind::Conv2d: {
        const TensorShape& in = at(n.inputs[0]);
        const Tensor& w = m.param(n.param_ref("weight"));
        if (in.rank() != 4) out = err("activation must be rank 4, got " + in.str());
        if (w.shape[1] != in[1])
          out = err("weight expects " + std::to_string(w.shape[1]) + " input channels, producer has " +
                    std::to_string(in[1]));
        int64_t ho = conv_out_extent(in[2], w.shape[2], n.attrs.stride, n.attrs.padding);
        int64_t wo = conv_out_extent(in[3], w.shape[3], n.attrs.stride, n.attrs.padding);
        if (ho < 1 || wo < 1) out = err("kernel larger than padded input");
        out = TensorShape{in[0], w.shape[0], ho, wo};
        break;
      }
      case OpKind::DepthwiseConv2d: {
        const TensorShape& in = at(n.inputs[0]);
        const Tensor& w = m.param(n.param_ref("weight"));
        if (w.shape[0] != in[1])
          out = err("depthwise weight has " + std::to_string(w.shape[0]) + " channels, producer has " +
                    std::to_string(in[1]));
        int64_t ho = conv_out_extent(in[2], w.shape[2], n.attrs.stride, n.attrs.padding);
        int64_t wo = conv_out_extent(in[3], w.shape[3], n.attrs.stride, n.attrs.padding);
        if (ho < 1 || wo < 1) out = err("kernel larger than padded input");
        out = TensorShape{in[0], in[1], ho, wo};
        break;
      }
      case OpKind::Linear: {
        const TensorShape& in = at(n.inputs[0]);
        const Tensor& w = m.param(n.param_ref("weight"));
        if (w.shape[1] != in[1])
          out = err("linear weight expects " + std::to_string(w.shape[1]) + " channels, producer has " +
                    std::to_string(in[1]));
        out = TensorShape{in[0], w.shape[0], in[2], in[3]};
        break;
      }
      case OpKind::BatchNorm: {
        const TensorShape& in = at(n.inputs[0]);
        const Tensor& g = m.param(n.param_ref("gamma"));
        if (g.shape[0] != in[1])
          out = err("BatchNorm over " + std::to_string(g.shape[0]) + " channels, producer has " +
                    std::to_string(in[1]));
        out = in;
        break;
      }
      case OpKind::ReLU:
        out = at(n.inputs[0]);
        break;
      case OpKind::Add: {
        const TensorShape& first = at(n.inputs[0]);
        for (const auto& in_id : n.inputs) {
          const TensorShape& s = at(in_id);
          if (s[1] != first[1]) out = err("channel mismatch: " + s.str() + " vs " + first.str());
          if (s != first) out = err("spatial mismatch: " + s.str() + " vs " + first.str());
        }
        out = first;
        break;
      }
      case OpKind::Concat: {
        const TensorShape& first = at(n.inputs[0]);
        int64_t channels = 0;
        for (const auto& in_id : n.inputs) {
          const TensorShape& s = at(in_id);
          if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
            out = err("spatial mismatch: " + s.str() + " vs " + first.str());
          channels += s[1];
        }
        out = TensorShape{first[0], channels, first[2], first[3]};
        break;
      }
      case OpKind::MaxPool:
      case OpKind::AvgPool: {
        const TensorShape& in = at(n.inputs[0]);
        int64_t ho = conv_out_extent(in[2], n.attrs.kernel, n.attrs.stride, n.attrs.padding);
        int64_t wo = conv_out_extent(in[3], n.attrs.kernel, n.attrs.stride, n.attrs.padding);
        if (ho < 1 || wo < 1) out = err("pool window larger than padded input");
        out = TensorShape{in[0], in[1], ho, wo};
        break;
      }
      case OpKind::UpsampleNearest: {
        const TensorShape& in = at(n.inputs[0]);
        out = TensorShape{in[0], in[1], in[2] * n.attrs.factor, in[3] * n.attrs.factor};
        break;
      }
    }
    shapes[id] = out;
  }
  return shapes;
}

// Channel extents of a node's activation axes given inferred shapes.
inline int64_t out_channels(const ModelGraph& m, const ShapeMap& shapes, const std::string& id) {
  return shapes.at(id)[1];
}

inline int64_t in_channels(const ModelGraph& m, const ShapeMap& shapes, const std::string& id) {
  const NodeSpec& n = m.node(id);
  check(!n.inputs.empty(), "node '" + id + "' has no input axis");
  if (n.op == OpKind::Concat) {
    int64_t total = 0;
    for (const auto& in : n.inputs) total += shapes.at(in)[1];
    return total;
  }
  return shapes.at(n.inputs[0])[1];
}

// Full validation: structural invariants plus end-to-end shape inference.
inline void validate(const ModelGraph& m) {
  m.validate_structure();
  infer_shapes(m);
}

}  // namespace prunekit
