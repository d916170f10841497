#pragma once

#include <map>
#include <string>

#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"

namespace prunekit {

// Per-node parameter counts and FLOP estimates (per input sample).
struct ParamFootprint {
  std::map<std::string, int64_t> params_per_node;
  std::map<std::string, int64_t> flops_per_node;
  int64_t total_params = 0;
  int64_t total_flops = 0;
};

// Exact element counts of all parameter tensors. BatchNorm running
// statistics count: they are stored per channel and pruned with it.
inline ParamFootprint param_count(const ModelGraph& m) {
  ParamFootprint f;
  for (const auto& n : m.nodes) {
    int64_t count = 0;
    for (const auto& [role, name] : n.params) count += m.param(name).elems();
    f.params_per_node[n.id] = count;
    f.total_params += count;
  }
  return f;
}

// FLOP estimates per sample, on top of param counts.
//   Conv2d            2*Cin*kh*kw*Cout*Hout*Wout   (MACs*2, bias not counted)
//   DepthwiseConv2d   2*kh*kw*C*Hout*Wout
//   Linear            2*Cin*Cout*H*W
//   BatchNorm         2*C*H*W                       (scale + shift)
//   ReLU              C*H*W                         (one op per element)
//   Add               (k-1)*C*H*W
//   Pools             kernel^2*C*Hout*Wout
//   Concat/Upsample   0                             (data movement only)
inline ParamFootprint flops_estimate(const ModelGraph& m) {
  ParamFootprint f = param_count(m);
  ShapeMap shapes = infer_shapes(m);
  for (const auto& n : m.nodes) {
    const TensorShape& out = shapes.at(n.id);
    int64_t flops = 0;
    switch (n.op) {
      case OpKind::Conv2d: {
        const Tensor& w = m.param(n.param_ref("weight"));
        flops = 2 * w.shape[1] * w.shape[2] * w.shape[3] * out[1] * out[2] * out[3];
        break;
      }
      case OpKind::DepthwiseConv2d: {
        const Tensor& w = m.param(n.param_ref("weight"));
        flops = 2 * w.shape[2] * w.shape[3] * out[1] * out[2] * out[3];
        break;
      }
      case OpKind::Linear: {
        const Tensor& w = m.param(n.param_ref("weight"));
        flops = 2 * w.shape[1] * out[1] * out[2] * out[3];
        break;
      }
      case OpKind::BatchNorm:
        flops = 2 * out[1] * out[2] * out[3];
        break;
      case OpKind::ReLU:
        flops = out[1] * out[2] * out[3];
        break;
      case OpKind::Add:
        flops = (static_cast<int64_t>(n.inputs.size()) - 1) * out[1] * out[2] * out[3];
        break;
      case OpKind::MaxPool:
      case OpKind::AvgPool:
        flops = static_cast<int64_t>(n.attrs.kernel) * n.attrs.kernel * out[1] * out[2] * out[3];
        break;
      default:
        flops = 0;
        break;
    }
    f.flops_per_node[n.id] = flops;
    f.total_flops += flops;
  }
  return f;
}

}  // namespace prunekit
