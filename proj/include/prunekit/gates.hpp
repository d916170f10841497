#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prunekit/depgraph.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// How per-gate components fold into one comparable number. Mean is the
// default; sum and max sit behind the same flag.
enum class Aggregation { Mean, Sum, Max };

inline std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Sum: return "sum";
    case Aggregation::Max: return "max";
  }
  fail("bad aggregation");
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  if (s == "max") return Aggregation::Max;
  fail("unknown aggregation '" + s + "' (expected mean, sum, or max)");
}

// Group members with no in-group descendants: the layers where the group's
// effect on the rest of the network is measured. Deterministic (topo) order.
inline std::vector<std::string> gate_set(const ModelGraph& m, const PruningGroup& g) {
  const std::vector<std::string> layers = g.member_layers();
  const std::set<std::string> member(layers.begin(), layers.end());
  const auto consumers = m.consumers();

  std::vector<std::string> gates;
  for (const std::string& id : m.topo_order()) {
    if (member.count(id) == 0) continue;
    // BFS over the computational graph: does any other member lie downstream?
    bool reaches_member = false;
    std::set<std::string> seen;
    std::deque<std::string> queue;
    auto push_consumers = [&](const std::string& node) {
      auto it = consumers.find(node);
      if (it == consumers.end()) return;
      for (const std::string& next : it->second) {
        if (seen.insert(next).second) queue.push_back(next);
      }
    };
    push_consumers(id);
    while (!queue.empty() && !reaches_member) {
      const std::string cur = queue.front();
      queue.pop_front();
      if (member.count(cur)) reaches_member = true;
      else push_consumers(cur);
    }
    if (!reaches_member) gates.push_back(id);
  }
  check(!gates.empty(), "group " + g.id() + " has no gate layers (graph bug)");
  return gates;
}

struct ReconstructionScore {
  double value = 0.0;      // aggregated, energy-normalized
  double raw_value = 0.0;  // aggregated, unnormalized
  std::vector<double> per_gate;      // normalized components, gate order
  std::vector<double> per_gate_raw;  // sum of squared deviations per gate
  std::vector<double> energy;        // reference output energy per gate
};

inline constexpr double kEnergyEps = 1e-12;

// Mask covering the whole group for the given removed root channels.
inline ChannelMask group_mask(const PruningGroup& g, const std::vector<int64_t>& removed) {
  ChannelMask mask;
  for (int64_t r : removed) {
    check(r >= 0 && r < g.extent, "removed channel " + std::to_string(r) +
                                      " out of range for group " + g.id() + " (extent " +
                                      std::to_string(g.extent) + ")");
    for (const GroupMember& mem : g.members) {
      const int64_t c = mem.map.apply(r);
      if (c >= 0) mask.add(mem.key, static_cast<int>(c));
    }
  }
  return mask;
}

// Squared deviation at the gate outputs between the reference activations and
// a forward pass with the removed channels zero-masked, Eq.-style summed over
// batch and spatial positions. `reference` must hold forward_tapped outputs
// at `gates` for the same model and batch. `spatial_stride` subsamples the
// (i, j) positions; 1 evaluates all of them.
inline ReconstructionScore reconstruction_error(
    const ModelGraph& m, const PruningGroup& g, const std::vector<std::string>& gates,
    const std::vector<int64_t>& removed, const Tensor& calib, const ActivationMap& reference,
    const ActivationMap* base_acts = nullptr, Aggregation agg = Aggregation::Mean,
    int spatial_stride = 1, ExecStats* stats = nullptr) {
  check(!gates.empty(), "empty gate set");
  check(spatial_stride >= 1, "spatial stride must be >= 1");
  for (const std::string& gid : gates) {
    check(reference.count(gid) != 0, "reference activations missing gate '" + gid + "'");
  }

  const ChannelMask mask = group_mask(g, removed);
  const ActivationMap pruned = forward_masked(m, calib, mask, gates, base_acts, stats);

  ReconstructionScore score;
  for (const std::string& gid : gates) {
    const Tensor& ref = reference.at(gid);
    const Tensor& got = pruned.at(gid);
    check(ref.shape == got.shape, "gate '" + gid + "' shape changed between passes");
    const int64_t N = ref.shape.dims[0], C = ref.shape.dims[1];
    const int64_t H = ref.shape.dims[2], W = ref.shape.dims[3];
    double sq = 0.0, energy = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t c = 0; c < C; ++c) {
        const float* a = ref.data.data() + (n * C + c) * H * W;
        const float* b = got.data.data() + (n * C + c) * H * W;
        for (int64_t i = 0; i < H; i += spatial_stride) {
          for (int64_t j = 0; j < W; j += spatial_stride) {
            const double rv = a[i * W + j];
            const double d = rv - static_cast<double>(b[i * W + j]);
            sq += d * d;
            energy += rv * rv;
          }
        }
      }
    }
    score.per_gate_raw.push_back(sq);
    score.energy.push_back(energy);
    score.per_gate.push_back(sq / (energy + kEnergyEps));
  }

  auto fold = [agg](const std::vector<double>& xs) {
    double v = 0.0;
    switch (agg) {
      case Aggregation::Mean:
        for (double x : xs) v += x;
        v /= static_cast<double>(xs.size());
        break;
      case Aggregation::Sum:
        for (double x : xs) v += x;
        break;
      case Aggregation::Max:
        v = *std::max_element(xs.begin(), xs.end());
        break;
    }
    return v;
  };
  score.value = fold(score.per_gate);
  score.raw_value = fold(score.per_gate_raw);
  return score;
}

}  // namespace prunekit
