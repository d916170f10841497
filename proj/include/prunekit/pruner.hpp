#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prunekit/depgraph.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/gates.hpp"
#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

struct RankedEntry {
  int64_t channel = 0;
  double score = 0.0;  // score of the cumulative removal set up to this entry
};

struct RankedRemoval {
  std::vector<RankedEntry> entries;

  std::vector<int64_t> channels() const {
    std::vector<int64_t> out;
    for (const RankedEntry& e : entries) out.push_back(e.channel);
    return out;
  }
};

// Greedy channel selection: each step removes the candidate whose addition to
// the already-chosen set yields the lowest score, measured against the dense
// reference captured once up front. Ties go to the lowest channel index.
inline RankedRemoval greedy_select(const ModelGraph& m, const PruningGroup& g, int64_t k,
                                   const Tensor& calib, int64_t floor = 1,
                                   Aggregation agg = Aggregation::Mean,
                                   ExecStats* stats = nullptr) {
  check(k >= 1 && k <= g.extent - floor,
        "k = " + std::to_string(k) + " out of range for group " + g.id() + " (extent " +
            std::to_string(g.extent) + ", floor " + std::to_string(floor) + ")");
  const std::vector<std::string> gates = gate_set(m, g);
  const ActivationMap base = forward_all(m, calib);
  ActivationMap reference;
  for (const std::string& gid : gates) reference.emplace(gid, base.at(gid));

  RankedRemoval out;
  std::vector<int64_t> removed;
  std::set<int64_t> taken;
  for (int64_t step = 0; step < k; ++step) {
    int64_t best_ch = -1;
    double best_score = 0.0;
    for (int64_t c = 0; c < g.extent; ++c) {
      if (taken.count(c)) continue;
      std::vector<int64_t> trial = removed;
      trial.push_back(c);
      const ReconstructionScore s =
          reconstruction_error(m, g, gates, trial, calib, reference, &base, agg, 1, stats);
      if (best_ch < 0 || s.value < best_score) {
        best_ch = c;
        best_score = s.value;
      }
    }
    removed.push_back(best_ch);
    taken.insert(best_ch);
    out.entries.push_back(RankedEntry{best_ch, best_score});
  }
  return out;
}

namespace detail {

inline bool budget_ok(int64_t n, int64_t k, int64_t limit) {
  // C(n, k) <= limit without overflow
  double c = 1.0;
  for (int64_t i = 1; i <= k; ++i) {
    c *= static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(limit)) return false;
  }
  return true;
}

}  // namespace detail

// Exact minimizer over all C(extent, k) subsets. Ties resolve to the
// lexicographically smallest subset (enumeration order).
inline std::pair<std::vector<int64_t>, double> brute_force_select(
    const ModelGraph& m, const PruningGroup& g, int64_t k, const Tensor& calib,
    Aggregation agg = Aggregation::Mean) {
  check(k >= 0 && k <= g.extent, "k out of range");
  if (k == 0) return {{}, 0.0};
  check(detail::budget_ok(g.extent, k, 1000000), "combinatorial budget exceeded");

  const std::vector<std::string> gates = gate_set(m, g);
  const ActivationMap base = forward_all(m, calib);
  ActivationMap reference;
  for (const std::string& gid : gates) reference.emplace(gid, base.at(gid));

  std::vector<int64_t> subset(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) subset[i] = i;
  std::vector<int64_t> best;
  double best_score = 0.0;
  while (true) {
    const ReconstructionScore s =
        reconstruction_error(m, g, gates, subset, calib, reference, &base, agg);
    if (best.empty() || s.value < best_score) {
      best = subset;
      best_score = s.value;
    }
    // next combination in lexicographic order
    int64_t i = k - 1;
    while (i >= 0 && subset[i] == g.extent - k + i) --i;
    if (i < 0) break;
    ++subset[i];
    for (int64_t j = i + 1; j < k; ++j) subset[j] = subset[j - 1] + 1;
  }
  return {best, best_score};
}

// Physically removes channels on a batch of axes at once. Tied layers that
// appear on both sides of one removal are cut once; Concat offsets stay
// consistent because every coupled axis shrinks together.
inline ModelGraph apply_removals(const ModelGraph& m,
                                 const std::map<DimKey, std::vector<int64_t>>& removals) {
  const ShapeMap shapes = infer_shapes(m);
  for (const auto& [key, chans] : removals) {
    check(m.has_node(key.layer), "no node '" + key.layer + "'");
    const int64_t extent = key.side == Side::Out ? out_channels(m, shapes, key.layer)
                                                 : in_channels(m, shapes, key.layer);
    std::set<int64_t> seen;
    for (int64_t c : chans) {
      check(c >= 0 && c < extent, "channel " + std::to_string(c) + " out of range for " +
                                      key.str() + " (extent " + std::to_string(extent) + ")");
      check(seen.insert(c).second, "duplicate channel " + std::to_string(c) + " for " + key.str());
    }
    check(static_cast<int64_t>(chans.size()) < extent,
          "removal would empty axis " + key.str());
  }

  ModelGraph out = m;
  auto sorted = [](std::vector<int64_t> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  auto side_of = [&](const std::string& layer, Side s) -> std::vector<int64_t> {
    auto it = removals.find(DimKey{layer, s});
    return it == removals.end() ? std::vector<int64_t>{} : sorted(it->second);
  };
  auto merged = [&](const std::string& layer) {
    std::set<int64_t> u;
    for (Side s : {Side::In, Side::Out}) {
      for (int64_t c : side_of(layer, s)) u.insert(c);
    }
    return std::vector<int64_t>(u.begin(), u.end());
  };

  for (NodeSpec& n : out.nodes) {
    const std::string& id = n.id;
    switch (n.op) {
      case OpKind::Conv2d:
      case OpKind::Linear: {
        const std::vector<int64_t> rows = side_of(id, Side::Out);
        const std::vector<int64_t> cols = side_of(id, Side::In);
        if (rows.empty() && cols.empty()) break;
        Tensor& w = out.params.at(n.param_ref("weight"));
        if (!rows.empty()) w = drop_along_axis(w, 0, rows);
        if (!cols.empty()) w = drop_along_axis(w, 1, cols);
        if (!rows.empty() && n.has_param("bias")) {
          Tensor& b = out.params.at(n.param_ref("bias"));
          b = drop_along_axis(b, 0, rows);
        }
        break;
      }
      case OpKind::DepthwiseConv2d: {
        const std::vector<int64_t> chans = merged(id);
        if (chans.empty()) break;
        Tensor& w = out.params.at(n.param_ref("weight"));
        w = drop_along_axis(w, 0, chans);
        if (n.has_param("bias")) {
          Tensor& b = out.params.at(n.param_ref("bias"));
          b = drop_along_axis(b, 0, chans);
        }
        break;
      }
      case OpKind::BatchNorm: {
        const std::vector<int64_t> chans = merged(id);
        if (chans.empty()) break;
        for (const char* role : {"gamma", "beta", "mean", "var"}) {
          Tensor& t = out.params.at(n.param_ref(role));
          t = drop_along_axis(t, 0, chans);
        }
        break;
      }
      default:
        break;  // param-less; shape inference picks up the shrunken producers
    }
  }
  validate(out);
  return out;
}

// Removes the given root channels from every member of one group.
inline ModelGraph apply_prune(const ModelGraph& m, const PruningGroup& g,
                              const std::vector<int64_t>& channels, int64_t floor = 1) {
  for (int64_t r : channels) {
    check(r >= 0 && r < g.extent, "channel " + std::to_string(r) + " out of range for group " +
                                      g.id() + " (extent " + std::to_string(g.extent) + ")");
  }
  std::set<int64_t> uniq(channels.begin(), channels.end());
  check(g.extent - static_cast<int64_t>(uniq.size()) >= floor,
        "removal of " + std::to_string(uniq.size()) + " channels drops group " + g.id() +
            " below the floor of " + std::to_string(floor));
  std::map<DimKey, std::vector<int64_t>> removals;
  for (const GroupMember& mem : g.members) {
    for (int64_t r : uniq) {
      const int64_t c = mem.map.apply(r);
      if (c >= 0) removals[mem.key].push_back(c);
    }
  }
  return apply_removals(m, removals);
}

}  // namespace prunekit
