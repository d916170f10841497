#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/depgraph.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/footprint.hpp"
#include "prunekit/gates.hpp"
#include "prunekit/model_io.hpp"
#include "prunekit/plan.hpp"
#include "prunekit/pruner.hpp"

namespace prunekit {

inline constexpr const char* kReportFormat = "prunekit-report/1";

// Invoked after a step whose validation loss went up; must return a model
// with the same topology (weights may change).
using RecoveryHook = std::function<ModelGraph(const ModelGraph&, int step)>;

struct ScheduleConfig {
  double ratio = 0.0;          // target parameter reduction R, in (0, 1)
  double step_fraction = 0.01; // fraction of the original parameters per step
  int64_t floor = 1;           // minimum channels left per group
  Aggregation agg = Aggregation::Mean;
  uint64_t seed = 0;           // recorded for provenance; selection is seed-free
  bool always_hook = false;    // fire the hook every step, not just on loss increase
  int spatial_stride = 1;
  RecoveryHook hook;           // empty means identity
};

inline void validate_config(const ScheduleConfig& cfg) {
  check(cfg.ratio > 0.0 && cfg.ratio < 1.0, "ratio must be in (0, 1)");
  check(cfg.step_fraction > 0.0, "step fraction must be > 0");
  check(cfg.floor >= 1, "floor must be >= 1");
  check(cfg.spatial_stride >= 1, "spatial stride must be >= 1");
}

inline int schedule_steps(double ratio, double step_fraction) {
  return static_cast<int>(std::ceil(ratio / step_fraction - 1e-9));
}

// Parameter count the schedule aims at after step t (linear ramp, capped at R).
inline int64_t cumulative_target(int64_t p0, double step_fraction, double ratio, int t) {
  const double kept = 1.0 - std::min(static_cast<double>(t) * step_fraction, ratio);
  return static_cast<int64_t>(std::llround(static_cast<double>(p0) * kept));
}

// Parameters to remove at step t given the actual count entering the step.
inline int64_t step_budget(int64_t p0, const ScheduleConfig& cfg, int t, int64_t params_before) {
  return std::max<int64_t>(0, params_before - cumulative_target(p0, cfg.step_fraction, cfg.ratio, t));
}

// Mean squared deviation between two output maps, over all elements.
inline double output_mse(const ActivationMap& ref, const ActivationMap& got) {
  check(ref.size() == got.size(), "output sets differ");
  double sq = 0.0;
  int64_t count = 0;
  for (const auto& [id, a] : ref) {
    auto it = got.find(id);
    check(it != got.end(), "output '" + id + "' missing from comparison");
    const Tensor& b = it->second;
    check(a.shape == b.shape, "output '" + id + "' shape mismatch");
    for (size_t i = 0; i < a.data.size(); ++i) {
      const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
      sq += d * d;
    }
    count += a.shape.elems();
  }
  check(count > 0, "no output elements to compare");
  return sq / static_cast<double>(count);
}

inline double validation_loss(const ModelGraph& pruned, const ActivationMap& ref_outputs,
                              const Tensor& val) {
  return output_mse(ref_outputs, forward(pruned, val));
}

inline double validation_loss(const ModelGraph& pruned, const ModelGraph& original,
                              const Tensor& val) {
  return output_mse(forward(original, val), forward(pruned, val));
}

struct StepLog {
  int step = 0;
  int64_t params_before = 0;
  int64_t params_after = 0;
  int64_t budget = 0;
  int64_t removed_params = 0;  // sum of channel footprints this step
  std::vector<PlanRemoval> removals;
  double val_before = 0.0;  // baseline entering the step
  double val_after = 0.0;   // after physical removal
  double val_final = 0.0;   // after the hook, if any; else val_after
  bool hook_invoked = false;
  bool hook_failed = false;
  std::string hook_error;
  double wall_seconds = 0.0;
};

struct ScheduleReport {
  int64_t p0 = 0;
  int steps_planned = 0;
  double ratio = 0.0;
  double step_fraction = 0.0;
  int64_t floor = 1;
  std::string agg = "mean";
  uint64_t seed = 0;
  bool always_hook = false;
  std::vector<StepLog> steps;
  int64_t final_params = 0;
  int64_t final_flops = 0;
  double final_val_loss = 0.0;
  bool floor_exhausted = false;
  std::string model_hash_before;
  std::string model_hash_after;
};

struct ScheduleResult {
  ModelGraph model;
  ScheduleReport report;
  PruningPlan plan;
};

namespace detail {

// Live channel extents during one step, before physical application.
using VirtualExtents = std::map<DimKey, int64_t>;

// Parameters that disappear when root channel `root_ch` of `g` is removed,
// given the virtual extents so far; decrements the extents it consumes.
// Summing these over a step reproduces the param_count delta exactly.
inline int64_t channel_footprint(const ModelGraph& m, const PruningGroup& g, int64_t root_ch,
                                 VirtualExtents& ext) {
  // collect which sides of each layer this channel touches
  std::map<std::string, std::pair<bool, bool>> hit;  // layer -> (in, out)
  std::vector<const GroupMember*> touched;
  for (const GroupMember& mem : g.members) {
    if (mem.map.apply(root_ch) < 0) continue;
    touched.push_back(&mem);
    auto& h = hit[mem.key.layer];
    (mem.key.side == Side::In ? h.first : h.second) = true;
  }
  int64_t removed = 0;
  for (const auto& [layer, sides] : hit) {
    const NodeSpec& n = m.node(layer);
    const bool has_bias = n.has_param("bias");
    switch (n.op) {
      case OpKind::Conv2d:
      case OpKind::Linear: {
        const Tensor& w = m.param(n.param_ref("weight"));
        const int64_t k2 = n.op == OpKind::Conv2d ? w.shape.dims[2] * w.shape.dims[3] : 1;
        const int64_t in_v = ext.at(DimKey{layer, Side::In});
        const int64_t out_v = ext.at(DimKey{layer, Side::Out});
        if (sides.first && sides.second) {
          removed += (in_v + out_v - 1) * k2 + (has_bias ? 1 : 0);
        } else if (sides.second) {
          removed += in_v * k2 + (has_bias ? 1 : 0);
        } else {
          removed += out_v * k2;
        }
        break;
      }
      case OpKind::DepthwiseConv2d: {
        const Tensor& w = m.param(n.param_ref("weight"));
        removed += w.shape.dims[2] * w.shape.dims[3] + (has_bias ? 1 : 0);
        break;
      }
      case OpKind::BatchNorm:
        removed += 4;  // gamma, beta, running mean, running var
        break;
      default:
        break;
    }
  }
  for (const GroupMember* mem : touched) ext.at(mem->key) -= 1;
  return removed;
}

inline VirtualExtents initial_extents(const DepGraph& dg) {
  VirtualExtents ext;
  for (const PrunableAxis& ax : dg.axes) ext[ax.key] = ax.extent;
  return ext;
}

}  // namespace detail

// Global iterative pruning: per step, rebuild the grouping and reference
// activations, then repeatedly remove the globally cheapest channel (by
// normalized score, marginal against the group's removals so far) until the
// step's parameter budget is met, physically apply, and check validation
// loss against the previous step to decide whether the recovery hook runs.
inline ScheduleResult run_schedule(const ModelGraph& m, const Tensor& calib, const Tensor& val,
                                   const ScheduleConfig& cfg) {
  validate_config(cfg);
  const int64_t p0 = param_count(m).total_params;
  const int steps = schedule_steps(cfg.ratio, cfg.step_fraction);

  ScheduleResult result;
  result.model = m;
  result.plan.model_hash_before = model_hash(m);
  ScheduleReport& report = result.report;
  report.p0 = p0;
  report.steps_planned = steps;
  report.ratio = cfg.ratio;
  report.step_fraction = cfg.step_fraction;
  report.floor = cfg.floor;
  report.agg = aggregation_name(cfg.agg);
  report.seed = cfg.seed;
  report.always_hook = cfg.always_hook;
  report.model_hash_before = result.plan.model_hash_before;

  const ActivationMap val_reference = forward(m, val);
  double prev_loss = 0.0;  // dense vs dense

  for (int t = 1; t <= steps; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    StepLog log;
    log.step = t;
    log.params_before = param_count(result.model).total_params;
    log.budget = step_budget(p0, cfg, t, log.params_before);
    log.val_before = prev_loss;

    bool exhausted = false;
    if (log.budget > 0) {
      const DepGraph dg = build_depgraph(result.model);
      const std::vector<PruningGroup> groups = enumerate_groups(dg);
      const ActivationMap base = forward_all(result.model, calib);
      std::vector<std::vector<std::string>> gates(groups.size());
      for (size_t i = 0; i < groups.size(); ++i) gates[i] = gate_set(result.model, groups[i]);

      detail::VirtualExtents ext = detail::initial_extents(dg);
      std::vector<std::vector<int64_t>> removed(groups.size());
      std::vector<std::map<int64_t, double>> cache(groups.size());

      while (log.removed_params < log.budget) {
        int best_g = -1;
        int64_t best_ch = -1;
        double best_score = 0.0;
        for (size_t i = 0; i < groups.size(); ++i) {
          const PruningGroup& g = groups[i];
          if (g.extent - static_cast<int64_t>(removed[i].size()) - 1 < cfg.floor) continue;
          for (int64_t c = 0; c < g.extent; ++c) {
            if (std::find(removed[i].begin(), removed[i].end(), c) != removed[i].end()) continue;
            auto it = cache[i].find(c);
            if (it == cache[i].end()) {
              std::vector<int64_t> trial = removed[i];
              trial.push_back(c);
              const ReconstructionScore s =
                  reconstruction_error(result.model, g, gates[i], trial, calib, base, &base,
                                       cfg.agg, cfg.spatial_stride);
              it = cache[i].emplace(c, s.value).first;
            }
            if (best_g < 0 || it->second < best_score) {
              best_g = static_cast<int>(i);
              best_ch = c;
              best_score = it->second;
            }
          }
        }
        if (best_g < 0) {
          exhausted = true;
          break;
        }
        const int64_t fp = detail::channel_footprint(result.model, groups[best_g], best_ch, ext);
        removed[best_g].push_back(best_ch);
        cache[best_g].clear();
        log.removed_params += fp;
        log.removals.push_back(PlanRemoval{t, groups[best_g].id(), best_ch, best_score});
      }

      if (!log.removals.empty()) {
        std::map<DimKey, std::vector<int64_t>> batch;
        for (size_t i = 0; i < groups.size(); ++i) {
          for (int64_t r : removed[i]) {
            for (const GroupMember& mem : groups[i].members) {
              const int64_t c = mem.map.apply(r);
              if (c >= 0) batch[mem.key].push_back(c);
            }
          }
        }
        result.model = apply_removals(result.model, batch);
      }
    }

    log.params_after = param_count(result.model).total_params;
    check(log.params_before - log.params_after == log.removed_params,
          "footprint accounting drifted at step " + std::to_string(t));

    log.val_after = validation_loss(result.model, val_reference, val);
    log.val_final = log.val_after;
    const bool trigger = cfg.always_hook || log.val_after > prev_loss;
    if (trigger) {
      log.hook_invoked = true;
      if (cfg.hook) {
        try {
          ModelGraph healed = cfg.hook(result.model, t);
          check(topology_hash(healed) == topology_hash(result.model),
                "recovery hook changed the model topology");
          result.model = std::move(healed);
          log.val_final = validation_loss(result.model, val_reference, val);
        } catch (const std::exception& e) {
          log.hook_failed = true;
          log.hook_error = e.what();
        }
      }
    }
    prev_loss = log.val_final;

    for (const PlanRemoval& r : log.removals) result.plan.removals.push_back(r);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.steps.push_back(std::move(log));
    if (exhausted) {
      report.floor_exhausted = true;
      break;
    }
  }

  report.final_params = param_count(result.model).total_params;
  report.final_flops = flops_estimate(result.model).total_flops;
  report.final_val_loss = prev_loss;
  report.model_hash_after = model_hash(result.model);
  result.plan.model_hash_after = report.model_hash_after;
  return result;
}

inline void save_report(const ScheduleReport& r, const std::string& path) {
  nlohmann::json j;
  j["format"] = kReportFormat;
  j["p0"] = r.p0;
  j["steps_planned"] = r.steps_planned;
  j["ratio"] = r.ratio;
  j["step_fraction"] = r.step_fraction;
  j["floor"] = r.floor;
  j["agg"] = r.agg;
  j["seed"] = r.seed;
  j["always_hook"] = r.always_hook;
  j["final_params"] = r.final_params;
  j["final_flops"] = r.final_flops;
  j["final_val_loss"] = r.final_val_loss;
  j["floor_exhausted"] = r.floor_exhausted;
  j["model_hash_before"] = r.model_hash_before;
  j["model_hash_after"] = r.model_hash_after;
  j["steps"] = nlohmann::json::array();
  for (const StepLog& s : r.steps) {
    nlohmann::json js;
    js["step"] = s.step;
    js["params_before"] = s.params_before;
    js["params_after"] = s.params_after;
    js["budget"] = s.budget;
    js["removed_params"] = s.removed_params;
    js["val_before"] = s.val_before;
    js["val_after"] = s.val_after;
    js["val_final"] = s.val_final;
    js["hook_invoked"] = s.hook_invoked;
    js["hook_failed"] = s.hook_failed;
    if (s.hook_failed) js["hook_error"] = s.hook_error;
    js["wall_seconds"] = s.wall_seconds;
    js["removals"] = nlohmann::json::array();
    for (const PlanRemoval& rv : s.removals) {
      js["removals"].push_back({{"step", rv.step},
                                {"group", rv.group},
                                {"channel", rv.channel},
                                {"score", rv.score}});
    }
    j["steps"].push_back(std::move(js));
  }
  std::string text = j.dump(2);
  text.push_back('\n');
  detail::write_file_atomic(path, text.data(), text.size());
}

inline ScheduleReport load_report(const std::string& path) {
  nlohmann::json j;
  try {
    const std::vector<char> buf = detail::read_file(path);
    j = nlohmann::json::parse(buf.begin(), buf.end());
  } catch (const nlohmann::json::exception& e) {
    fail("bad report file " + path + ": " + e.what());
  }
  check(j.value("format", "") == kReportFormat,
        "report format version mismatch in " + path);
  ScheduleReport r;
  r.p0 = j.at("p0").get<int64_t>();
  r.steps_planned = j.at("steps_planned").get<int>();
  r.ratio = j.at("ratio").get<double>();
  r.step_fraction = j.at("step_fraction").get<double>();
  r.floor = j.at("floor").get<int64_t>();
  r.agg = j.at("agg").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.always_hook = j.at("always_hook").get<bool>();
  r.final_params = j.at("final_params").get<int64_t>();
  r.final_flops = j.at("final_flops").get<int64_t>();
  r.final_val_loss = j.at("final_val_loss").get<double>();
  r.floor_exhausted = j.at("floor_exhausted").get<bool>();
  r.model_hash_before = j.at("model_hash_before").get<std::string>();
  r.model_hash_after = j.at("model_hash_after").get<std::string>();
  for (const auto& js : j.at("steps")) {
    StepLog s;
    s.step = js.at("step").get<int>();
    s.params_before = js.at("params_before").get<int64_t>();
    s.params_after = js.at("params_after").get<int64_t>();
    s.budget = js.at("budget").get<int64_t>();
    s.removed_params = js.at("removed_params").get<int64_t>();
    s.val_before = js.at("val_before").get<double>();
    s.val_after = js.at("val_after").get<double>();
    s.val_final = js.at("val_final").get<double>();
    s.hook_invoked = js.at("hook_invoked").get<bool>();
    s.hook_failed = js.at("hook_failed").get<bool>();
    if (js.count("hook_error")) s.hook_error = js.at("hook_error").get<std::string>();
    s.wall_seconds = js.at("wall_seconds").get<double>();
    for (const auto& rv : js.at("removals")) {
      s.removals.push_back(PlanRemoval{rv.at("step").get<int>(), rv.at("group").get<std::string>(),
                                       rv.at("channel").get<int64_t>(),
                                       rv.at("score").get<double>()});
    }
    r.steps.push_back(std::move(s));
  }
  return r;
}

}  // namespace prunekit
