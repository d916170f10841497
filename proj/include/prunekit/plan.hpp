#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/depgraph.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model_io.hpp"
#include "prunekit/pruner.hpp"

namespace prunekit {

inline constexpr const char* kPlanFormat = "prunekit-plan/1";

struct PlanRemoval {
  int step = 0;
  std::string group;   // root axis of the group at the step it was pruned
  int64_t channel = 0; // index in that group's root space
  double score = 0.0;  // normalized score at selection time

  bool operator==(const PlanRemoval& o) const {
    return step == o.step && group == o.group && channel == o.channel && score == o.score;
  }
};

struct PruningPlan {
  std::string model_hash_before;
  std::string model_hash_after;
  std::vector<PlanRemoval> removals;

  bool operator==(const PruningPlan& o) const {
    return model_hash_before == o.model_hash_before && model_hash_after == o.model_hash_after &&
           removals == o.removals;
  }
};

inline void save_plan(const PruningPlan& plan, const std::string& path) {
  nlohmann::json j;
  j["format"] = kPlanFormat;
  j["model_hash_before"] = plan.model_hash_before;
  j["model_hash_after"] = plan.model_hash_after;
  j["removals"] = nlohmann::json::array();
  for (const PlanRemoval& r : plan.removals) {
    j["removals"].push_back({{"step", r.step},
                             {"group", r.group},
                             {"channel", r.channel},
                             {"score", r.score}});
  }
  std::string text = j.dump(2);
  text.push_back('\n');
  detail::write_file_atomic(path, text.data(), text.size());
}

inline PruningPlan load_plan(const std::string& path) {
  nlohmann::json j;
  try {
    const std::vector<char> buf = detail::read_file(path);
    j = nlohmann::json::parse(buf.begin(), buf.end());
  } catch (const nlohmann::json::exception& e) {
    fail("bad plan file " + path + ": " + e.what());
  }
  check(j.value("format", "") == kPlanFormat,
        "plan format version mismatch in " + path + " (want " + std::string(kPlanFormat) + ")");
  PruningPlan plan;
  plan.model_hash_before = j.at("model_hash_before").get<std::string>();
  plan.model_hash_after = j.at("model_hash_after").get<std::string>();
  for (const auto& r : j.at("removals")) {
    PlanRemoval pr;
    pr.step = r.at("step").get<int>();
    pr.group = r.at("group").get<std::string>();
    pr.channel = r.at("channel").get<int64_t>();
    pr.score = r.at("score").get<double>();
    plan.removals.push_back(pr);
  }
  return plan;
}

// Re-applies a recorded plan to a model with the matching content hash.
// Removals are grouped per step and applied as one batch, exactly as the
// original run applied them.
inline ModelGraph replay_plan(const ModelGraph& m, const PruningPlan& plan) {
  check(model_hash(m) == plan.model_hash_before,
        "plan hash mismatch: plan was recorded for model " + plan.model_hash_before +
            ", got " + model_hash(m));
  std::map<int, std::vector<const PlanRemoval*>> by_step;
  for (const PlanRemoval& r : plan.removals) by_step[r.step].push_back(&r);

  ModelGraph cur = m;
  for (const auto& [step, items] : by_step) {
    const DepGraph dg = build_depgraph(cur);
    std::map<std::string, PruningGroup> groups;
    std::map<DimKey, std::vector<int64_t>> batch;
    for (const PlanRemoval* r : items) {
      auto it = groups.find(r->group);
      if (it == groups.end()) {
        it = groups.emplace(r->group, collect_group(dg, parse_dimkey(r->group))).first;
      }
      const PruningGroup& g = it->second;
      check(r->channel >= 0 && r->channel < g.extent,
            "plan channel " + std::to_string(r->channel) + " out of range for group " + r->group);
      for (const GroupMember& mem : g.members) {
        const int64_t c = mem.map.apply(r->channel);
        if (c >= 0) batch[mem.key].push_back(c);
      }
    }
    cur = apply_removals(cur, batch);
  }
  check(model_hash(cur) == plan.model_hash_after,
        "replayed model hash " + model_hash(cur) + " does not match recorded " +
            plan.model_hash_after);
  return cur;
}

}  // namespace prunekit
