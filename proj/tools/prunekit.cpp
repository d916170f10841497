// prunekit command line driver: inspect / prune / eval / gen-toy.

#include <CLI11.hpp>
#include <prunekit/prunekit.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace prunekit;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  fail("expected a boolean, got '" + v + "'");
}

// Flat key = value config mirroring ScheduleConfig. Flags override entries.
void load_config_file(const std::string& path, ScheduleConfig& cfg) {
  std::ifstream in(path);
  check(in.good(), "cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    check(eq != std::string::npos,
          "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "ratio") {
      cfg.ratio = std::stod(val);
    } else if (key == "step") {
      cfg.step_fraction = std::stod(val);
    } else if (key == "floor") {
      cfg.floor = std::stoll(val);
    } else if (key == "agg") {
      cfg.agg = parse_aggregation(val);
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else if (key == "always_hook") {
      cfg.always_hook = parse_bool(val);
    } else if (key == "spatial_stride") {
      cfg.spatial_stride = std::stoi(val);
    } else {
      fail("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
}

std::string format_map(const IndexMap& map, int64_t extent) {
  if (map.identity_over(extent)) return "identity";
  std::ostringstream os;
  for (size_t i = 0; i < map.segs.size(); ++i) {
    const Segment& s = map.segs[i];
    if (i) os << " ";
    os << "[" << s.lo << "," << s.hi << ")" << (s.delta >= 0 ? "+" : "") << s.delta;
  }
  return os.str();
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

int cmd_gen_toy(const ToySpec& spec, const std::string& out_dir) {
  const ModelGraph m = gen_toy_model(spec);
  const fs::path out(out_dir);
  fs::create_directories(out);
  save_model(m, out / "model");

  const TensorShape calib_shape{
      {spec.calib_batch, spec.in_channels, spec.in_size, spec.in_size}};
  const TensorShape val_shape{{spec.val_batch, spec.in_channels, spec.in_size, spec.in_size}};
  save_batch(gen_batch(calib_shape, spec.seed + 1), out / "calib");
  save_batch(gen_batch(val_shape, spec.seed + 2), out / "val");

  const ParamFootprint fp = param_count(m);
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  std::printf("model: %s\n", (out / "model").string().c_str());
  std::printf("params: %lld\n", static_cast<long long>(fp.total_params));
  std::printf("flops: %lld\n", static_cast<long long>(flops_estimate(m).total_flops));
  std::printf("groups: %zu\n", groups.size());
  std::printf("calib: %s %s\n", (out / "calib").string().c_str(), calib_shape.str().c_str());
  std::printf("val: %s %s\n", (out / "val").string().c_str(), val_shape.str().c_str());
  return 0;
}

int cmd_inspect(const std::string& model_dir, const std::string& target,
                const std::string& dot_path) {
  const ModelGraph m = load_model(model_dir);
  const DepGraph dg = build_depgraph(m);

  if (!target.empty()) {
    const PruningGroup g = collect_group(dg, parse_dimkey(target));
    const std::vector<std::string> gates = gate_set(m, g);
    std::printf("group: %s\n", g.id().c_str());
    std::printf("extent: %lld\n", static_cast<long long>(g.extent));
    std::printf("gates: %s\n", join(gates, " ").c_str());
    std::printf("members:\n");
    for (const GroupMember& mem : g.members) {
      std::printf("  %-16s extent %-4lld %s\n", mem.key.str().c_str(),
                  static_cast<long long>(mem.extent),
                  format_map(mem.map, g.extent).c_str());
    }
    if (!dot_path.empty()) {
      std::ofstream out(dot_path);
      check(out.good(), "cannot write '" + dot_path + "'");
      out << export_dot(m, g, gates);
    }
    return 0;
  }

  const ParamFootprint params = param_count(m);
  const ParamFootprint flops = flops_estimate(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);

  std::printf("params: %lld\n", static_cast<long long>(params.total_params));
  std::printf("flops: %lld\n", static_cast<long long>(flops.total_flops));
  std::printf("groups: %zu\n", groups.size());
  std::printf("%-16s %-7s %-8s %-10s %s\n", "root", "extent", "members", "params/ch", "gates");
  for (const PruningGroup& g : groups) {
    detail::VirtualExtents ext = detail::initial_extents(dg);
    const int64_t fp = detail::channel_footprint(m, g, 0, ext);
    std::printf("%-16s %-7lld %-8zu %-10lld %s\n", g.id().c_str(),
                static_cast<long long>(g.extent), g.members.size(),
                static_cast<long long>(fp), join(gate_set(m, g), " ").c_str());
  }
  if (!dot_path.empty()) {
    std::ofstream out(dot_path);
    check(out.good(), "cannot write '" + dot_path + "'");
    out << export_dot(dg);
  }
  return 0;
}

int cmd_prune(const std::string& model_dir, const std::string& out_dir,
              const std::string& calib_dir, const std::string& val_dir,
              const ScheduleConfig& cfg) {
  const ModelGraph m = load_model(model_dir);
  const Tensor calib = load_batch(calib_dir);
  const Tensor val = load_batch(val_dir);

  const ScheduleResult res = run_schedule(m, calib, val, cfg);

  const fs::path out(out_dir);
  fs::create_directories(out);
  save_model(res.model, out / "model");
  save_plan(res.plan, (out / "plan.json").string());
  save_report(res.report, (out / "report.json").string());

  std::printf("p0: %lld\n", static_cast<long long>(res.report.p0));
  std::printf("steps: %zu\n", res.report.steps.size());
  std::printf("final_params: %lld\n", static_cast<long long>(res.report.final_params));
  std::printf("final_flops: %lld\n", static_cast<long long>(res.report.final_flops));
  const double achieved =
      1.0 - static_cast<double>(res.report.final_params) / static_cast<double>(res.report.p0);
  std::printf("achieved_ratio: %.4f\n", achieved);
  std::printf("weights_hash: %s\n", weights_hash(res.model).c_str());
  std::printf("model: %s\n", (out / "model").string().c_str());
  std::printf("plan: %s\n", (out / "plan.json").string().c_str());
  std::printf("report: %s\n", (out / "report.json").string().c_str());
  if (res.report.floor_exhausted) {
    std::fprintf(stderr, "floor exhausted before reaching the target ratio; outputs are partial\n");
    return 2;
  }
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& batch_dir, int runs,
             const std::string& reference_dir) {
  check(runs >= 1, "--runs must be >= 1");
  const ModelGraph m = load_model(model_dir);
  const Tensor batch = load_batch(batch_dir);

  const ParamFootprint params = param_count(m);
  const ParamFootprint flops = flops_estimate(m);
  std::printf("params: %lld\n", static_cast<long long>(params.total_params));
  std::printf("flops: %lld\n", static_cast<long long>(flops.total_flops));

  ActivationMap outputs = forward(m, batch);  // warm-up, also the MSE operand
  double total_ms = 0.0;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    outputs = forward(m, batch);
    const auto t1 = std::chrono::steady_clock::now();
    total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::printf("forward_ms: %.3f (mean of %d runs)\n", total_ms / runs, runs);

  if (!reference_dir.empty()) {
    const ModelGraph ref = load_model(reference_dir);
    const ActivationMap ref_out = forward(ref, batch);
    std::printf("output_mse: %.9g\n", output_mse(ref_out, outputs));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured channel pruning toolkit"};
  app.require_subcommand(1);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "generate a toy model plus calibration data");
  std::string gen_out;
  ToySpec spec;
  std::string blocks_arg = "plain";
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", spec.seed, "rng seed");
  gen->add_option("--width", spec.width, "base channel width");
  gen->add_option("--in-channels", spec.in_channels, "input channels");
  gen->add_option("--in-size", spec.in_size, "input spatial size");
  gen->add_option("--blocks", blocks_arg, "comma list: plain,residual,concat,depthwise,downup");
  gen->add_option("--calib-batch", spec.calib_batch, "calibration batch size");
  gen->add_option("--val-batch", spec.val_batch, "validation batch size");

  // inspect
  auto* ins = app.add_subcommand("inspect", "list pruning groups and gate sets");
  std::string ins_model, ins_target, ins_dot;
  ins->add_option("--model", ins_model, "model directory")->required();
  ins->add_option("--target", ins_target, "single axis to expand, as layer:in or layer:out");
  ins->add_option("--dot", ins_dot, "write a DOT graph to this file");

  // prune
  auto* pr = app.add_subcommand("prune", "run the iterative pruning schedule");
  std::string pr_model, pr_out, pr_calib, pr_val, pr_config;
  double pr_ratio = 0.0, pr_step = 0.01;
  int64_t pr_floor = 1;
  std::string pr_agg = "mean";
  uint64_t pr_seed = 0;
  bool pr_always_hook = false;
  int pr_stride = 1;
  pr->add_option("--model", pr_model, "model directory")->required();
  pr->add_option("--out", pr_out, "output directory")->required();
  pr->add_option("--calib", pr_calib, "calibration batch directory")->required();
  pr->add_option("--val", pr_val, "validation batch directory")->required();
  pr->add_option("--config", pr_config, "flat key = value config file");
  auto* opt_ratio = pr->add_option("--ratio", pr_ratio, "target parameter reduction in (0,1)");
  auto* opt_step = pr->add_option("--step", pr_step, "fraction of original params per step");
  auto* opt_floor = pr->add_option("--floor", pr_floor, "minimum channels kept per group");
  auto* opt_agg = pr->add_option("--agg", pr_agg, "gate aggregation: mean, sum, or max");
  auto* opt_seed = pr->add_option("--seed", pr_seed, "seed recorded in the report");
  auto* opt_hook = pr->add_flag("--always-hook", pr_always_hook,
                                "run the recovery hook every step");
  auto* opt_stride =
      pr->add_option("--spatial-stride", pr_stride, "score every Nth spatial position");

  // eval
  auto* ev = app.add_subcommand("eval", "measure params, flops, and forward time");
  std::string ev_model, ev_batch, ev_ref;
  int ev_runs = 10;
  ev->add_option("--model", ev_model, "model directory")->required();
  ev->add_option("--batch", ev_batch, "input batch directory")->required();
  ev->add_option("--runs", ev_runs, "timed forward passes");
  ev->add_option("--reference", ev_ref, "reference model for output MSE");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::vector<BlockKind> blocks;
      for (const std::string& b : split_commas(blocks_arg)) blocks.push_back(parse_block(b));
      spec.blocks = blocks;
      return cmd_gen_toy(spec, gen_out);
    }
    if (ins->parsed()) return cmd_inspect(ins_model, ins_target, ins_dot);
    if (pr->parsed()) {
      ScheduleConfig cfg;
      if (!pr_config.empty()) load_config_file(pr_config, cfg);
      if (opt_ratio->count()) cfg.ratio = pr_ratio;
      if (opt_step->count()) cfg.step_fraction = pr_step;
      if (opt_floor->count()) cfg.floor = pr_floor;
      if (opt_agg->count()) cfg.agg = parse_aggregation(pr_agg);
      if (opt_seed->count()) cfg.seed = pr_seed;
      if (opt_hook->count()) cfg.always_hook = pr_always_hook;
      if (opt_stride->count()) cfg.spatial_stride = pr_stride;
      return cmd_prune(pr_model, pr_out, pr_calib, pr_val, cfg);
    }
    if (ev->parsed()) return cmd_eval(ev_model, ev_batch, ev_runs, ev_ref);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
