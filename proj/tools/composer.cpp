// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// composer: compose experiments, emit golden configs, AOT analysis, desk-scale
// forward runs, runtime simulations and the feature-swap audit.
//
// Exit codes: 0 ok, 1 usage error or golden-diff found differences,
// 2 config error, 3 OOM flagged by aot, 4 audit failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "composer/experiments.hpp"
#include "composer/golden.hpp"
#include "composer/mesh_plan.hpp"
#include "composer/runtime_sim.hpp"

namespace {

using namespace composer;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitOom = 3;
constexpr int kExitAudit = 4;

DeviceCatalog catalog_from_env() {
  if (const char* path = std::getenv("COMPOSER_CATALOG"); path && *path) return load_catalog(path);
  return builtin_catalog();
}

ExperimentRegistry registry_from(const std::string& dir) {
  register_all();
  return dir.empty() ? builtin_experiments() : ExperimentRegistry::from_directory(dir);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_number(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

struct Options {
  std::string experiment;
  std::string instance_type;
  std::string rules;
  std::string emit_golden;
  std::string registry;
  std::string feature;
  std::string scenario;
  std::string out_dir;
  std::string golden_a, golden_b;
  std::optional<std::int64_t> batch;
  std::optional<std::int64_t> seq_len;
  std::int64_t steps = 1;
  std::uint64_t seed = 0;
  bool json = false;
};

int cmd_compose(const Options& o) {
  const auto reg = registry_from(o.registry);
  std::optional<std::vector<MeshRule>> rules;
  if (!o.rules.empty()) rules = load_rules_file(o.rules);
  const std::string golden = serialize_golden(compose(reg, o.experiment, o.instance_type, catalog_from_env(), rules));
  if (o.emit_golden.empty()) {
    std::cout << golden;
  } else {
    std::ofstream out(o.emit_golden);
    if (!out) throw Error(ErrorCode::kIo, o.emit_golden, "cannot write");
    out << golden;
  }
  return kExitOk;
}

int cmd_aot(const Options& o) {
  const auto reg = registry_from(o.registry);
  const auto catalog = catalog_from_env();
  const ConfigNode cfg = compose(reg, o.experiment, o.instance_type, catalog);
  const AotReport r = aot_analyze(cfg, o.instance_type, catalog, *o.batch, *o.seq_len);
  const nlohmann::json j = r.to_json();
  if (o.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& [k, v] : j.items()) std::cout << k << ": " << v.dump() << "\n";
  }
  if (r.oom) {
    std::cerr << "E_OOM(" << o.instance_type << "): " << r.hbm_total_bytes << " bytes per device exceed "
              << format_number(r.hbm_capacity) << "\n";
    return kExitOom;
  }
  return kExitOk;
}

int cmd_run(const Options& o) {
  const auto reg = registry_from(o.registry);
  const ConfigNode cfg = compose(reg, o.experiment, o.instance_type, catalog_from_env());
  RunOptions run;
  run.steps = o.steps;
  run.seed = o.seed;
  run.batch = o.batch.value_or(run.batch);
  run.seq_len = o.seq_len.value_or(run.seq_len);
  const auto summaries = run_forward(cfg, run);
  if (o.json) {
    json j = json::array();
    for (const auto& s : summaries) j.push_back(to_json(s));
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& s : summaries)
      for (const auto& [k, v] : s.scalars) std::cout << "step " << s.step << " " << k << " " << format_number(v) << "\n";
  }
  return kExitOk;
}

int cmd_audit(const Options& o) {
  const auto reg = registry_from(o.registry);
  const AuditReport r = audit(reg, mutator_for_feature(o.feature));
  if (o.json) {
    std::cout << r.to_json().dump(2) << "\n";
  } else {
    std::cout << "feature " << r.feature << "\n"
              << "num_experiments " << r.num_experiments << "\n"
              << "num_modules " << r.num_modules << "\n"
              << "num_variants " << r.num_variants << "\n"
              << "nodes_replaced " << r.nodes_replaced << "\n"
              << "mutators_used " << r.mutators_used << "\n"
              << "module_registry_digest_before " << r.digest_before << "\n"
              << "module_registry_digest_after " << r.digest_after << "\n";
    for (const auto& e : r.experiments)
      std::cout << (e.forward_ok && e.diff_contained ? "ok   " : "FAIL ") << e.experiment << " replaced="
                << e.replaced_paths.size() << " diff_lines=" << e.diff_lines << (e.error.empty() ? "" : " " + e.error)
                << "\n";
    std::cout << (r.passed ? "PASS" : "FAIL") << "\n";
  }
  if (r.digest_before != r.digest_after) std::cerr << "E_MUTATED_CODE(" << r.feature << ")\n";
  return r.passed ? kExitOk : kExitAudit;
}

int cmd_simulate(const std::string& what, const Options& o) {
  const sim::Scenario s = sim::Scenario::load(o.scenario);
  json j;
  if (what == "save") {
    const auto plan = sim::plan_checkpoint(sim::manifest_from_scenario(s));
    const auto r = sim::simulate_save(plan, static_cast<int>(s.integer("bound")), s.number("copy_rate"));
    j["duration_seconds"] = r.duration_seconds;
    j["peak_host_bytes"] = r.peak_host_bytes;
    for (const auto& [replica, shards] : plan) {
      json names = json::array();
      for (const auto& sh : shards) names.push_back(sh.name);
      j["plan"][std::to_string(replica)] = names;
    }
  } else if (what == "recovery") {
    for (auto [name, mode] : {std::pair{"remote_restore", sim::RecoveryMode::kRemoteRestore},
                              std::pair{"peer_broadcast", sim::RecoveryMode::kPeerBroadcast}}) {
      const auto r = sim::simulate_recovery(sim::recovery_from_scenario(s, mode));
      j[name] = {{"lost_work_seconds", r.lost_work_seconds},
                 {"restore_seconds", r.restore_seconds},
                 {"total_downtime", r.total_downtime}};
    }
  } else {
    const auto trace = sim::parse_trace(read_file(s.file("trace").string()));
    j["events"] = json::array();
    for (const auto& e : sim::watchdog_scan(trace, sim::watchdog_from_scenario(s))) j["events"].push_back(e.to_string());
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_golden_diff(const Options& o) {
  const auto diff = golden_diff(read_file(o.golden_a), read_file(o.golden_b));
  for (const auto& d : diff) {
    if (d.old_value) std::cout << "- " << d.path << ": " << *d.old_value << "\n";
    if (d.new_value) std::cout << "+ " << d.path << ": " << *d.new_value << "\n";
  }
  return diff.empty() ? kExitOk : 1;
}

int cmd_export(const Options& o) {
  export_registry(builtin_experiments(), o.out_dir);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"composer: hierarchical config composition for desk-scale training experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_experiment = [&](CLI::App* c) {
    c->add_option("--experiment", o.experiment, "Experiment name")->required();
    c->add_option("--instance-type", o.instance_type, "Target instance type")->required();
    c->add_option("--registry", o.registry, "Directory of <experiment>.golden files");
  };

  auto* compose_cmd = app.add_subcommand("compose", "Apply mesh rules and print the golden config");
  add_experiment(compose_cmd);
  compose_cmd->add_option("--rules", o.rules, "MeshRuleSet golden file overriding embedded rules");
  compose_cmd->add_option("--emit-golden", o.emit_golden, "Write the golden config here");

  auto* aot_cmd = app.add_subcommand("aot", "Estimate memory, FLOPs and step time");
  add_experiment(aot_cmd);
  aot_cmd->add_option("--batch", o.batch)->required();
  aot_cmd->add_option("--seq-len", o.seq_len)->required();
  aot_cmd->add_flag("--json", o.json);

  auto* run_cmd = app.add_subcommand("run", "Run forward steps on synthetic data");
  add_experiment(run_cmd);
  run_cmd->add_option("--steps", o.steps)->required();
  run_cmd->add_option("--seed", o.seed)->required();
  run_cmd->add_option("--batch", o.batch);
  run_cmd->add_option("--seq-len", o.seq_len);
  run_cmd->add_flag("--json", o.json);

  auto* audit_cmd = app.add_subcommand("audit", "Swap a feature into every experiment by config alone");
  audit_cmd->add_option("--feature", o.feature)->required()->check(CLI::IsMember({"moe", "rope"}));
  audit_cmd->add_option("--registry", o.registry, "Directory of <experiment>.golden files");
  audit_cmd->add_flag("--json", o.json);

  auto* sim_cmd = app.add_subcommand("simulate", "Runtime simulations");
  sim_cmd->require_subcommand(1);
  std::string sim_kind;
  for (const char* kind : {"save", "recovery", "watchdog"}) {
    auto* c = sim_cmd->add_subcommand(kind);
    c->add_option("--scenario", o.scenario)->required();
    c->callback([&sim_kind, kind] { sim_kind = kind; });
  }

  auto* diff_cmd = app.add_subcommand("golden-diff", "Diff two golden configs");
  diff_cmd->add_option("A", o.golden_a)->required();
  diff_cmd->add_option("B", o.golden_b)->required();

  auto* export_cmd = app.add_subcommand("export-registry", "Write the builtin experiments as golden files");
  export_cmd->add_option("--out", o.out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compose_cmd) return cmd_compose(o);
    if (*aot_cmd) return cmd_aot(o);
    if (*run_cmd) return cmd_run(o);
    if (*audit_cmd) return cmd_audit(o);
    if (*sim_cmd) return cmd_simulate(sim_kind, o);
    if (*diff_cmd) return cmd_golden_diff(o);
    if (*export_cmd) return cmd_export(o);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
