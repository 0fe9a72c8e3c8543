// Experiment registry, compose, forward runs and feature audits.

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "composer/experiments.hpp"
#include "composer/golden.hpp"

namespace composer {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIo;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

const std::filesystem::path kFixtures = COMPOSER_SOURCE_DIR "/tests/golden";

TEST(Registry, BuiltinExperiments) {
  const auto reg = builtin_experiments();
  EXPECT_GE(reg.size(), 20u);
  EXPECT_TRUE(reg.has("txf_base"));
  EXPECT_EQ(get(reg.build("txf_base"), "model.decoder.dim"), ConfigValue(32));
  EXPECT_EQ(code_of([&] { reg.build("nope"); }), ErrorCode::kUnknownExperiment);
}

TEST(Registry, CommittedFixturesMatch) {
  const auto reg = builtin_experiments();
  std::set<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(kFixtures))
    if (e.path().extension() == ".golden") files.insert(e.path().stem().string());
  const auto names = reg.names();
  EXPECT_EQ(files, std::set<std::string>(names.begin(), names.end()));
  for (const auto& name : names) EXPECT_EQ(read_file(kFixtures / (name + ".golden")), serialize_golden(reg.build(name))) << name;
  const auto loaded = ExperimentRegistry::from_directory(kFixtures);
  EXPECT_EQ(loaded.build("txf_base"), reg.build("txf_base"));
  EXPECT_EQ(code_of([] { ExperimentRegistry::from_directory("/nonexistent"); }), ErrorCode::kIo);
}

TEST(Registry, ExportRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "composer_export_test";
  std::filesystem::remove_all(dir);
  const auto reg = builtin_experiments();
  export_registry(reg, dir);
  const auto back = ExperimentRegistry::from_directory(dir);
  ASSERT_EQ(back.names(), reg.names());
  for (const auto& n : reg.names()) EXPECT_EQ(serialize_golden(back.build(n)), serialize_golden(reg.build(n)));
  std::filesystem::remove_all(dir);
}

TEST(Compose, H100AndIdempotence) {
  const auto reg = builtin_experiments();
  const auto cat = builtin_catalog();
  const ConfigNode a = compose(reg, "txf_base", "gpu-H100-8", cat);
  EXPECT_EQ(get(a, "mesh_shape"), ConfigValue(Sequence{std::int64_t{8}, std::int64_t{8}}));
  EXPECT_EQ(serialize_golden(a), serialize_golden(compose(reg, "txf_base", "gpu-H100-8", cat)));
  // Recomposing the composed config changes nothing.
  EXPECT_EQ(serialize_golden(compose_config(a, "gpu-H100-8", cat)), serialize_golden(a));
  EXPECT_EQ(code_of([&] { compose(reg, "nope", "gpu-H100-8", cat); }), ErrorCode::kUnknownExperiment);
  EXPECT_EQ(code_of([&] { compose(reg, "txf_base", "nope", cat); }), ErrorCode::kUnknownInstance);
}

TEST(Compose, RulesOverride) {
  const auto reg = builtin_experiments();
  const std::vector<MeshRule> rules = {{"gpu-*", {mesh({{"data", -1}})}}};
  const ConfigNode c = compose(reg, "txf_base", "gpu-H100-8", builtin_catalog(), rules);
  EXPECT_EQ(get(c, "mesh_shape"), ConfigValue(Sequence{std::int64_t{64}}));
}

TEST(Run, DeterministicPerSeed) {
  const ConfigNode cfg = builtin_experiments().build("txf_d16_h2_gelu_h4x");
  RunOptions o;
  o.steps = 2;
  o.seed = 5;
  const auto a = run_forward(cfg, o), b = run_forward(cfg, o);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
  EXPECT_TRUE(a[0].scalars.count("model/loss"));
  o.seed = 6;
  EXPECT_NE(run_forward(cfg, o)[0].scalars.at("model/loss"), a[0].scalars.at("model/loss"));
}

TEST(Run, MoeReportsLoadBalancePerLayer) {
  const ConfigNode cfg = moe_mutator().apply(builtin_experiments().build("txf_base")).config;
  const auto s = run_forward(cfg, {});
  std::set<std::string> lb;
  for (const auto& [k, _] : s[0].scalars)
    if (k.ends_with("/load_balance_loss")) lb.insert(k);
  const auto layers = get(cfg, "model.decoder.transformer.layer").as_sequence().size();
  EXPECT_EQ(lb.size(), layers);
  for (std::size_t i = 0; i < layers; ++i)
    EXPECT_TRUE(lb.count("model.decoder.transformer.layer[" + std::to_string(i) + "].feed_forward/load_balance_loss"));
}

TEST(Run, ShapeErrorsBeforeAnyStep) {
  const ConfigNode cfg = builtin_experiments().build("txf_base");
  RunOptions o;
  o.seq_len = 0;
  EXPECT_EQ(code_of([&] { run_forward(cfg, o); }), ErrorCode::kShape);
  const ConfigNode bad = set(cfg, "model.decoder.transformer.layer[0].self_attention.num_heads", 3);
  EXPECT_EQ(code_of([&] { run_forward(bad, {}); }), ErrorCode::kShape);
}

std::set<std::string> diff_paths(const ConfigNode& a, const ConfigNode& b) {
  std::set<std::string> out;
  for (const auto& d : golden_diff(serialize_golden(a), serialize_golden(b))) out.insert(d.path);
  return out;
}

// Diff paths equal the golden lines under the replaced subtrees, on either side.
void expect_exact_containment(const Mutator& m) {
  const auto reg = builtin_experiments();
  for (const auto& name : reg.names()) {
    const ConfigNode before = reg.build(name);
    const MutationResult r = m.apply(before);
    ASSERT_FALSE(r.report.replaced_paths.empty()) << name;
    std::set<std::string> under;
    for (const auto& text : {serialize_golden(before), serialize_golden(r.config)})
      for (const auto& [path, value] : parse_golden_lines(text))
        for (const auto& p : r.report.replaced_paths)
          if (path_under(path, p)) under.insert(path);
    std::set<std::string> diff = diff_paths(before, r.config);
    for (const auto& path : diff)
      EXPECT_TRUE(under.count(path)) << name << ": " << path;
    for (const auto& p : r.report.replaced_paths) {
      bool touched = false;
      for (const auto& path : diff) touched = touched || path_under(path, p);
      EXPECT_TRUE(touched) << name << ": " << p;
    }
  }
}

TEST(Audit, MoeDiffContained) { expect_exact_containment(moe_mutator()); }
TEST(Audit, RopeDiffContained) { expect_exact_containment(rope_mutator()); }

TEST(Audit, PassesOverRegistry) {
  const auto reg = builtin_experiments();
  for (const char* feature : {"moe", "rope"}) {
    const AuditReport r = audit(reg, mutator_for_feature(feature));
    EXPECT_TRUE(r.passed) << r.to_json().dump(2);
    EXPECT_EQ(r.num_experiments, reg.size());
    EXPECT_EQ(r.num_variants, reg.size());
    EXPECT_EQ(r.mutators_used, 1u);
    EXPECT_EQ(r.digest_before, r.digest_after);
  }
  EXPECT_EQ(code_of([] { mutator_for_feature("flash"); }), ErrorCode::kInvalidArgument);
}

TEST(Audit, BrokenExperimentFails) {
  ExperimentRegistry reg;
  reg.add("bad", [] {
    return set(builtin_experiments().build("txf_base"), "model.decoder.transformer.layer[0].self_attention.num_heads", 3);
  });
  const AuditReport r = audit(reg, moe_mutator());
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.experiments[0].error.find("E_BROKEN_CONFIG"), std::string::npos) << r.experiments[0].error;
}

TEST(Audit, PathUnder) {
  EXPECT_TRUE(path_under("a.b", "a.b"));
  EXPECT_TRUE(path_under("a.b.c", "a.b"));
  EXPECT_TRUE(path_under("a.b[0]", "a.b"));
  EXPECT_FALSE(path_under("a.bc", "a.b"));
}

}  // namespace
}  // namespace composer
