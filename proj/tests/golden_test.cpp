// Golden serialization, parsing and diffs.

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>

#include "composer/golden.hpp"
#include "composer/layers.hpp"

namespace composer {
namespace {

using F = FieldSpec;
using V = ValueKind;

// Shortest "%.{p}g" that reads back exactly.
std::string shortest_oracle(double v) {
  char buf[64];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

// Normalizes "2.5e-07" / "2.5e-7" to a comparable (mantissa, exponent).
std::pair<std::string, int> split_exp(const std::string& s) {
  const auto e = s.find('e');
  if (e == std::string::npos) return {s, 0};
  return {s.substr(0, e), std::atoi(s.c_str() + e + 1)};
}

TEST(Golden, LinearExample) {
  Registry reg;
  reg.register_component({"Linear", {F::required("input_dim", V::kInt), F::required("output_dim", V::kInt),
                                     F::value("bias", V::kBool, true)}, "linear"});
  ConfigNode lin = set(set(reg.default_config("Linear"), "input_dim", 4, reg), "output_dim", 2, reg);
  EXPECT_EQ(serialize_golden(lin), ".klass: Linear\nbias: true\ninput_dim: 4\noutput_dim: 2\n");
  EXPECT_EQ(serialize_golden(reg.default_config("Linear")),
            ".klass: Linear\nbias: true\ninput_dim: REQUIRED\noutput_dim: REQUIRED\n");
}

TEST(Golden, ScaledHiddenDimRendering) {
  layers::register_builtins();
  ConfigNode ffn = set(default_config("FeedForward"), "hidden_dim", layers::scaled_hidden_dim_spec(8.0 / 3.0));
  const std::string g = serialize_golden(ffn);
  EXPECT_NE(g.find("hidden_dim: fn:scaled_hidden_dim(scale=2.6666666666666665)\n"), std::string::npos) << g;
  EXPECT_EQ(shortest_oracle(8.0 / 3.0), "2.6666666666666665");
}

TEST(Golden, FloatRenderingMatchesDecimalOracle) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> mant(-10.0, 10.0);
  std::uniform_int_distribution<int> expo(-30, 30);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(mant(gen), expo(gen));
    const std::string mine = render_double(v);
    EXPECT_EQ(std::strtod(mine.c_str(), nullptr), v);
    // Same number of significant digits as the shortest %g form.
    auto digits = [](const std::string& s) {
      const std::string m = split_exp(s).first;
      std::string d;
      for (char c : m)
        if (std::isdigit(static_cast<unsigned char>(c))) d += c;
      while (!d.empty() && d.front() == '0') d.erase(d.begin());
      while (!d.empty() && d.back() == '0') d.pop_back();
      return d;
    };
    EXPECT_EQ(digits(mine), digits(shortest_oracle(v))) << mine << " vs " << shortest_oracle(v);
  }
  EXPECT_EQ(render_double(1.0), "1.0");
  EXPECT_EQ(render_double(0.5), "0.5");
  EXPECT_EQ(render_double(1e-6), "1e-06");
}

TEST(Golden, CollectionsAndText) {
  Registry reg;
  reg.register_component({"Box", {F::value("names", V::kSequence, Sequence{}), F::value("opts", V::kMapping, Mapping{}),
                                  F::value("label", V::kText, "a\"b\\c\n")}, ""});
  ConfigNode box = reg.default_config("Box");
  EXPECT_EQ(serialize_golden(box), ".klass: Box\nlabel: \"a\\\"b\\\\c\\n\"\nnames: []\nopts: {}\n");
  Mapping m;
  m.insert_or_assign("z", 1);
  m.insert_or_assign("a.b", text_sequence({"x"}));
  box = set(set(box, "opts", m, reg), "names", text_sequence({"p", "q"}), reg);
  EXPECT_EQ(serialize_golden(box),
            ".klass: Box\nlabel: \"a\\\"b\\\\c\\n\"\nnames[0]: \"p\"\nnames[1]: \"q\"\nopts[\"a.b\"][0]: \"x\"\nopts[\"z\"]: 1\n");
  EXPECT_EQ(config_from_golden(serialize_golden(box), reg), box);
}

TEST(Golden, DeterministicAndRoundTrips) {
  layers::register_builtins();
  ConfigNode lm = default_config("CausalLM");
  ConfigNode layer = set(default_config("TransformerLayer"), "feed_forward.hidden_dim",
                         layers::scaled_hidden_dim_spec(8.0 / 3.0));
  lm = set(lm, "decoder.transformer.layer", Sequence(3, ConfigValue(layer)));
  const std::string a = serialize_golden(lm);
  EXPECT_EQ(a, serialize_golden(lm));
  EXPECT_EQ(a.back(), '\n');
  const ConfigNode back = config_from_golden(a);
  EXPECT_EQ(back, lm);
  EXPECT_EQ(serialize_golden(back), a);
  // Lines are sorted by path.
  const auto lines = parse_golden_lines(a);
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_LT(lines[i - 1].first, lines[i].first);
  EXPECT_EQ(render_golden_lines(lines), a);
}

TEST(Golden, Diff) {
  layers::register_builtins();
  const ConfigNode a = default_config("TransformerLayer");
  EXPECT_TRUE(golden_diff(serialize_golden(a), serialize_golden(a)).empty());
  const ConfigNode b = set(a, "norm_eps", 1e-5);
  const auto d = golden_diff(serialize_golden(a), serialize_golden(b));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].path, "norm_eps");
  EXPECT_EQ(*d[0].old_value, "1e-06");
  EXPECT_EQ(*d[0].new_value, "1e-05");

  const ConfigNode c = replace_config(set(a, "input_dim", 8), "FeedForward", default_config("MoE")).first;
  for (const auto& e : golden_diff(serialize_golden(set(a, "input_dim", 8)), serialize_golden(c)))
    EXPECT_TRUE(e.path.rfind("feed_forward.", 0) == 0) << e.path;
}

TEST(Golden, Malformed) {
  EXPECT_THROW(parse_golden_lines("no separator here\n"), Error);
  EXPECT_THROW(parse_golden_lines("a: 1\na: 2\n"), Error);
  try {
    golden_diff("x: 1\n", ": 2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedGolden);
  }
}

TEST(Golden, ParseValues) {
  EXPECT_EQ(parse_golden_value("REQUIRED"), ConfigValue(Required{}));
  EXPECT_EQ(parse_golden_value("true"), ConfigValue(true));
  EXPECT_EQ(parse_golden_value("-12"), ConfigValue(-12));
  EXPECT_EQ(parse_golden_value("2.0"), ConfigValue(2.0));
  EXPECT_EQ(parse_golden_value("\"q\\\"\""), ConfigValue("q\""));
  EXPECT_EQ(parse_golden_value("[]"), ConfigValue(Sequence{}));
  EXPECT_EQ(parse_golden_value("{}"), ConfigValue(Mapping{}));
  const ConfigValue fn = parse_golden_value("fn:scaled_hidden_dim(scale=2.6666666666666665)");
  ASSERT_TRUE(fn.is_function());
  EXPECT_EQ(fn.as_function().name, "scaled_hidden_dim");
  EXPECT_EQ(std::get<double>(fn.as_function().args.at("scale")), 8.0 / 3.0);
}

}  // namespace
}  // namespace composer
