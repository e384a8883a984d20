#include "doctest.h"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stepcritic/gateway.hpp"
#include "stepcritic/mclabel.hpp"
#include "stepcritic/prompts.hpp"

using namespace stepcritic;
using namespace stepcritic::mclabel;
using gateway::ScriptRule;

namespace {

const prompts::TemplateStore& asset_store() {
  static prompts::TemplateStore store{STEPCRITIC_ASSET_DIR};
  return store;
}

PassRateProfile profile_of(std::vector<double> fractions) {
  return PassRateProfile{std::move(fractions), 8};
}

int label_value(const LabelDecision& d) {
  REQUIRE(is_label(d));
  return std::get<core::FirstErrorLabel>(d).value;
}

std::string discard_reason(const LabelDecision& d) {
  REQUIRE_FALSE(is_label(d));
  return std::get<Discard>(d).reason;
}

gateway::EndpointConfig generator_endpoint() {
  gateway::EndpointConfig cfg;
  cfg.base_url = "scripted://generator";
  cfg.model_name = "gen";
  cfg.backoff_initial_ms = 1;
  return cfg;
}

}  // namespace

TEST_CASE("screening keeps only problems with mixed outcomes") {
  CHECK(screen_problem({true, false}) == Screen::keep);
  CHECK(screen_problem({false, true, true, false}) == Screen::keep);
  CHECK(screen_problem({true, true, true}) == Screen::discard);
  CHECK(screen_problem({false, false}) == Screen::discard);
  CHECK(screen_problem({true}) == Screen::discard);
  CHECK(screen_problem({false}) == Screen::discard);
  CHECK_THROWS_AS(screen_problem({}), std::invalid_argument);
}

TEST_CASE("incorrect solutions are labeled at the zero cliff") {
  CHECK(label_value(label_incorrect_solution(profile_of({0.9, 0.0}))) == 2);
  CHECK(label_value(label_incorrect_solution(profile_of({0.0}))) == 1);
  CHECK(label_value(label_incorrect_solution(profile_of({0.0, 0.0, 0.0}))) == 1);
  CHECK(label_value(label_incorrect_solution(profile_of({0.9, 0.6, 0.0, 0.0}))) == 3);
  CHECK(label_value(label_incorrect_solution(profile_of({1.0, 0.0}))) == 2);

  SUBCASE("the prefix threshold is strict") {
    CHECK_FALSE(is_label(label_incorrect_solution(profile_of({0.5, 0.0}))));
    CHECK(label_value(label_incorrect_solution(profile_of({0.5001, 0.0}))) == 2);
    CHECK(label_value(label_incorrect_solution(profile_of({0.5, 0.0}), 0.25)) == 2);
  }

  SUBCASE("weak prefixes and absent cliffs discard") {
    CHECK_FALSE(is_label(label_incorrect_solution(profile_of({0.9, 0.2, 0.0}))));
    CHECK_FALSE(is_label(label_incorrect_solution(profile_of({0.9, 0.8}))));
    CHECK_FALSE(is_label(label_incorrect_solution(profile_of({0.6, 0.0, 0.1}))));
    CHECK(discard_reason(label_incorrect_solution(profile_of({0.9, 0.8})))
              .find("isolate") != std::string::npos);
  }

  SUBCASE("no estimates discard") {
    CHECK_FALSE(is_label(label_incorrect_solution(profile_of({}))));
  }
}

TEST_CASE("correct solutions need every step above the threshold") {
  CHECK(label_value(label_correct_solution(profile_of({0.6, 0.9, 1.0}))) ==
        core::FirstErrorLabel::kAllCorrect);
  CHECK(label_value(label_correct_solution(profile_of({1.0}))) ==
        core::FirstErrorLabel::kAllCorrect);
  CHECK_FALSE(is_label(label_correct_solution(profile_of({0.5, 0.9}))));  // strict
  CHECK_FALSE(is_label(label_correct_solution(profile_of({0.9, 0.0}))));
  CHECK_FALSE(is_label(label_correct_solution(profile_of({}))));
  CHECK(label_value(label_correct_solution(profile_of({0.3, 0.4}), 0.25)) ==
        core::FirstErrorLabel::kAllCorrect);
}

TEST_CASE("labeling rules match a brute-force re-statement on a fraction grid") {
  // Every pass-rate vector of length <= 3 over {0, 1/8, ..., 1}.
  const int kSteps = 8;
  const double threshold = 0.5;
  std::vector<std::vector<double>> vectors{{}};
  long checked = 0;
  for (int len = 1; len <= 3; ++len) {
    std::vector<std::vector<double>> next;
    for (const auto& v : vectors) {
      if (static_cast<int>(v.size()) != len - 1) continue;
      for (int num = 0; num <= kSteps; ++num) {
        auto w = v;
        w.push_back(static_cast<double>(num) / kSteps);
        next.push_back(w);
      }
    }
    for (const auto& f : next) {
      const std::size_t n = f.size();
      // Oracle for the incorrect-answer rule: try each position directly.
      int expected = 0;  // 0 = discard
      for (std::size_t j = 1; j <= n && expected == 0; ++j) {
        bool ok = true;
        for (std::size_t m = j; m <= n; ++m)
          if (f[m - 1] != 0.0) ok = false;
        for (std::size_t m = 1; m < j; ++m)
          if (f[m - 1] <= threshold) ok = false;
        if (ok) expected = static_cast<int>(j);
      }
      const auto got = label_incorrect_solution(profile_of(f), threshold);
      if (expected == 0) {
        CHECK_FALSE(is_label(got));
      } else {
        CHECK(label_value(got) == expected);
      }

      // Oracle for the correct-answer rule: every rate strictly above.
      bool all_above = true;
      for (double v : f)
        if (v <= threshold) all_above = false;
      const auto got_correct = label_correct_solution(profile_of(f), threshold);
      CHECK(is_label(got_correct) == all_above);
      ++checked;
    }
    vectors.insert(vectors.end(), next.begin(), next.end());
  }
  CHECK(checked == 9 + 81 + 729);
}

TEST_CASE("pass rates come from per-prefix rollouts") {
  // Deeper prefixes first: rule order is the dispatcher.
  ScriptRule deep;
  deep.name = "from-step-2";
  deep.match = [](const std::string& p) {
    return p.find("Step 2: multiply by 3") != std::string::npos;
  };
  deep.respond = [](const std::string&, int ordinal) {
    return ordinal == 0 ? "so \\boxed{21}" : "so \\boxed{20}";
  };
  ScriptRule shallow;
  shallow.name = "from-step-1";
  shallow.match = [](const std::string& p) {
    return p.find("Step 1: start with 7") != std::string::npos;
  };
  shallow.respond = [](const std::string&, int ordinal) {
    return ordinal < 3 ? "thus \\boxed{\\frac{42}{2}}" : "thus \\boxed{22}";
  };
  auto backend = std::make_shared<gateway::ScriptedBackend>(std::vector<ScriptRule>{deep, shallow});

  gateway::Gateway gw;
  auto cfg = generator_endpoint();
  gw.register_endpoint(cfg, backend);

  core::Problem problem{"p1", "Triple 7.", "21", core::Source::other};
  const std::vector<std::string> steps{"start with 7", "multiply by 3"};
  const auto profile = estimate_pass_rates(gw, cfg, asset_store(), problem, steps, 4,
                                           {1.0, 0.9, 256, 1});
  REQUIRE(profile.fractions.size() == 2);
  CHECK(profile.rollouts_per_step == 4);
  CHECK(profile.fractions[0] == 0.75);  // three of four match via 42/2 == 21
  CHECK(profile.fractions[1] == 0.25);
  CHECK(backend->call_count() == 8);
}

TEST_CASE("rollouts replay from the cache") {
  const auto cache = std::filesystem::temp_directory_path() / "stepcritic_mc_cache";
  std::filesystem::remove_all(cache);
  std::filesystem::create_directories(cache);

  ScriptRule any;
  any.name = "any";
  any.match = [](const std::string&) { return true; };
  any.respond = [](const std::string&, int ordinal) {
    return ordinal % 2 == 0 ? "\\boxed{4}" : "\\boxed{5}";
  };
  auto backend = std::make_shared<gateway::ScriptedBackend>(std::vector<ScriptRule>{any});
  gateway::Gateway gw({cache});
  auto cfg = generator_endpoint();
  gw.register_endpoint(cfg, backend);

  core::Problem problem{"p1", "2+2?", "4", core::Source::other};
  const auto first =
      estimate_pass_rates(gw, cfg, asset_store(), problem, {"add"}, 8, {1.0, 0.9, 64, 1});
  const int calls_after_first = backend->call_count();
  const auto second =
      estimate_pass_rates(gw, cfg, asset_store(), problem, {"add"}, 8, {1.0, 0.9, 64, 1});
  CHECK(first.fractions == second.fractions);
  CHECK(first.fractions[0] == 0.5);
  CHECK(backend->call_count() == calls_after_first);
  std::filesystem::remove_all(cache);
}

TEST_CASE("a rollout that keeps failing counts as incorrect") {
  ScriptRule flaky;
  flaky.name = "flaky";
  flaky.match = [](const std::string&) { return true; };
  flaky.fail_first = 1;
  flaky.respond = [](const std::string&, int) { return std::string("\\boxed{9}"); };
  auto backend = std::make_shared<gateway::ScriptedBackend>(std::vector<ScriptRule>{flaky});

  gateway::Gateway gw;
  auto cfg = generator_endpoint();
  cfg.max_retries = 0;  // the first failure is final
  gw.register_endpoint(cfg, backend);

  core::Problem problem{"p1", "3*3?", "9", core::Source::other};
  const auto profile =
      estimate_pass_rates(gw, cfg, asset_store(), problem, {"square it"}, 2, {1.0, 0.9, 64, 1});
  CHECK(profile.fractions[0] == 0.5);
}

TEST_CASE("rollout preconditions are validated") {
  gateway::Gateway gw;
  auto cfg = generator_endpoint();
  core::Problem problem{"p1", "q", "1", core::Source::other};
  CHECK_THROWS_AS(
      estimate_pass_rates(gw, cfg, asset_store(), problem, {}, 4, {1.0, 0.9, 64, 1}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      estimate_pass_rates(gw, cfg, asset_store(), problem, {"s"}, 0, {1.0, 0.9, 64, 1}),
      std::invalid_argument);
  core::Problem no_ref{"p2", "q", std::nullopt, core::Source::other};
  CHECK_THROWS_AS(
      estimate_pass_rates(gw, cfg, asset_store(), no_ref, {"s"}, 4, {1.0, 0.9, 64, 1}),
      std::invalid_argument);
}
