#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepcritic/exporter.hpp"
#include "stepcritic/parse.hpp"
#include "stepcritic/prompts.hpp"

using namespace stepcritic;
using namespace stepcritic::exporter;
using nlohmann::json;

namespace {

const prompts::TemplateStore& asset_store() {
  static prompts::TemplateStore store{STEPCRITIC_ASSET_DIR};
  return store;
}

core::StepCritique merged_step(int index, core::StepVerdict verdict, std::string text) {
  core::StepCritique c;
  c.step_index = index;
  c.initial_text = "initial";
  c.initial_verdict = verdict;
  c.merged_text = std::move(text);
  c.merged_verdict = verdict;
  return c;
}

seedsynth::SynthRecord record_with(std::vector<core::StepVerdict> verdicts,
                                   const std::string& id = "r1") {
  seedsynth::SynthRecord record;
  record.problem_id = id;
  record.problem = "What is 1+1?";
  std::vector<core::StepCritique> critiques;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    critiques.push_back(merged_step(static_cast<int>(i + 1), verdicts[i],
                                    "critique of step " + std::to_string(i + 1)));
    record.steps.push_back("step text " + std::to_string(i + 1));
    record.corrected.push_back(false);
  }
  record.critique = core::make_solution_critique(id, std::move(critiques));
  return record;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("token estimates round up at four characters per token") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("a") == 1);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  CHECK(estimate_tokens(std::string(4096, 'x')) == 1024);
}

TEST_CASE("the assistant turn joins merged critiques and closes with the index") {
  const auto all_good = record_with({core::StepVerdict::correct, core::StepVerdict::correct});
  CHECK(sft_assistant_text(all_good.critique) ==
        "critique of step 1\n\ncritique of step 2\n\nThe final answer is: \\boxed{-1}");

  const auto early_stop =
      record_with({core::StepVerdict::correct, core::StepVerdict::incorrect});
  CHECK(sft_assistant_text(early_stop.critique) ==
        "critique of step 1\n\ncritique of step 2\n\nThe final answer is: \\boxed{2}");
}

TEST_CASE("sft export writes chat pairs and skips inconsistent records") {
  const auto out = temp_file("stepcritic_sft.jsonl");
  std::vector<seedsynth::SynthRecord> records;
  records.push_back(record_with({core::StepVerdict::correct}));
  records.push_back(record_with({core::StepVerdict::incorrect}, "r2"));

  // A tampered record: the stored final label contradicts the verdicts.
  auto bad = record_with({core::StepVerdict::correct}, "r3");
  bad.critique.final_label = core::FirstErrorLabel{1};
  records.push_back(bad);

  // A record with no solution steps cannot render a prompt.
  auto stepless = record_with({core::StepVerdict::correct}, "r4");
  stepless.steps.clear();
  records.push_back(stepless);

  const auto stats = export_sft(records, asset_store(), out);
  CHECK(stats.written == 2);
  CHECK(stats.skipped == 2);

  const auto rows = read_jsonl(out);
  REQUIRE(rows.size() == 2);
  const auto& messages = rows[0].at("messages");
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].at("role") == "user");
  CHECK(messages[0].at("content").get<std::string>().find("What is 1+1?") != std::string::npos);
  CHECK(messages[0].at("content").get<std::string>().find("Step 1: step text 1") !=
        std::string::npos);
  CHECK(messages[1].at("role") == "assistant");
  CHECK(messages[1].at("content").get<std::string>().find("\\boxed{-1}") != std::string::npos);
  CHECK(json::parse(read_jsonl(out)[1].dump())
            .at("messages")[1]
            .at("content")
            .get<std::string>()
            .find("\\boxed{1}") != std::string::npos);
  std::filesystem::remove(out);
}

TEST_CASE("rl export filters by step count and prompt budget") {
  const auto out = temp_file("stepcritic_rl.jsonl");
  auto input = [](int n_steps, core::FirstErrorLabel label, const std::string& step_text = "s") {
    RlInput in;
    in.problem = "problem text";
    for (int i = 0; i < n_steps; ++i) in.steps.push_back(step_text);
    in.first_error = label;
    return in;
  };

  RlFilter filter;
  filter.min_steps = 2;
  filter.max_steps = 4;
  filter.max_prompt_tokens = 400;

  std::vector<RlInput> inputs;
  inputs.push_back(input(2, core::FirstErrorLabel{1}));          // kept
  inputs.push_back(input(1, core::FirstErrorLabel{-1}));         // too short
  inputs.push_back(input(5, core::FirstErrorLabel{3}));          // too long
  inputs.push_back(input(4, core::FirstErrorLabel{-1}));         // kept
  inputs.push_back(input(3, core::FirstErrorLabel{2}, std::string(2000, 'y')));  // over budget

  const auto stats = export_rl(inputs, asset_store(), filter, out);
  CHECK(stats.written == 2);
  CHECK(stats.skipped == 3);

  const auto rows = read_jsonl(out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("gold_first_error") == 1);
  CHECK(rows[1].at("gold_first_error") == -1);
  CHECK(rows[0].at("prompt").get<std::string>().find("problem text") != std::string::npos);
  CHECK(rows[0].at("prompt").get<std::string>().find("Step 2: s") != std::string::npos);

  CHECK_THROWS_AS(export_rl({}, asset_store(), RlFilter{0, 5, 100}, out),
                  std::invalid_argument);
  CHECK_THROWS_AS(export_rl({}, asset_store(), RlFilter{3, 2, 100}, out),
                  std::invalid_argument);
  std::filesystem::remove(out);
}

TEST_CASE("the reward is exact agreement with the gold index") {
  CHECK(compute_reward("... the first error is at \\boxed{3}", core::FirstErrorLabel{3}) == 1.0);
  CHECK(compute_reward("\\boxed{2}", core::FirstErrorLabel{3}) == 0.0);
  CHECK(compute_reward("all fine: \\boxed{-1}", core::FirstErrorLabel{-1}) == 1.0);
  CHECK(compute_reward("all fine: \\boxed{-1}", core::FirstErrorLabel{1}) == 0.0);
  CHECK(compute_reward("no box at all", core::FirstErrorLabel{-1}) == 0.0);
  CHECK(compute_reward("", core::FirstErrorLabel{1}) == 0.0);
  CHECK(compute_reward("\\boxed{0}", core::FirstErrorLabel{1}) == 0.0);  // out of range
  // The last integer box is the judgement.
  CHECK(compute_reward("\\boxed{1} but wait \\boxed{4}", core::FirstErrorLabel{4}) == 1.0);
}

TEST_CASE("the reward agrees with exact-match scoring on random critiques") {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    const int gold_value = rng() % 4 == 0 ? -1 : 1 + static_cast<int>(rng() % 6);
    const bool parseable = rng() % 5 != 0;
    const int predicted_value = rng() % 4 == 0 ? -1 : 1 + static_cast<int>(rng() % 6);
    std::string text = "Step thoughts #" + std::to_string(trial) + ". ";
    if (parseable) text += "Verdict: \\boxed{" + std::to_string(predicted_value) + "}";

    const auto gold = core::FirstErrorLabel{gold_value};
    const double reward = compute_reward(text, gold);
    // The metric side of the same judgement: a prediction counts as a hit
    // exactly when it parses and equals gold.
    const auto prediction = parse::try_extract_final_index(text);
    const bool hit = prediction.has_value() && *prediction == gold;
    CHECK(reward == (hit ? 1.0 : 0.0));
  }
}

TEST_CASE("label histograms bucket by value") {
  const std::vector<core::FirstErrorLabel> labels{
      core::FirstErrorLabel{-1}, core::FirstErrorLabel{2}, core::FirstErrorLabel{2},
      core::FirstErrorLabel{7},  core::FirstErrorLabel{-1}, core::FirstErrorLabel{-1}};
  const auto hist = label_histogram(labels);
  REQUIRE(hist.size() == 3);
  CHECK(hist.at(-1) == 3);
  CHECK(hist.at(2) == 2);
  CHECK(hist.at(7) == 1);
  CHECK(label_histogram({}).empty());
}

TEST_CASE("histogram bars scale to the widest bucket") {
  std::map<int, long> hist{{-1, 4}, {1, 2}, {12, 0}, {3, 1}};
  const std::string expected =
      "  -1 | " + std::string(40, '#') + " 4\n" +
      "   1 | " + std::string(20, '#') + " 2\n" +
      "   3 | " + std::string(10, '#') + " 1\n" +
      "  12 |  0\n";
  CHECK(histogram_bars(hist) == expected);
  CHECK(histogram_bars({}) == "(empty)\n");

  SUBCASE("tiny nonzero buckets still show one mark") {
    const auto bars = histogram_bars({{1, 100}, {2, 1}});
    CHECK(bars.find("   2 | # 1\n") != std::string::npos);
  }
}

TEST_CASE("training manifests are frozen") {
  const auto sft = training_manifest("sft");
  CHECK(sft.at("learning_rate") == 1e-5);
  CHECK(sft.at("lr_scheduler") == "cosine");
  CHECK(sft.at("batch_size") == 64);
  CHECK(sft.at("epochs") == 3);
  CHECK(sft.at("max_sequence_length") == 16384);
  CHECK(sft.at("warmup_ratio") == 0.1);

  const auto rl = training_manifest("rl");
  CHECK(rl.at("train_batch_size") == 128);
  CHECK(rl.at("micro_batch_size") == 128);
  CHECK(rl.at("rollout_n") == 8);
  CHECK(rl.at("max_prompt_length") == 2048);
  CHECK(rl.at("max_response_length") == 8192);
  CHECK(rl.at("temperature") == 1.0);
  CHECK(rl.at("top_p") == 0.9);
  CHECK(rl.at("learning_rate") == 1e-6);
  CHECK(rl.at("epochs") == 2);
  CHECK(rl.at("kl_coefficient") == 0.0);

  CHECK_THROWS_AS(training_manifest("dpo"), std::invalid_argument);
}
