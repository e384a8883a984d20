#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepcritic/core.hpp"
#include "stepcritic/gateway.hpp"
#include "stepcritic/jsonl.hpp"
#include "stepcritic/prompts.hpp"

namespace stepcritic::evalharness {

// One benchmark item: a solution with a gold first-error annotation
// (-1 = the solution is correct).
struct BenchmarkExample {
  std::string problem;
  std::vector<std::string> steps;
  core::FirstErrorLabel gold;
};

struct LoadReport {
  std::vector<BenchmarkExample> examples;
  std::vector<jsonl::LineError> rejected;  // malformed lines, kept for the record
};

// Reads benchmark JSONL ({"problem", "steps", "label"}). Structurally
// invalid lines (missing fields, label 0 or <= -2, label beyond the step
// count, empty steps) land in `rejected` with their line numbers.
LoadReport load_benchmark(const std::filesystem::path& path);

// A critic's prediction for one example; nullopt means the reply yielded no
// parseable index and is scored as wrong against every gold label.
using Prediction = std::optional<core::FirstErrorLabel>;

// Majority vote over per-sample predictions. Parse failures never win except
// when every sample failed. Ties break toward the label whose first
// occurrence in sample order is earliest. Throws on empty input.
Prediction majority_vote(const std::vector<Prediction>& samples);

// Harmonic mean of the two accuracies (percent in, percent out). Zero when
// either side is zero.
double f1_score(double acc_erroneous, double acc_correct);

// Asks the critic for one judgement of one example at a given cache ordinal.
Prediction judge_once(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                      const prompts::TemplateStore& store, const BenchmarkExample& example,
                      const gateway::SamplingParams& sampling, int sample_ordinal = 0);

// Scores for one benchmark set.
struct SetOutcome {
  std::string name;
  long n_erroneous = 0;
  long n_correct = 0;
  long erroneous_hits = 0;  // predicted index == gold index exactly
  long correct_hits = 0;    // predicted -1 on a correct solution
  long parse_failures = 0;  // final per-example predictions with no index
  double acc_erroneous = 0.0;      // percent
  double acc_correct = 0.0;        // percent
  double f1 = 0.0;                 // percent
  double parse_failure_rate = 0.0;  // fraction of examples, in [0, 1]
  std::vector<Prediction> predictions;  // one per example, input order
};

struct EvalReport {
  std::vector<SetOutcome> sets;
  double average_f1 = 0.0;  // arithmetic mean over sets
  long gateway_failures = 0;  // judgements lost to backend errors (scored as
                              // parse failures, counted here for visibility)
};

struct EvalOptions {
  gateway::SamplingParams sampling{0.6, 0.9, 32768, 1};
  int samples_per_example = 1;  // >1 switches to majority voting
  int max_workers = 4;
  std::filesystem::path transcript_dir;  // empty = no transcripts
};

// Runs the critic over named benchmark sets and aggregates. Aggregation is
// pure counting, so example order never changes the scores.
EvalReport evaluate(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                    const prompts::TemplateStore& store,
                    const std::vector<std::pair<std::string, std::vector<BenchmarkExample>>>& sets,
                    const EvalOptions& options);

// Scores precomputed predictions against one set's gold labels.
SetOutcome score_set(const std::string& name, const std::vector<BenchmarkExample>& examples,
                     const std::vector<Prediction>& predictions);

std::string format_report_table(const EvalReport& report);
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace stepcritic::evalharness
