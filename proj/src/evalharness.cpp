#include "stepcritic/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <map>

#include "stepcritic/concurrency.hpp"
#include "stepcritic/parse.hpp"

namespace stepcritic::evalharness {

using nlohmann::json;

LoadReport load_benchmark(const std::filesystem::path& path) {
  LoadReport report;
  std::vector<jsonl::LineError> parse_errors;
  const auto lines = jsonl::read_file(path, &parse_errors);
  report.rejected = std::move(parse_errors);

  // Line numbers for structural rejects: track which parsed object came from
  // which line by re-reading with a counter. jsonl::read_file skips blanks
  // and bad lines, so recompute the mapping here.
  std::ifstream in(path, std::ios::binary);
  std::vector<int> line_of;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      (void)json::parse(raw);
      line_of.push_back(line_no);
    } catch (const std::exception&) {
    }
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json& j = lines[i];
    const int line = i < line_of.size() ? line_of[i] : 0;
    try {
      BenchmarkExample ex;
      ex.problem = j.at("problem").get<std::string>();
      ex.steps = j.at("steps").get<std::vector<std::string>>();
      const int label = j.at("label").get<int>();
      if (ex.problem.empty()) throw std::runtime_error("empty problem");
      if (ex.steps.empty()) throw std::runtime_error("empty step list");
      if (label != core::FirstErrorLabel::kAllCorrect &&
          (label < 1 || label > static_cast<int>(ex.steps.size())))
        throw std::runtime_error("label " + std::to_string(label) + " out of range for " +
                                 std::to_string(ex.steps.size()) + " steps");
      ex.gold = core::FirstErrorLabel{label};
      report.examples.push_back(std::move(ex));
    } catch (const std::exception& e) {
      report.rejected.push_back(jsonl::LineError{line, e.what()});
    }
  }
  std::sort(report.rejected.begin(), report.rejected.end(),
            [](const jsonl::LineError& a, const jsonl::LineError& b) { return a.line < b.line; });
  return report;
}

Prediction majority_vote(const std::vector<Prediction>& samples) {
  if (samples.empty()) throw std::invalid_argument("majority vote over zero samples");
  // Tally parsed labels; remember each label's first position for tie-break.
  std::map<int, long> counts;
  std::map<int, std::size_t> first_seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i]) continue;
    const int v = samples[i]->value;
    ++counts[v];
    first_seen.emplace(v, i);
  }
  if (counts.empty()) return std::nullopt;
  int best = 0;
  long best_count = -1;
  std::size_t best_first = samples.size();
  for (const auto& [label, count] : counts) {
    const std::size_t first = first_seen.at(label);
    if (count > best_count || (count == best_count && first < best_first)) {
      best = label;
      best_count = count;
      best_first = first;
    }
  }
  return core::FirstErrorLabel{best};
}

double f1_score(double acc_erroneous, double acc_correct) {
  if (acc_erroneous < 0 || acc_erroneous > 100 || acc_correct < 0 || acc_correct > 100)
    throw std::invalid_argument("accuracies must be percentages in [0, 100]");
  const double sum = acc_erroneous + acc_correct;
  if (sum == 0.0) return 0.0;
  return 2.0 * acc_erroneous * acc_correct / sum;
}

Prediction judge_once(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                      const prompts::TemplateStore& store, const BenchmarkExample& example,
                      const gateway::SamplingParams& sampling, int sample_ordinal) {
  const auto rendered = store.render(prompts::TemplateId::evaluate_solution,
                                     {{"problem", example.problem},
                                      {"tagged_response", prompts::tag_steps(example.steps)}});
  gateway::ChatRequest req;
  req.system = rendered.system;
  for (const auto& [role, text] : rendered.turns) req.turns.push_back({role, text});
  req.params = sampling;
  const auto completion = gw.cached_complete(critic, req, sample_ordinal);
  if (completion.truncated) return std::nullopt;
  return parse::try_extract_final_index(completion.text);
}

SetOutcome score_set(const std::string& name, const std::vector<BenchmarkExample>& examples,
                     const std::vector<Prediction>& predictions) {
  if (examples.size() != predictions.size())
    throw std::invalid_argument("prediction count does not match example count");
  SetOutcome out;
  out.name = name;
  out.predictions = predictions;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& gold = examples[i].gold;
    const auto& pred = predictions[i];
    if (!pred) ++out.parse_failures;
    if (gold.all_correct()) {
      ++out.n_correct;
      if (pred && *pred == gold) ++out.correct_hits;
    } else {
      ++out.n_erroneous;
      if (pred && *pred == gold) ++out.erroneous_hits;
    }
  }
  out.acc_erroneous = out.n_erroneous == 0
                          ? 0.0
                          : 100.0 * static_cast<double>(out.erroneous_hits) /
                                static_cast<double>(out.n_erroneous);
  out.acc_correct = out.n_correct == 0 ? 0.0
                                       : 100.0 * static_cast<double>(out.correct_hits) /
                                             static_cast<double>(out.n_correct);
  out.f1 = f1_score(out.acc_erroneous, out.acc_correct);
  out.parse_failure_rate = examples.empty() ? 0.0
                                            : static_cast<double>(out.parse_failures) /
                                                  static_cast<double>(examples.size());
  return out;
}

EvalReport evaluate(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                    const prompts::TemplateStore& store,
                    const std::vector<std::pair<std::string, std::vector<BenchmarkExample>>>& sets,
                    const EvalOptions& options) {
  if (sets.empty()) throw std::invalid_argument("no benchmark sets to evaluate");
  if (options.samples_per_example < 1)
    throw std::invalid_argument("samples_per_example must be >= 1");

  EvalReport report;
  for (const auto& [name, examples] : sets) {
    if (examples.empty())
      throw std::invalid_argument("benchmark set '" + name + "' is empty");

    std::vector<Prediction> predictions(examples.size());
    std::vector<std::vector<std::string>> transcripts(examples.size());
    const bool keep_transcripts = !options.transcript_dir.empty();
    std::atomic<long> set_gateway_failures{0};

    concurrency::parallel_for(examples.size(), options.max_workers, [&](std::size_t i) {
      std::vector<Prediction> samples;
      samples.reserve(static_cast<std::size_t>(options.samples_per_example));
      for (int k = 0; k < options.samples_per_example; ++k) {
        // A judgement lost to a backend error (after gateway retries) scores
        // as a parse failure; one bad example must not sink the whole run.
        try {
          if (keep_transcripts) {
            // Re-issue through the cache to capture text; same digest+ordinal,
            // so this costs one backend call total.
            const auto rendered =
                store.render(prompts::TemplateId::evaluate_solution,
                             {{"problem", examples[i].problem},
                              {"tagged_response", prompts::tag_steps(examples[i].steps)}});
            gateway::ChatRequest req;
            req.system = rendered.system;
            for (const auto& [role, text] : rendered.turns) req.turns.push_back({role, text});
            req.params = options.sampling;
            const auto completion = gw.cached_complete(critic, req, k);
            transcripts[i].push_back(completion.text);
            samples.push_back(completion.truncated
                                  ? Prediction{}
                                  : parse::try_extract_final_index(completion.text));
          } else {
            samples.push_back(judge_once(gw, critic, store, examples[i], options.sampling, k));
          }
        } catch (const gateway::GatewayError& e) {
          set_gateway_failures.fetch_add(1);
          std::cerr << "warning: " << name << " example " << i << " sample " << k
                    << " failed: " << e.what() << '\n';
          samples.push_back(std::nullopt);
          if (keep_transcripts) transcripts[i].push_back("");
        }
      }
      predictions[i] =
          options.samples_per_example == 1 ? samples.front() : majority_vote(samples);
    });
    report.gateway_failures += set_gateway_failures.load();

    if (keep_transcripts) {
      std::filesystem::create_directories(options.transcript_dir);
      jsonl::Writer writer(options.transcript_dir / (name + ".jsonl"));
      for (std::size_t i = 0; i < examples.size(); ++i) {
        json j{{"index", i},
               {"gold", examples[i].gold.value},
               {"prediction", predictions[i] ? json(predictions[i]->value) : json(nullptr)},
               {"samples", transcripts[i]}};
        writer.write(j);
      }
    }
    report.sets.push_back(score_set(name, examples, predictions));
  }

  double sum = 0.0;
  for (const auto& s : report.sets) sum += s.f1;
  report.average_f1 = sum / static_cast<double>(report.sets.size());
  return report;
}

namespace {

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

std::string format_report_table(const EvalReport& report) {
  std::string out;
  std::size_t name_width = std::string("benchmark").size();
  for (const auto& s : report.sets) name_width = std::max(name_width, s.name.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  out += pad("benchmark", name_width) + "  erroneous  correct  F1     parse_fail\n";
  for (const auto& s : report.sets) {
    out += pad(s.name, name_width) + "  " + pad(one_decimal(s.acc_erroneous), 9) + "  " +
           pad(one_decimal(s.acc_correct), 7) + "  " + pad(one_decimal(s.f1), 5) + "  " +
           one_decimal(100.0 * s.parse_failure_rate) + "%\n";
  }
  out += "average F1: " + one_decimal(report.average_f1) + "\n";
  return out;
}

json report_to_json(const EvalReport& report) {
  json sets = json::array();
  for (const auto& s : report.sets) {
    json preds = json::array();
    for (const auto& p : s.predictions) preds.push_back(p ? json(p->value) : json(nullptr));
    sets.push_back(json{{"name", s.name},
                        {"n_erroneous", s.n_erroneous},
                        {"n_correct", s.n_correct},
                        {"erroneous_hits", s.erroneous_hits},
                        {"correct_hits", s.correct_hits},
                        {"acc_erroneous", s.acc_erroneous},
                        {"acc_correct", s.acc_correct},
                        {"f1", s.f1},
                        {"parse_failures", s.parse_failures},
                        {"parse_failure_rate", s.parse_failure_rate},
                        {"predictions", preds}});
  }
  return json{{"sets", sets},
              {"average_f1", report.average_f1},
              {"gateway_failures", report.gateway_failures}};
}

}  // namespace stepcritic::evalharness
