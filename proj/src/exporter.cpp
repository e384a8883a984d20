#include "stepcritic/exporter.hpp"

#include <algorithm>

#include "stepcritic/jsonl.hpp"
#include "stepcritic/parse.hpp"

namespace stepcritic::exporter {

using nlohmann::json;

int estimate_tokens(const std::string& text) {
  return static_cast<int>((text.size() + 3) / 4);
}

std::string sft_assistant_text(const core::SolutionCritique& critique) {
  std::string out;
  for (const auto& step : critique.step_critiques) {
    out += step.merged_text;
    out += "\n\n";
  }
  out += "The final answer is: \\boxed{" + std::to_string(critique.final_label.value) + "}";
  return out;
}

namespace {

std::string rendered_user_text(const prompts::TemplateStore& store, const std::string& problem,
                               const std::vector<std::string>& steps) {
  const auto rendered =
      store.render(prompts::TemplateId::evaluate_solution,
                   {{"problem", problem}, {"tagged_response", prompts::tag_steps(steps)}});
  return rendered.turns.front().second;
}

}  // namespace

ExportStats export_sft(const std::vector<seedsynth::SynthRecord>& records,
                       const prompts::TemplateStore& store, const std::filesystem::path& out) {
  ExportStats stats;
  jsonl::Writer writer(out);
  for (const auto& record : records) {
    try {
      if (record.steps.empty()) throw std::invalid_argument("record has no steps");
      // Re-derive the final label from the merged verdicts; a mismatch or a
      // malformed verdict sequence disqualifies the record.
      const auto rebuilt =
          core::make_solution_critique(record.problem_id, record.critique.step_critiques);
      if (!(rebuilt.final_label == record.critique.final_label))
        throw std::invalid_argument("final label disagrees with merged verdicts");
      const json line = {
          {"messages",
           json::array({
               json{{"role", "user"},
                    {"content", rendered_user_text(store, record.problem, record.steps)}},
               json{{"role", "assistant"}, {"content", sft_assistant_text(record.critique)}},
           })},
      };
      writer.write(line);
      ++stats.written;
    } catch (const std::exception&) {
      ++stats.skipped;
    }
  }
  return stats;
}

ExportStats export_rl(const std::vector<RlInput>& inputs, const prompts::TemplateStore& store,
                      const RlFilter& filter, const std::filesystem::path& out) {
  if (filter.min_steps < 1 || filter.max_steps < filter.min_steps)
    throw std::invalid_argument("step range must satisfy 1 <= min <= max");
  ExportStats stats;
  jsonl::Writer writer(out);
  for (const auto& input : inputs) {
    const int n = static_cast<int>(input.steps.size());
    if (n < filter.min_steps || n > filter.max_steps) {
      ++stats.skipped;
      continue;
    }
    const std::string prompt = rendered_user_text(store, input.problem, input.steps);
    if (estimate_tokens(prompt) > filter.max_prompt_tokens) {
      ++stats.skipped;
      continue;
    }
    writer.write(json{{"prompt", prompt}, {"gold_first_error", input.first_error.value}});
    ++stats.written;
  }
  return stats;
}

double compute_reward(const std::string& critique_text, core::FirstErrorLabel gold) noexcept {
  const auto predicted = parse::try_extract_final_index(critique_text);
  return (predicted && *predicted == gold) ? 1.0 : 0.0;
}

std::map<int, long> label_histogram(const std::vector<core::FirstErrorLabel>& labels) {
  std::map<int, long> out;
  for (const auto& label : labels) ++out[label.value];
  return out;
}

std::string histogram_bars(const std::map<int, long>& histogram) {
  if (histogram.empty()) return "(empty)\n";
  long max_count = 0;
  for (const auto& [_, count] : histogram) max_count = std::max(max_count, count);
  std::string out;
  for (const auto& [value, count] : histogram) {
    std::string key = std::to_string(value);
    key.insert(0, key.size() < 4 ? 4 - key.size() : 0, ' ');
    long width = max_count > 0 ? count * 40 / max_count : 0;
    if (count > 0 && width == 0) width = 1;
    out += key + " | " + std::string(static_cast<std::size_t>(width), '#') + " " +
           std::to_string(count) + "\n";
  }
  return out;
}

json training_manifest(const std::string& kind) {
  if (kind == "sft") {
    return json{
        {"learning_rate", 1e-5},
        {"lr_scheduler", "cosine"},
        {"batch_size", 64},
        {"epochs", 3},
        {"max_sequence_length", 16384},
        {"warmup_ratio", 0.1},
    };
  }
  if (kind == "rl") {
    return json{
        {"train_batch_size", 128},
        {"micro_batch_size", 128},
        {"rollout_n", 8},
        {"max_prompt_length", 2048},
        {"max_response_length", 8192},
        {"temperature", 1.0},
        {"top_p", 0.9},
        {"learning_rate", 1e-6},
        {"epochs", 2},
        {"kl_coefficient", 0.0},
    };
  }
  throw std::invalid_argument("unknown training manifest kind: '" + kind + "'");
}

}  // namespace stepcritic::exporter
