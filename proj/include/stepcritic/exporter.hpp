#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepcritic/core.hpp"
#include "stepcritic/prompts.hpp"
#include "stepcritic/seedsynth.hpp"

namespace stepcritic::exporter {

struct ExportStats {
  long written = 0;
  long skipped = 0;
};

// One labeled task input for reward training.
struct RlInput {
  std::string problem;
  std::vector<std::string> steps;
  core::FirstErrorLabel first_error;
};

// Crude token estimate at 4 characters per token; the same heuristic the
// scripted backend's truncation uses.
int estimate_tokens(const std::string& text);

// Chat fine-tuning pairs: {"messages": [user evaluation prompt, assistant
// full deliberate critique ending in the boxed final index]}. Records whose
// critiques violate the verdict-sequence invariant are skipped and counted.
ExportStats export_sft(const std::vector<seedsynth::SynthRecord>& records,
                       const prompts::TemplateStore& store, const std::filesystem::path& out);

// Builds the assistant turn for one record: merged step critiques joined by
// blank lines, closed with "The final answer is: \boxed{<index>}".
std::string sft_assistant_text(const core::SolutionCritique& critique);

struct RlFilter {
  int min_steps = 3;
  int max_steps = 12;
  int max_prompt_tokens = 2048;
};

// Reward-training prompts: {"prompt", "gold_first_error"}. Inputs outside
// the step range or whose rendered prompt exceeds the token budget are
// skipped and counted.
ExportStats export_rl(const std::vector<RlInput>& inputs, const prompts::TemplateStore& store,
                      const RlFilter& filter, const std::filesystem::path& out);

// Accuracy reward for a critique rollout: 1.0 when the rollout's boxed final
// index equals the gold first error, else 0.0 (parse failures included).
double compute_reward(const std::string& critique_text, core::FirstErrorLabel gold) noexcept;

// Count per first-error value (-1 bucket plus one per index).
std::map<int, long> label_histogram(const std::vector<core::FirstErrorLabel>& labels);

// Fixed-width text bars for a histogram, widest bucket = 40 chars.
std::string histogram_bars(const std::map<int, long>& histogram);

// Frozen training recipes ("sft" or "rl") as JSON. Unknown kinds throw.
nlohmann::json training_manifest(const std::string& kind);

}  // namespace stepcritic::exporter
