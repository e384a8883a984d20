#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepcritic::core {

// Where a problem came from. Unknown strings are rejected at parse time
// rather than silently mapped to `other`.
enum class Source { gsm8k, math, olympiads, other };

Source source_from_string(const std::string& s);  // throws std::invalid_argument
std::string to_string(Source s);

struct Problem {
  std::string id;
  std::string statement;
  std::optional<std::string> reference_answer;  // ground-truth final answer, if known
  Source source = Source::other;
};

// Throws std::invalid_argument when id or statement is empty.
void validate(const Problem& p);

// A solution split into reasoning steps. steps[0] is "Step 1".
struct StepSolution {
  std::string problem_id;
  std::vector<std::string> steps;
  std::optional<std::string> final_answer;  // extracted boxed answer, if any
};

// Per-step judgement: +1 correct, -1 incorrect. No third state exists;
// "unknown" is represented by absence (optional), never by another value.
enum class StepVerdict : int { correct = 1, incorrect = -1 };

int to_int(StepVerdict v);
StepVerdict verdict_from_int(int v);  // throws std::invalid_argument unless v is +1 or -1

// Index of the earliest erroneous step (1-based), or kAllCorrect when the
// whole solution is judged correct.
struct FirstErrorLabel {
  static constexpr int kAllCorrect = -1;

  int value = kAllCorrect;

  bool all_correct() const { return value == kAllCorrect; }
  bool operator==(const FirstErrorLabel&) const = default;
};

// Throws std::invalid_argument unless v is -1 or >= 1.
FirstErrorLabel make_first_error_label(int v);

struct MalformedSequenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidLabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Collapses a verdict sequence into the final first-error answer: the index
// of the last step if it was judged incorrect, else all-correct. Verdict
// sequences stop at the first error, so any -1 before the last position is
// malformed input and throws MalformedSequenceError (empty input too).
FirstErrorLabel derive_final_answer(const std::vector<StepVerdict>& verdicts);

// Number of steps a critic must examine: index of the first incorrect label,
// or the full length when every label is correct. Throws on empty input.
int first_error_cutoff(const std::vector<StepVerdict>& labels);

// Maps raw human annotations {-1, 0, 1} onto binary verdicts; 0 (correct but
// suboptimal) folds into correct. Anything else throws InvalidLabelError.
std::vector<StepVerdict> normalize_prm_labels(const std::vector<int>& raw);

// A solution with its gold first-error annotation. step_labels, when present,
// carries per-step gold verdicts and must be consistent with first_error.
struct LabeledSolution {
  std::string problem_id;
  StepSolution solution;
  std::optional<std::vector<StepVerdict>> step_labels;
  FirstErrorLabel first_error;
};

// Consistency checks: first_error is -1 or within [1, step count]; when
// step_labels is present, its first incorrect position (or absence of one)
// must agree with first_error. Throws std::invalid_argument on violation.
void validate(const LabeledSolution& s);

// One step's critique in all three drafts. deep_* are absent when the
// pipeline only produced an initial critique.
struct StepCritique {
  int step_index = 0;  // 1-based
  std::string initial_text;
  StepVerdict initial_verdict = StepVerdict::correct;
  std::optional<std::string> deep_text;
  std::optional<StepVerdict> deep_verdict;
  std::string merged_text;
  StepVerdict merged_verdict = StepVerdict::correct;
};

// Critique of a whole solution. Step critiques cover steps 1..k contiguously;
// every merged verdict before the last is correct, and final_label points at
// the last step iff its merged verdict is incorrect.
struct SolutionCritique {
  std::string problem_id;
  std::vector<StepCritique> step_critiques;
  FirstErrorLabel final_label;
};

// Assembles a SolutionCritique, deriving final_label from the merged
// verdicts. Throws MalformedSequenceError when the verdict sequence is
// malformed and std::invalid_argument when step indices are not 1..k.
SolutionCritique make_solution_critique(std::string problem_id,
                                        std::vector<StepCritique> step_critiques);

}  // namespace stepcritic::core
