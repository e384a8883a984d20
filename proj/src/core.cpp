#include "stepcritic/core.hpp"

#include <string>

namespace stepcritic::core {

Source source_from_string(const std::string& s) {
  if (s == "gsm8k") return Source::gsm8k;
  if (s == "math") return Source::math;
  if (s == "olympiads") return Source::olympiads;
  if (s == "other") return Source::other;
  throw std::invalid_argument("unknown problem source: '" + s + "'");
}

std::string to_string(Source s) {
  switch (s) {
    case Source::gsm8k: return "gsm8k";
    case Source::math: return "math";
    case Source::olympiads: return "olympiads";
    case Source::other: return "other";
  }
  throw std::invalid_argument("unhandled Source value");
}

void validate(const Problem& p) {
  if (p.id.empty()) throw std::invalid_argument("problem id is empty");
  if (p.statement.empty())
    throw std::invalid_argument("problem '" + p.id + "' has an empty statement");
}

int to_int(StepVerdict v) { return static_cast<int>(v); }

StepVerdict verdict_from_int(int v) {
  if (v == 1) return StepVerdict::correct;
  if (v == -1) return StepVerdict::incorrect;
  throw std::invalid_argument("step verdict must be +1 or -1, got " + std::to_string(v));
}

FirstErrorLabel make_first_error_label(int v) {
  if (v != FirstErrorLabel::kAllCorrect && v < 1)
    throw std::invalid_argument("first-error label must be -1 or >= 1, got " +
                                std::to_string(v));
  return FirstErrorLabel{v};
}

FirstErrorLabel derive_final_answer(const std::vector<StepVerdict>& verdicts) {
  if (verdicts.empty())
    throw MalformedSequenceError("cannot derive a final answer from zero verdicts");
  for (std::size_t i = 0; i + 1 < verdicts.size(); ++i) {
    if (verdicts[i] == StepVerdict::incorrect)
      throw MalformedSequenceError(
          "verdict sequence continues past an incorrect step at position " +
          std::to_string(i + 1));
  }
  if (verdicts.back() == StepVerdict::incorrect)
    return FirstErrorLabel{static_cast<int>(verdicts.size())};
  return FirstErrorLabel{FirstErrorLabel::kAllCorrect};
}

int first_error_cutoff(const std::vector<StepVerdict>& labels) {
  if (labels.empty()) throw std::invalid_argument("empty label sequence");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == StepVerdict::incorrect) return static_cast<int>(i + 1);
  }
  return static_cast<int>(labels.size());
}

std::vector<StepVerdict> normalize_prm_labels(const std::vector<int>& raw) {
  std::vector<StepVerdict> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int v = raw[i];
    if (v == 1 || v == 0) {
      out.push_back(StepVerdict::correct);
    } else if (v == -1) {
      out.push_back(StepVerdict::incorrect);
    } else {
      throw InvalidLabelError("raw step label at position " + std::to_string(i + 1) +
                              " must be in {-1, 0, 1}, got " + std::to_string(v));
    }
  }
  return out;
}

void validate(const LabeledSolution& s) {
  const int n = static_cast<int>(s.solution.steps.size());
  const int fe = s.first_error.value;
  if (fe != FirstErrorLabel::kAllCorrect && (fe < 1 || fe > n))
    throw std::invalid_argument("first_error " + std::to_string(fe) +
                                " is outside [1, " + std::to_string(n) + "]");
  if (s.step_labels) {
    if (static_cast<int>(s.step_labels->size()) < (fe == FirstErrorLabel::kAllCorrect ? n : fe))
      throw std::invalid_argument("step_labels is shorter than first_error requires");
    for (int i = 0; i < static_cast<int>(s.step_labels->size()); ++i) {
      const bool incorrect = (*s.step_labels)[i] == StepVerdict::incorrect;
      if (fe == FirstErrorLabel::kAllCorrect) {
        if (incorrect)
          throw std::invalid_argument("step_labels marks step " + std::to_string(i + 1) +
                                      " incorrect but first_error is -1");
      } else {
        if (i + 1 < fe && incorrect)
          throw std::invalid_argument("step_labels marks step " + std::to_string(i + 1) +
                                      " incorrect before first_error " + std::to_string(fe));
        if (i + 1 == fe && !incorrect)
          throw std::invalid_argument("step_labels marks first_error step " +
                                      std::to_string(fe) + " correct");
      }
    }
  }
}

SolutionCritique make_solution_critique(std::string problem_id,
                                        std::vector<StepCritique> step_critiques) {
  std::vector<StepVerdict> verdicts;
  verdicts.reserve(step_critiques.size());
  for (std::size_t i = 0; i < step_critiques.size(); ++i) {
    if (step_critiques[i].step_index != static_cast<int>(i + 1))
      throw std::invalid_argument("step critiques must cover steps 1..k contiguously; "
                                  "position " + std::to_string(i + 1) + " has index " +
                                  std::to_string(step_critiques[i].step_index));
    verdicts.push_back(step_critiques[i].merged_verdict);
  }
  SolutionCritique out;
  out.final_label = derive_final_answer(verdicts);
  out.problem_id = std::move(problem_id);
  out.step_critiques = std::move(step_critiques);
  return out;
}

}  // namespace stepcritic::core
