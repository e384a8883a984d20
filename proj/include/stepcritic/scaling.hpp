#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stepcritic/core.hpp"
#include "stepcritic/evalharness.hpp"
#include "stepcritic/gateway.hpp"
#include "stepcritic/prompts.hpp"

namespace stepcritic::scaling {

// Verdict of the critic on one voting candidate; absent for candidates that
// were never judged (no extractable answer).
struct CandidateJudgement {
  std::optional<std::string> answer;
  evalharness::Prediction verdict;  // set only when the candidate was judged
  bool judged = false;
  bool survived = false;  // judged and not flagged erroneous
};

struct VoteResult {
  std::string answer;       // winning answer text (first member's spelling)
  int winner_index = -1;    // candidate index the winning answer came from
  bool fallback_used = false;  // every answered candidate was flagged
  std::vector<CandidateJudgement> candidates;
};

// Majority vote over candidate solutions after the critic removes those it
// judges erroneous (a parsed index >= 1). Answers vote as answers_equal
// equivalence classes; plurality wins, ties break toward the class whose
// earliest candidate comes first. When the critic rejects every answered
// candidate, the vote falls back to all of them. Candidates with no
// extractable answer never vote. Throws std::invalid_argument when no
// candidate has an answer.
VoteResult verified_majority_vote(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                                  const prompts::TemplateStore& store,
                                  const std::string& problem,
                                  const std::vector<core::StepSolution>& candidates,
                                  const gateway::SamplingParams& judge_params);

// Plain majority vote over the same candidates with no critic in the loop.
// Shares the equivalence-class plurality logic with the verified variant.
VoteResult plain_majority_vote(const std::vector<core::StepSolution>& candidates);

struct RefineOutcome {
  core::StepSolution before;
  core::StepSolution after;
  std::string critique_text;            // the critic's full reply
  evalharness::Prediction critic_verdict;
  bool refined = false;                 // false = verdict was -1, kept as-is
  bool answerless = false;              // revised output had no boxed answer
};

// One judge-then-revise pass. The critic sees the solution through the
// first-error evaluation prompt; a -1 verdict returns the input byte-for-
// byte. Any other outcome (an index, or an unparseable reply) triggers one
// greedy regeneration conditioned on the critique text.
RefineOutcome refine_solution(gateway::Gateway& gw, const gateway::EndpointConfig& generator,
                              const gateway::EndpointConfig& critic,
                              const prompts::TemplateStore& store, const std::string& problem,
                              const core::StepSolution& initial,
                              const gateway::SamplingParams& judge_params,
                              int refine_max_new_tokens);

// Transition accounting between two correctness snapshots of the same
// solutions. Percent fields derive from the integer counts, so the identity
// acc_after == acc_before + wrong_to_correct - correct_to_wrong is exact.
struct RefinementReport {
  long n = 0;
  long wrong_to_correct_count = 0;
  long correct_to_wrong_count = 0;
  long correct_before = 0;
  long correct_after = 0;
  double wrong_to_correct = 0.0;  // percent
  double correct_to_wrong = 0.0;  // percent
  double acc_before = 0.0;        // percent
  double acc_after = 0.0;         // percent
};

// Throws std::invalid_argument on length mismatch or empty input.
RefinementReport refinement_report(const std::vector<bool>& before,
                                   const std::vector<bool>& after);

}  // namespace stepcritic::scaling
