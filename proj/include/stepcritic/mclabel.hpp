#pragma once

#include <string>
#include <variant>
#include <vector>

#include "stepcritic/core.hpp"
#include "stepcritic/gateway.hpp"
#include "stepcritic/prompts.hpp"

namespace stepcritic::mclabel {

// Per-step completion pass rates for one solution: fractions[i] is the share
// of rollouts continuing from steps 1..i+1 that reached the reference answer.
struct PassRateProfile {
  std::vector<double> fractions;
  int rollouts_per_step = 0;
};

struct Discard {
  std::string reason;
};

using LabelDecision = std::variant<core::FirstErrorLabel, Discard>;

bool is_label(const LabelDecision& d);

enum class Screen { keep, discard };

// Problem-level screening over sampled solutions' final-answer correctness:
// problems where every sample is correct, or none is, carry no signal and
// are dropped. Throws std::invalid_argument on an empty sample set.
Screen screen_problem(const std::vector<bool>& sample_correct);

// Labels a solution whose final answer is wrong. The first error is the
// smallest j where the pass rate is exactly zero from step j onward and
// strictly above `threshold` before it; no such j discards the solution.
LabelDecision label_incorrect_solution(const PassRateProfile& profile, double threshold = 0.5);

// Labels a solution whose final answer is right: all-correct when every
// step's pass rate is strictly above `threshold`, else discard (a correct
// answer reached through a shaky step proves nothing).
LabelDecision label_correct_solution(const PassRateProfile& profile, double threshold = 0.5);

// Estimates the pass-rate profile by rolling out `rollouts_per_step`
// continuations from each step prefix and checking their boxed answers
// against the reference. A rollout that still fails after gateway retries
// counts as incorrect and is logged to stderr.
PassRateProfile estimate_pass_rates(gateway::Gateway& gw, const gateway::EndpointConfig& generator,
                                    const prompts::TemplateStore& store,
                                    const core::Problem& problem,
                                    const std::vector<std::string>& steps, int rollouts_per_step,
                                    const gateway::SamplingParams& sampling);

}  // namespace stepcritic::mclabel
