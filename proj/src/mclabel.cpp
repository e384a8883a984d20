#include "stepcritic/mclabel.hpp"

#include <iostream>

#include "stepcritic/parse.hpp"

namespace stepcritic::mclabel {

bool is_label(const LabelDecision& d) {
  return std::holds_alternative<core::FirstErrorLabel>(d);
}

Screen screen_problem(const std::vector<bool>& sample_correct) {
  if (sample_correct.empty())
    throw std::invalid_argument("cannot screen a problem with zero sampled solutions");
  bool any_correct = false, any_incorrect = false;
  for (bool c : sample_correct) (c ? any_correct : any_incorrect) = true;
  return (any_correct && any_incorrect) ? Screen::keep : Screen::discard;
}

LabelDecision label_incorrect_solution(const PassRateProfile& profile, double threshold) {
  const auto& f = profile.fractions;
  if (f.empty()) return Discard{"no pass-rate estimates"};
  // Smallest j whose suffix is all-zero and whose prefix clears the
  // threshold strictly. "Exactly zero" means not one rollout succeeded.
  for (std::size_t j = 0; j < f.size(); ++j) {
    bool suffix_zero = true;
    for (std::size_t m = j; m < f.size(); ++m) {
      if (f[m] != 0.0) {
        suffix_zero = false;
        break;
      }
    }
    if (!suffix_zero) continue;
    bool prefix_clears = true;
    for (std::size_t m = 0; m < j; ++m) {
      if (!(f[m] > threshold)) {
        prefix_clears = false;
        break;
      }
    }
    if (prefix_clears) return core::FirstErrorLabel{static_cast<int>(j + 1)};
    break;  // larger j only shrinks the suffix; the prefix already failed
  }
  return Discard{"pass rates do not isolate a first error"};
}

LabelDecision label_correct_solution(const PassRateProfile& profile, double threshold) {
  const auto& f = profile.fractions;
  if (f.empty()) return Discard{"no pass-rate estimates"};
  for (double v : f) {
    if (!(v > threshold))
      return Discard{"a step's pass rate is not strictly above the threshold"};
  }
  return core::FirstErrorLabel{core::FirstErrorLabel::kAllCorrect};
}

PassRateProfile estimate_pass_rates(gateway::Gateway& gw, const gateway::EndpointConfig& generator,
                                    const prompts::TemplateStore& store,
                                    const core::Problem& problem,
                                    const std::vector<std::string>& steps, int rollouts_per_step,
                                    const gateway::SamplingParams& sampling) {
  if (steps.empty()) throw std::invalid_argument("cannot estimate pass rates with no steps");
  if (rollouts_per_step < 1)
    throw std::invalid_argument("rollouts_per_step must be >= 1");
  if (!problem.reference_answer)
    throw std::invalid_argument("problem '" + problem.id + "' has no reference answer");

  PassRateProfile profile;
  profile.rollouts_per_step = rollouts_per_step;
  profile.fractions.reserve(steps.size());

  for (std::size_t prefix_len = 1; prefix_len <= steps.size(); ++prefix_len) {
    const std::vector<std::string> prefix(steps.begin(),
                                          steps.begin() + static_cast<long>(prefix_len));
    auto rendered = store.render(prompts::TemplateId::generate_solution,
                                 {{"problem", problem.statement}});
    // The template's assistant prefill is "Step 1:"; rollouts replace it with
    // the tagged prefix so the generator continues from the next step.
    rendered.turns.back().second = prompts::tag_steps(prefix) + "\n";

    gateway::ChatRequest req;
    req.system = rendered.system;
    for (const auto& [role, text] : rendered.turns) req.turns.push_back({role, text});
    req.params = sampling;

    int correct = 0;
    for (int ordinal = 0; ordinal < rollouts_per_step; ++ordinal) {
      try {
        const auto completion = gw.cached_complete(generator, req, ordinal);
        const auto answer = parse::try_extract_boxed_answer(completion.text);
        if (answer && parse::answers_equal(*answer, *problem.reference_answer)) ++correct;
      } catch (const gateway::GatewayError& e) {
        std::cerr << "warning: rollout " << ordinal << " from step " << prefix_len << " of '"
                  << problem.id << "' failed, counted incorrect: " << e.what() << "\n";
      }
    }
    profile.fractions.push_back(static_cast<double>(correct) /
                                static_cast<double>(rollouts_per_step));
  }
  return profile;
}

}  // namespace stepcritic::mclabel
