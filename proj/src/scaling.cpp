#include "stepcritic/scaling.hpp"

#include "stepcritic/parse.hpp"

namespace stepcritic::scaling {

namespace {

// Plurality over answers_equal equivalence classes of the given candidate
// indices. Classes form in candidate order, so scanning classes in creation
// order makes ties resolve toward the earliest candidate.
std::pair<std::string, int> plurality_answer(
    const std::vector<core::StepSolution>& candidates, const std::vector<std::size_t>& voters) {
  struct AnswerClass {
    std::string representative;
    int first_index;
    long count = 0;
  };
  std::vector<AnswerClass> classes;
  for (std::size_t idx : voters) {
    const std::string& answer = *candidates[idx].final_answer;
    bool found = false;
    for (auto& c : classes) {
      if (parse::answers_equal(c.representative, answer)) {
        ++c.count;
        found = true;
        break;
      }
    }
    if (!found) classes.push_back(AnswerClass{answer, static_cast<int>(idx), 1});
  }
  const AnswerClass* best = nullptr;
  for (const auto& c : classes) {
    if (!best || c.count > best->count) best = &c;
  }
  return {best->representative, best->first_index};
}

std::vector<std::size_t> answered_indices(const std::vector<core::StepSolution>& candidates) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].final_answer) out.push_back(i);
  return out;
}

gateway::ChatRequest request_from(const prompts::RenderedPrompt& rendered,
                                  const gateway::SamplingParams& params) {
  gateway::ChatRequest req;
  req.system = rendered.system;
  for (const auto& [role, text] : rendered.turns) req.turns.push_back({role, text});
  req.params = params;
  return req;
}

}  // namespace

VoteResult plain_majority_vote(const std::vector<core::StepSolution>& candidates) {
  const auto voters = answered_indices(candidates);
  if (voters.empty())
    throw std::invalid_argument("no candidate has an extractable final answer");
  VoteResult result;
  result.candidates.resize(candidates.size());
  for (std::size_t i : voters) {
    result.candidates[i].answer = candidates[i].final_answer;
    result.candidates[i].survived = true;
  }
  const auto [answer, index] = plurality_answer(candidates, voters);
  result.answer = answer;
  result.winner_index = index;
  return result;
}

VoteResult verified_majority_vote(gateway::Gateway& gw, const gateway::EndpointConfig& critic,
                                  const prompts::TemplateStore& store,
                                  const std::string& problem,
                                  const std::vector<core::StepSolution>& candidates,
                                  const gateway::SamplingParams& judge_params) {
  const auto voters = answered_indices(candidates);
  if (voters.empty())
    throw std::invalid_argument("no candidate has an extractable final answer");

  VoteResult result;
  result.candidates.resize(candidates.size());
  std::vector<std::size_t> survivors;
  for (std::size_t i : voters) {
    auto& cj = result.candidates[i];
    cj.answer = candidates[i].final_answer;
    cj.judged = true;
    evalharness::BenchmarkExample ex;
    ex.problem = problem;
    ex.steps = candidates[i].steps;
    cj.verdict = evalharness::judge_once(gw, critic, store, ex, judge_params, 0);
    // Flagged = a parsed index >= 1. A -1 verdict and an unparseable reply
    // both leave the candidate in the pool.
    const bool flagged = cj.verdict && !cj.verdict->all_correct();
    cj.survived = !flagged;
    if (cj.survived) survivors.push_back(i);
  }

  result.fallback_used = survivors.empty();
  const auto& pool = result.fallback_used ? voters : survivors;
  const auto [answer, index] = plurality_answer(candidates, pool);
  result.answer = answer;
  result.winner_index = index;
  return result;
}

RefineOutcome refine_solution(gateway::Gateway& gw, const gateway::EndpointConfig& generator,
                              const gateway::EndpointConfig& critic,
                              const prompts::TemplateStore& store, const std::string& problem,
                              const core::StepSolution& initial,
                              const gateway::SamplingParams& judge_params,
                              int refine_max_new_tokens) {
  if (initial.steps.empty())
    throw std::invalid_argument("cannot refine a solution with no steps");

  RefineOutcome outcome;
  outcome.before = initial;

  // Judge through the standard evaluation prompt, keeping the full reply as
  // the critique text the refinement prompt will quote.
  const auto judge_prompt =
      store.render(prompts::TemplateId::evaluate_solution,
                   {{"problem", problem},
                    {"tagged_response", prompts::tag_steps(initial.steps)}});
  const auto judge_reply =
      gw.cached_complete(critic, request_from(judge_prompt, judge_params), 0);
  outcome.critique_text = judge_reply.text;
  outcome.critic_verdict = judge_reply.truncated
                               ? evalharness::Prediction{}
                               : parse::try_extract_final_index(judge_reply.text);

  if (outcome.critic_verdict && outcome.critic_verdict->all_correct()) {
    outcome.after = initial;  // judged correct: byte-identical passthrough
    outcome.refined = false;
    return outcome;
  }

  // Greedy regeneration conditioned on the critique.
  gateway::SamplingParams refine_params;
  refine_params.temperature = 0.0;
  refine_params.top_p = 1.0;
  refine_params.max_new_tokens = refine_max_new_tokens;
  refine_params.n = 1;
  const auto refine_prompt =
      store.render(prompts::TemplateId::refine_solution,
                   {{"problem", problem},
                    {"initial_solution", prompts::tag_steps(initial.steps)},
                    {"critique", outcome.critique_text}});
  const auto revised =
      gw.cached_complete(generator, request_from(refine_prompt, refine_params), 0);

  outcome.refined = true;
  outcome.after.problem_id = initial.problem_id;
  try {
    outcome.after.steps = parse::split_steps(revised.text);
  } catch (const parse::ParseError&) {
    outcome.after.steps = {revised.text};  // unsplittable: keep as one step
  }
  const auto answer = parse::try_extract_boxed_answer(revised.text);
  outcome.after.final_answer = answer;
  outcome.answerless = !answer.has_value();
  return outcome;
}

RefinementReport refinement_report(const std::vector<bool>& before,
                                   const std::vector<bool>& after) {
  if (before.size() != after.size())
    throw std::invalid_argument("before/after vectors differ in length");
  if (before.empty()) throw std::invalid_argument("no solutions to account for");

  RefinementReport report;
  report.n = static_cast<long>(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i]) ++report.correct_before;
    if (after[i]) ++report.correct_after;
    if (!before[i] && after[i]) ++report.wrong_to_correct_count;
    if (before[i] && !after[i]) ++report.correct_to_wrong_count;
  }
  const double n = static_cast<double>(report.n);
  report.wrong_to_correct = 100.0 * static_cast<double>(report.wrong_to_correct_count) / n;
  report.correct_to_wrong = 100.0 * static_cast<double>(report.correct_to_wrong_count) / n;
  report.acc_before = 100.0 * static_cast<double>(report.correct_before) / n;
  report.acc_after = 100.0 * static_cast<double>(report.correct_after) / n;
  return report;
}

}  // namespace stepcritic::scaling
