#include "stepcritic/seedsynth.hpp"

#include <random>

#include "stepcritic/hash.hpp"
#include "stepcritic/parse.hpp"

namespace stepcritic::seedsynth {

namespace {

gateway::ChatRequest to_request(const prompts::RenderedPrompt& p,
                                const gateway::SamplingParams& params) {
  gateway::ChatRequest req;
  req.system = p.system;
  for (const auto& [role, text] : p.turns) req.turns.push_back({role, text});
  req.params = params;
  return req;
}

}  // namespace

SeedSynthesizer::SeedSynthesizer(gateway::Gateway& gw, gateway::EndpointConfig teacher,
                                 const prompts::TemplateStore& store, SynthConfig cfg)
    : gw_(gw), teacher_(std::move(teacher)), store_(store), cfg_(cfg) {}

StepOutcome SeedSynthesizer::synthesize_step_critique(const std::string& problem_id,
                                                      const std::string& problem,
                                                      const std::vector<std::string>& steps,
                                                      int step_index, core::StepVerdict gold) {
  const std::string tagged = prompts::tag_steps(steps);
  const std::string index_str = std::to_string(step_index);

  // Stage 1: one initial critique of the step, given the whole solution.
  const auto initial_prompt = store_.render(
      prompts::TemplateId::initial_critique,
      {{"problem", problem}, {"solution", tagged}, {"step_index", index_str}});
  const auto initial =
      gw_.cached_complete(teacher_, to_request(initial_prompt, cfg_.initial), 0);
  const auto initial_verdict = parse::try_extract_step_verdict(initial.text, step_index);
  if (!initial_verdict)
    throw parse::ParseError("initial critique verdict unparseable for step " + index_str +
                            " of " + problem_id);

  // Stage 2: many deeper critiques conditioned on the initial one.
  const auto deep_prompt = store_.render(prompts::TemplateId::indepth_critique,
                                         {{"problem", problem},
                                          {"solution", tagged},
                                          {"original_critique", initial.text},
                                          {"step_index", index_str}});
  const auto drafts =
      gw_.cached_sample(teacher_, to_request(deep_prompt, cfg_.indepth), cfg_.indepth.n);

  // Keep drafts whose verdict matches gold; unparseable drafts drop out.
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const auto v = parse::try_extract_step_verdict(drafts[i].text, step_index);
    if (v && *v == gold) pool.push_back(i);
  }
  if (pool.empty())
    return StepRejected{step_index,
                        "no in-depth draft agreed with the gold verdict for step " + index_str};

  // Deterministic pick: the seed depends only on (run seed, problem, step).
  std::mt19937_64 rng(hash::stable_seed(cfg_.seed, problem_id,
                                        static_cast<std::uint64_t>(step_index)));
  const std::size_t chosen = pool[rng() % pool.size()];

  core::StepCritique out;
  out.step_index = step_index;
  out.initial_text = initial.text;
  out.initial_verdict = *initial_verdict;
  out.deep_text = drafts[chosen].text;
  out.deep_verdict = gold;
  return out;
}

StepOutcome SeedSynthesizer::merge_step_critique(const std::string& problem_id,
                                                 core::StepCritique partial) {
  if (!partial.deep_text || !partial.deep_verdict)
    throw std::invalid_argument("merge needs a step critique with a deep draft");
  const auto prompt = store_.render(
      prompts::TemplateId::merge_critiques,
      {{"original_critique", partial.initial_text},
       {"critique_of_original_critique", *partial.deep_text},
       {"example1", store_.merge_example(1)},
       {"example2", store_.merge_example(2)}});
  const auto req = to_request(prompt, cfg_.merge);

  // The merged verdict must re-parse and match the deep verdict; one fresh
  // sample (a new cache ordinal) is the only retry.
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto merged = gw_.cached_complete(teacher_, req, attempt);
    const auto verdict = parse::try_extract_step_verdict(merged.text, partial.step_index);
    if (verdict && *verdict == *partial.deep_verdict) {
      partial.merged_text = merged.text;
      partial.merged_verdict = *verdict;
      return partial;
    }
  }
  return StepRejected{partial.step_index,
                      "merged critique verdict did not match the deep verdict for step " +
                          std::to_string(partial.step_index) + " of " + problem_id};
}

SynthOutcome SeedSynthesizer::synthesize_solution_critique(const SynthInput& input) {
  if (input.steps.empty())
    return SolutionRejected{input.problem_id, 0, "solution has no steps"};
  if (input.raw_labels.size() != input.steps.size())
    return SolutionRejected{input.problem_id, 0,
                            "label count does not match step count"};

  const auto labels = core::normalize_prm_labels(input.raw_labels);
  const int cutoff = core::first_error_cutoff(labels);

  std::vector<core::StepCritique> critiques;
  std::vector<bool> corrected;
  for (int i = 1; i <= cutoff; ++i) {
    const core::StepVerdict gold = labels[static_cast<std::size_t>(i - 1)];
    auto step = synthesize_step_critique(input.problem_id, input.problem, input.steps, i, gold);
    if (const auto* rejected = std::get_if<StepRejected>(&step))
      return SolutionRejected{input.problem_id, rejected->step_index, rejected->reason};
    auto merged = merge_step_critique(input.problem_id,
                                      std::get<core::StepCritique>(std::move(step)));
    if (const auto* rejected = std::get_if<StepRejected>(&merged))
      return SolutionRejected{input.problem_id, rejected->step_index, rejected->reason};
    auto& critique = std::get<core::StepCritique>(merged);
    corrected.push_back(critique.initial_verdict != gold);
    critiques.push_back(std::move(critique));
  }

  SynthRecord record;
  record.critique = core::make_solution_critique(input.problem_id, std::move(critiques));
  record.problem_id = input.problem_id;
  record.problem = input.problem;
  record.steps = input.steps;
  record.corrected = std::move(corrected);
  return record;
}

CorrectionStats correction_stats(std::span<const SynthRecord> records) {
  CorrectionStats stats;
  for (const auto& record : records) {
    for (const auto& step : record.critique.step_critiques) {
      const bool gold_correct = step.merged_verdict == core::StepVerdict::correct;
      const bool initial_agrees = step.initial_verdict == step.merged_verdict;
      if (gold_correct && initial_agrees) ++stats.correct_label_correct_initial;
      if (gold_correct && !initial_agrees) ++stats.correct_label_incorrect_initial;
      if (!gold_correct && initial_agrees) ++stats.incorrect_label_correct_initial;
      if (!gold_correct && !initial_agrees) ++stats.incorrect_label_incorrect_initial;
    }
  }
  return stats;
}

}  // namespace stepcritic::seedsynth
