#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stepcritic/core.hpp"
#include "stepcritic/gateway.hpp"
#include "stepcritic/prompts.hpp"

namespace stepcritic::seedsynth {

// Sampling plans for the three teacher calls. Defaults mirror the reference
// recipe: one initial draft at 0.7/0.9, sixteen deeper drafts at 1.0/0.9,
// one merge at 0.7/0.9.
struct SynthConfig {
  gateway::SamplingParams initial{0.7, 0.9, 8192, 1};
  gateway::SamplingParams indepth{1.0, 0.9, 8192, 16};
  gateway::SamplingParams merge{0.7, 0.9, 8192, 1};
  std::uint64_t seed = 0;  // drives the pick among gold-agreeing deep drafts
};

// One input solution with raw human step annotations in {-1, 0, 1}.
struct SynthInput {
  std::string problem_id;
  std::string problem;
  std::vector<std::string> steps;
  std::vector<int> raw_labels;
};

struct StepRejected {
  int step_index = 0;
  std::string reason;
};

using StepOutcome = std::variant<core::StepCritique, StepRejected>;

struct SolutionRejected {
  std::string problem_id;
  int failing_step = 0;
  std::string reason;
};

// One retained training record: the full critique plus which steps' initial
// verdicts the deeper pass overturned.
struct SynthRecord {
  std::string problem_id;
  std::string problem;
  std::vector<std::string> steps;
  core::SolutionCritique critique;
  std::vector<bool> corrected;  // per critiqued step: initial verdict != gold
};

using SynthOutcome = std::variant<SynthRecord, SolutionRejected>;

// 2x2 tally of initial-critique quality against gold step labels.
struct CorrectionStats {
  long correct_label_correct_initial = 0;
  long correct_label_incorrect_initial = 0;
  long incorrect_label_correct_initial = 0;
  long incorrect_label_incorrect_initial = 0;
};

// Drives the three-stage critique synthesis against a teacher endpoint.
// Every teacher call goes through the gateway cache, so reruns replay.
class SeedSynthesizer {
 public:
  SeedSynthesizer(gateway::Gateway& gw, gateway::EndpointConfig teacher,
                  const prompts::TemplateStore& store, SynthConfig cfg);

  // Initial + in-depth critique for one step. The in-depth stage samples
  // `cfg.indepth.n` drafts conditioned on the initial critique, keeps those
  // whose parsed verdict matches `gold` (unparseable drafts are dropped),
  // and picks one uniformly with a deterministic per-(problem, step) seed.
  // An empty agreement pool rejects the step. Throws ParseError when the
  // initial critique's own verdict cannot be read.
  StepOutcome synthesize_step_critique(const std::string& problem_id, const std::string& problem,
                                       const std::vector<std::string>& steps, int step_index,
                                       core::StepVerdict gold);

  // Merges the two drafts into one deliberate critique. The merged verdict
  // must parse and equal the deep verdict; one retry (a fresh sample) is
  // allowed, then the step is rejected.
  StepOutcome merge_step_critique(const std::string& problem_id, core::StepCritique partial);

  // Full per-solution pipeline: normalize raw labels, critique steps
  // 1..first-error cutoff, merge each, and assemble the record. Any step
  // rejection rejects the whole solution (no regeneration).
  SynthOutcome synthesize_solution_critique(const SynthInput& input);

 private:
  gateway::Gateway& gw_;
  gateway::EndpointConfig teacher_;
  const prompts::TemplateStore& store_;
  SynthConfig cfg_;
};

// Tallies initial-verdict agreement per gold label over retained records.
// The merged verdict is the gold label by construction, so the gold side of
// the tally reads straight off each step critique.
CorrectionStats correction_stats(std::span<const SynthRecord> records);

}  // namespace stepcritic::seedsynth
