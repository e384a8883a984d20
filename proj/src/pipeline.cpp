#include "stepcritic/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stepcritic/concurrency.hpp"
#include "stepcritic/core.hpp"
#include "stepcritic/evalharness.hpp"
#include "stepcritic/exporter.hpp"
#include "stepcritic/gateway.hpp"
#include "stepcritic/jsonl.hpp"
#include "stepcritic/manifest.hpp"
#include "stepcritic/mclabel.hpp"
#include "stepcritic/parse.hpp"
#include "stepcritic/prompts.hpp"
#include "stepcritic/scaling.hpp"
#include "stepcritic/seedsynth.hpp"

namespace stepcritic::pipeline {

using nlohmann::json;

std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

gateway::ChatRequest to_request(const prompts::RenderedPrompt& rendered,
                                const gateway::SamplingParams& params) {
  gateway::ChatRequest req;
  req.system = rendered.system;
  for (const auto& [role, text] : rendered.turns) req.turns.push_back({role, text});
  req.params = params;
  return req;
}

// Builds the manifest (config snapshot, counts, output digests, cache
// summary), writes it, and folds the failed fraction into the exit code.
RunResult finish_run(const config::AppConfig& cfg, const std::string& command,
                     const std::filesystem::path& out_dir, std::map<std::string, long> counts,
                     const std::vector<std::string>& output_files, const gateway::Gateway* gw,
                     long failed, long attempted) {
  manifest::RunManifest m;
  m.command = command;
  m.config_snapshot = config::to_json(cfg);
  m.counts = std::move(counts);
  m.seed = cfg.seed;
  m.partial = interrupt_flag().load();
  manifest::attach_cache_stats(m, gw ? gw->cache_stats() : gateway::Gateway::CacheStats{});
  for (const auto& f : output_files) m.output_digests[f] = manifest::file_sha256(out_dir / f);
  manifest::write(m, out_dir);

  RunResult result;
  result.counts = m.counts;
  result.partial = m.partial;
  const double fraction =
      attempted > 0 ? static_cast<double>(failed) / static_cast<double>(attempted) : 0.0;
  result.exit_code = (failed > 0 && fraction > cfg.failure_threshold) ? 3 : 0;
  return result;
}

// One sampled solution: the assistant prefill plus the completion, split
// back into steps (single raw step when the step markers are malformed).
struct SampledSolution {
  std::string full_text;
  core::StepSolution solution;
  bool parsed_steps = false;
  bool truncated = false;
};

SampledSolution sample_candidate(gateway::Gateway& gw, const gateway::EndpointConfig& ep,
                                 const prompts::TemplateStore& store,
                                 const std::string& problem_id, const std::string& problem,
                                 const gateway::SamplingParams& params, int ordinal) {
  const auto rendered =
      store.render(prompts::TemplateId::generate_solution, {{"problem", problem}});
  auto req = to_request(rendered, params);
  const std::string prefill = (!req.turns.empty() && req.turns.back().role == "assistant")
                                  ? req.turns.back().text
                                  : std::string();
  const auto completion = gw.cached_complete(ep, req, ordinal);

  SampledSolution out;
  out.full_text = prefill + completion.text;
  out.truncated = completion.truncated;
  out.solution.problem_id = problem_id;
  try {
    out.solution.steps = parse::split_steps(out.full_text);
    out.parsed_steps = true;
  } catch (const parse::ParseError&) {
    out.solution.steps = {out.full_text};
  }
  out.solution.final_answer = parse::try_extract_boxed_answer(out.full_text);
  return out;
}

json step_critique_to_json(const core::StepCritique& sc) {
  return json{{"step_index", sc.step_index},
              {"initial_text", sc.initial_text},
              {"initial_verdict", core::to_int(sc.initial_verdict)},
              {"deep_text", sc.deep_text ? json(*sc.deep_text) : json(nullptr)},
              {"deep_verdict", sc.deep_verdict ? json(core::to_int(*sc.deep_verdict)) : json(nullptr)},
              {"merged_text", sc.merged_text},
              {"merged_verdict", core::to_int(sc.merged_verdict)}};
}

json record_to_json(const seedsynth::SynthRecord& rec) {
  json critiques = json::array();
  for (const auto& sc : rec.critique.step_critiques) critiques.push_back(step_critique_to_json(sc));
  json corrected = json::array();
  for (bool b : rec.corrected) corrected.push_back(b);
  return json{{"problem_id", rec.problem_id},
              {"problem", rec.problem},
              {"steps", rec.steps},
              {"critiques", critiques},
              {"corrected", corrected},
              {"final_answer", rec.critique.final_label.value}};
}

std::optional<seedsynth::SynthRecord> record_from_json(const json& r, std::string* error) {
  try {
    seedsynth::SynthRecord rec;
    rec.problem_id = r.at("problem_id").get<std::string>();
    rec.problem = r.at("problem").get<std::string>();
    rec.steps = r.at("steps").get<std::vector<std::string>>();
    for (const auto& c : r.at("critiques")) {
      core::StepCritique sc;
      sc.step_index = c.at("step_index").get<int>();
      sc.initial_text = c.at("initial_text").get<std::string>();
      sc.initial_verdict = core::verdict_from_int(c.at("initial_verdict").get<int>());
      if (!c.at("deep_text").is_null()) sc.deep_text = c.at("deep_text").get<std::string>();
      if (!c.at("deep_verdict").is_null())
        sc.deep_verdict = core::verdict_from_int(c.at("deep_verdict").get<int>());
      sc.merged_text = c.at("merged_text").get<std::string>();
      sc.merged_verdict = core::verdict_from_int(c.at("merged_verdict").get<int>());
      rec.critique.step_critiques.push_back(std::move(sc));
    }
    rec.critique.problem_id = rec.problem_id;
    rec.critique.final_label = core::make_first_error_label(r.at("final_answer").get<int>());
    for (const auto& b : r.at("corrected")) rec.corrected.push_back(b.get<bool>());
    return rec;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
}

json fractions_to_json(const std::vector<double>& fractions) {
  json out = json::array();
  for (double f : fractions) out.push_back(f);
  return out;
}

}  // namespace

RunResult run_synthesize_seed(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.synthesize_seed.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);
  gateway::Gateway gw({cfg.cache_dir});
  const auto teacher = cfg.teacher.to_endpoint(gateway::Role::critic_teacher);
  gw.register_endpoint(teacher);

  seedsynth::SynthConfig synth_cfg;
  synth_cfg.initial = cfg.synthesize_seed.initial.to_params();
  synth_cfg.indepth = cfg.synthesize_seed.indepth.to_params();
  synth_cfg.merge = cfg.synthesize_seed.merge.to_params();
  synth_cfg.seed = cfg.seed;
  seedsynth::SeedSynthesizer synth(gw, teacher, store, synth_cfg);

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.synthesize_seed.input, &line_errors);

  std::vector<std::optional<seedsynth::SynthInput>> inputs(rows.size());
  std::vector<std::string> row_errors(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      seedsynth::SynthInput in;
      in.problem_id = rows[i].at("problem_id").get<std::string>();
      in.problem = rows[i].at("problem").get<std::string>();
      in.steps = rows[i].at("steps").get<std::vector<std::string>>();
      in.raw_labels = rows[i].at("labels").get<std::vector<int>>();
      inputs[i] = std::move(in);
    } catch (const std::exception& e) {
      row_errors[i] = e.what();
    }
  }

  struct Failure {
    std::string message;
  };
  using Item =
      std::variant<std::monostate, seedsynth::SynthRecord, seedsynth::SolutionRejected, Failure>;
  std::vector<Item> items(rows.size());

  concurrency::parallel_for(
      rows.size(), cfg.max_workers,
      [&](std::size_t i) {
        if (!inputs[i]) return;
        try {
          auto outcome = synth.synthesize_solution_critique(*inputs[i]);
          if (auto* rec = std::get_if<seedsynth::SynthRecord>(&outcome))
            items[i] = std::move(*rec);
          else
            items[i] = std::get<seedsynth::SolutionRejected>(std::move(outcome));
        } catch (const parse::ParseError& e) {
          // An unreadable teacher verdict rejects the solution; only backend
          // trouble counts as a failure.
          items[i] = seedsynth::SolutionRejected{inputs[i]->problem_id, 0, e.what()};
        } catch (const std::exception& e) {
          items[i] = Failure{e.what()};
        }
      },
      &interrupt_flag());

  std::map<std::string, long> counts{{"input", static_cast<long>(rows.size())},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", 0},
                                     {"retained", 0},
                                     {"rejected", 0},
                                     {"failed", 0},
                                     {"unprocessed", 0}};
  long valid_inputs = 0;

  jsonl::Writer retained_out(out_dir / "seed_critiques.jsonl");
  jsonl::Writer rejected_out(out_dir / "rejected.jsonl");
  for (const auto& err : line_errors)
    rejected_out.write(json{{"line", err.line}, {"reason", err.message}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!inputs[i]) {
      ++counts["invalid_rows"];
      rejected_out.write(json{{"index", i}, {"reason", row_errors[i]}});
      continue;
    }
    ++valid_inputs;
    if (const auto* rec = std::get_if<seedsynth::SynthRecord>(&items[i])) {
      ++counts["retained"];
      retained_out.write(record_to_json(*rec));
    } else if (const auto* rej = std::get_if<seedsynth::SolutionRejected>(&items[i])) {
      ++counts["rejected"];
      rejected_out.write(json{{"problem_id", rej->problem_id},
                              {"failing_step", rej->failing_step},
                              {"reason", rej->reason}});
    } else if (const auto* fail = std::get_if<Failure>(&items[i])) {
      ++counts["failed"];
      rejected_out.write(json{{"problem_id", inputs[i]->problem_id},
                              {"failed", true},
                              {"reason", fail->message}});
    } else {
      ++counts["unprocessed"];
    }
  }

  retained_out.close();
  rejected_out.close();
  const long failed = counts.at("failed");
  return finish_run(cfg, "synthesize-seed", out_dir, std::move(counts),
                    {"seed_critiques.jsonl", "rejected.jsonl"}, &gw, failed, valid_inputs);
}

RunResult run_mc_label(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.mc_label.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);
  gateway::Gateway gw({cfg.cache_dir});
  std::vector<gateway::EndpointConfig> gens;
  for (const auto& g : cfg.generators) {
    gens.push_back(g.to_endpoint(gateway::Role::generator));
    gw.register_endpoint(gens.back());
  }
  const int n_gens = static_cast<int>(gens.size());
  const int per_problem = cfg.mc_label.solutions_per_problem;
  const double threshold = cfg.mc_label.threshold;
  const auto sampling = cfg.mc_label.sampling.to_params();

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.mc_label.input, &line_errors);

  struct ProblemInput {
    core::Problem problem;
  };
  std::vector<std::optional<ProblemInput>> inputs(rows.size());
  std::vector<std::string> row_errors(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      core::Problem p;
      p.id = rows[i].at("problem_id").get<std::string>();
      p.statement = rows[i].at("problem").get<std::string>();
      p.reference_answer = rows[i].at("reference_answer").get<std::string>();
      p.source = core::source_from_string(rows[i].value("source", "other"));
      core::validate(p);
      inputs[i] = ProblemInput{std::move(p)};
    } catch (const std::exception& e) {
      row_errors[i] = e.what();
    }
  }

  struct ProblemResult {
    bool processed = false;
    bool screened = false;
    bool failed = false;
    std::string failure;
    std::vector<json> labeled_rows;
    std::vector<json> discarded_rows;
    long failed_candidates = 0;
  };
  std::vector<ProblemResult> results(rows.size());

  concurrency::parallel_for(
      rows.size(), cfg.max_workers,
      [&](std::size_t i) {
        if (!inputs[i]) return;
        auto& res = results[i];
        res.processed = true;
        const auto& problem = inputs[i]->problem;
        try {
          std::vector<SampledSolution> candidates(per_problem);
          std::vector<std::string> cand_errors(per_problem);
          for (int c = 0; c < per_problem; ++c) {
            try {
              candidates[c] = sample_candidate(gw, gens[c % n_gens], store, problem.id,
                                               problem.statement, sampling, c / n_gens);
            } catch (const gateway::GatewayError& e) {
              cand_errors[c] = e.what();
            }
          }

          auto candidate_correct = [&](int c) {
            return candidates[c].solution.final_answer &&
                   parse::answers_equal(*candidates[c].solution.final_answer,
                                        *problem.reference_answer);
          };

          // Screening looks at the final-answer correctness of the sampled
          // set; a uniformly right or wrong set carries no training signal.
          std::vector<bool> correct_flags;
          for (int c = 0; c < per_problem; ++c)
            if (cand_errors[c].empty()) correct_flags.push_back(candidate_correct(c));
          if (!correct_flags.empty() &&
              mclabel::screen_problem(correct_flags) == mclabel::Screen::discard) {
            res.screened = true;
            const bool all_correct = correct_flags.front();
            for (int c = 0; c < per_problem; ++c)
              if (!cand_errors[c].empty()) ++res.failed_candidates;
            res.discarded_rows.push_back(
                json{{"problem_id", problem.id},
                     {"candidate_index", -1},
                     {"reason", all_correct ? "screened: every sample correct"
                                            : "screened: no sample correct"}});
            return;
          }

          for (int c = 0; c < per_problem; ++c) {
            if (!cand_errors[c].empty()) {
              ++res.failed_candidates;
              res.discarded_rows.push_back(json{{"problem_id", problem.id},
                                                {"candidate_index", c},
                                                {"failed", true},
                                                {"reason", cand_errors[c]}});
              continue;
            }
            if (!candidates[c].parsed_steps) {
              res.discarded_rows.push_back(json{{"problem_id", problem.id},
                                                {"candidate_index", c},
                                                {"reason", "unparseable steps"}});
              continue;
            }
            const auto profile = mclabel::estimate_pass_rates(
                gw, gens[c % n_gens], store, problem, candidates[c].solution.steps,
                cfg.mc_label.rollouts_per_step, sampling);
            const auto decision = candidate_correct(c)
                                      ? mclabel::label_correct_solution(profile, threshold)
                                      : mclabel::label_incorrect_solution(profile, threshold);
            if (const auto* label = std::get_if<core::FirstErrorLabel>(&decision)) {
              res.labeled_rows.push_back(json{{"problem_id", problem.id},
                                              {"candidate_index", c},
                                              {"problem", problem.statement},
                                              {"steps", candidates[c].solution.steps},
                                              {"first_error", label->value},
                                              {"pass_rates", fractions_to_json(profile.fractions)}});
            } else {
              res.discarded_rows.push_back(
                  json{{"problem_id", problem.id},
                       {"candidate_index", c},
                       {"reason", std::get<mclabel::Discard>(decision).reason}});
            }
          }
        } catch (const std::exception& e) {
          res.failed = true;
          res.failure = e.what();
        }
      },
      &interrupt_flag());

  std::map<std::string, long> counts{{"problems", 0},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", 0},
                                     {"screened_problems", 0},
                                     {"labeled", 0},
                                     {"discarded", 0},
                                     {"failed_candidates", 0},
                                     {"failed_problems", 0},
                                     {"unprocessed", 0}};

  jsonl::Writer labeled_out(out_dir / "labeled.jsonl");
  jsonl::Writer discarded_out(out_dir / "discarded.jsonl");
  for (const auto& err : line_errors)
    discarded_out.write(json{{"line", err.line}, {"reason", err.message}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!inputs[i]) {
      ++counts["invalid_rows"];
      discarded_out.write(json{{"index", i}, {"reason", row_errors[i]}});
      continue;
    }
    ++counts["problems"];
    const auto& res = results[i];
    if (!res.processed) {
      ++counts["unprocessed"];
      continue;
    }
    if (res.failed) {
      ++counts["failed_problems"];
      discarded_out.write(json{{"problem_id", inputs[i]->problem.id},
                               {"candidate_index", -1},
                               {"failed", true},
                               {"reason", res.failure}});
      continue;
    }
    if (res.screened) ++counts["screened_problems"];
    counts["failed_candidates"] += res.failed_candidates;
    for (const auto& row : res.labeled_rows) {
      ++counts["labeled"];
      labeled_out.write(row);
    }
    for (const auto& row : res.discarded_rows) {
      ++counts["discarded"];
      discarded_out.write(row);
    }
  }

  labeled_out.close();
  discarded_out.close();
  const long attempted = counts.at("problems") * static_cast<long>(per_problem);
  const long failed =
      counts.at("failed_candidates") + counts.at("failed_problems") * static_cast<long>(per_problem);
  return finish_run(cfg, "mc-label", out_dir, std::move(counts),
                    {"labeled.jsonl", "discarded.jsonl"}, &gw, failed, attempted);
}

RunResult run_export_sft(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.export_sft.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.export_sft.input, &line_errors);

  std::vector<seedsynth::SynthRecord> records;
  long invalid_rows = 0;
  for (const auto& row : rows) {
    std::string error;
    if (auto rec = record_from_json(row, &error))
      records.push_back(std::move(*rec));
    else {
      ++invalid_rows;
      std::cerr << "warning: skipping record: " << error << '\n';
    }
  }

  const auto stats = exporter::export_sft(records, store, out_dir / "sft.jsonl");

  std::vector<core::FirstErrorLabel> labels;
  labels.reserve(records.size());
  for (const auto& rec : records) labels.push_back(rec.critique.final_label);
  write_text(out_dir / "label_histogram.txt", exporter::histogram_bars(exporter::label_histogram(labels)));
  write_json_file(out_dir / "sft_training.json", exporter::training_manifest("sft"));

  std::map<std::string, long> counts{{"input", static_cast<long>(rows.size())},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", invalid_rows},
                                     {"written", stats.written},
                                     {"skipped", stats.skipped}};
  return finish_run(cfg, "export-sft", out_dir, std::move(counts),
                    {"sft.jsonl", "label_histogram.txt", "sft_training.json"}, nullptr, 0, 0);
}

RunResult run_export_rl(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.export_rl.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.export_rl.input, &line_errors);

  std::vector<exporter::RlInput> inputs;
  long invalid_rows = 0;
  for (const auto& row : rows) {
    try {
      exporter::RlInput in;
      in.problem = row.at("problem").get<std::string>();
      in.steps = row.at("steps").get<std::vector<std::string>>();
      in.first_error = core::make_first_error_label(row.at("first_error").get<int>());
      if (in.steps.empty()) throw std::invalid_argument("empty steps");
      inputs.push_back(std::move(in));
    } catch (const std::exception& e) {
      ++invalid_rows;
      std::cerr << "warning: skipping labeled row: " << e.what() << '\n';
    }
  }

  exporter::RlFilter filter{cfg.export_rl.min_steps, cfg.export_rl.max_steps,
                            cfg.export_rl.max_prompt_tokens};
  const auto stats = exporter::export_rl(inputs, store, filter, out_dir / "rl.jsonl");
  write_json_file(out_dir / "rl_training.json", exporter::training_manifest("rl"));

  std::map<std::string, long> counts{{"input", static_cast<long>(rows.size())},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", invalid_rows},
                                     {"written", stats.written},
                                     {"skipped", stats.skipped}};
  return finish_run(cfg, "export-rl", out_dir, std::move(counts),
                    {"rl.jsonl", "rl_training.json"}, nullptr, 0, 0);
}

RunResult run_evaluate(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.evaluate.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);
  gateway::Gateway gw({cfg.cache_dir});
  const auto critic = cfg.critic.to_endpoint(gateway::Role::critic_under_test);
  gw.register_endpoint(critic);

  std::vector<std::pair<std::string, std::vector<evalharness::BenchmarkExample>>> sets;
  jsonl::Writer load_errors(out_dir / "load_errors.jsonl");
  long rejected_lines = 0;
  long examples_total = 0;
  for (const auto& entry : cfg.evaluate.benchmarks) {
    auto loaded = evalharness::load_benchmark(entry.path);
    for (const auto& err : loaded.rejected) {
      ++rejected_lines;
      load_errors.write(json{{"set", entry.name}, {"line", err.line}, {"reason", err.message}});
    }
    examples_total += static_cast<long>(loaded.examples.size());
    sets.emplace_back(entry.name, std::move(loaded.examples));
  }

  evalharness::EvalOptions options;
  options.sampling = cfg.evaluate.sampling.to_params();
  options.samples_per_example = cfg.evaluate.k_samples;
  options.max_workers = cfg.max_workers;
  options.transcript_dir = cfg.evaluate.transcript_dir;

  const auto report = evalharness::evaluate(gw, critic, store, sets, options);
  write_json_file(out_dir / "report.json", evalharness::report_to_json(report));
  write_text(out_dir / "report.txt", evalharness::format_report_table(report));

  long parse_failures = 0;
  for (const auto& s : report.sets) parse_failures += s.parse_failures;

  std::map<std::string, long> counts{{"sets", static_cast<long>(report.sets.size())},
                                     {"examples", examples_total},
                                     {"rejected_lines", rejected_lines},
                                     {"parse_failures", parse_failures},
                                     {"gateway_failures", report.gateway_failures}};
  load_errors.close();
  const long judgements = examples_total * static_cast<long>(cfg.evaluate.k_samples);
  return finish_run(cfg, "evaluate", out_dir, std::move(counts),
                    {"report.json", "report.txt", "load_errors.jsonl"}, &gw,
                    report.gateway_failures, judgements);
}

RunResult run_vote(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.vote.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);
  gateway::Gateway gw({cfg.cache_dir});
  const auto critic = cfg.critic.to_endpoint(gateway::Role::critic_under_test);
  gw.register_endpoint(critic);
  std::vector<gateway::EndpointConfig> gens;
  for (const auto& g : cfg.generators) {
    gens.push_back(g.to_endpoint(gateway::Role::generator));
    gw.register_endpoint(gens.back());
  }
  const int n_gens = static_cast<int>(gens.size());
  const int n_candidates = cfg.vote.candidates;
  const auto gen_params = cfg.vote.generate.to_params();
  const auto judge_params = cfg.vote.judge.to_params();

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.vote.input, &line_errors);

  struct VoteInput {
    std::string id;
    std::string problem;
    std::string reference;
  };
  std::vector<std::optional<VoteInput>> inputs(rows.size());
  long invalid_rows = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      VoteInput in;
      in.id = rows[i].value("problem_id", std::to_string(i));
      in.problem = rows[i].at("problem").get<std::string>();
      in.reference = rows[i].at("reference_answer").get<std::string>();
      inputs[i] = std::move(in);
    } catch (const std::exception& e) {
      ++invalid_rows;
      std::cerr << "warning: skipping vote row " << i << ": " << e.what() << '\n';
    }
  }

  struct ProblemResult {
    bool processed = false;
    bool failed = false;
    std::string failure;
    bool no_answer = false;
    long failed_candidates = 0;
    json row;
    bool verified_correct = false;
    bool plain_correct = false;
    bool fallback_used = false;
  };
  std::vector<ProblemResult> results(rows.size());

  concurrency::parallel_for(
      rows.size(), cfg.max_workers,
      [&](std::size_t i) {
        if (!inputs[i]) return;
        auto& res = results[i];
        res.processed = true;
        const auto& in = *inputs[i];
        try {
          std::vector<core::StepSolution> candidates;
          candidates.reserve(n_candidates);
          for (int c = 0; c < n_candidates; ++c) {
            try {
              candidates.push_back(sample_candidate(gw, gens[c % n_gens], store, in.id, in.problem,
                                                    gen_params, c / n_gens)
                                       .solution);
            } catch (const gateway::GatewayError& e) {
              ++res.failed_candidates;
              std::cerr << "warning: candidate " << c << " for " << in.id
                        << " failed: " << e.what() << '\n';
              core::StepSolution empty;
              empty.problem_id = in.id;
              candidates.push_back(std::move(empty));  // no answer, never votes
            }
          }

          scaling::VoteResult verified;
          scaling::VoteResult plain;
          try {
            verified = scaling::verified_majority_vote(gw, critic, store, in.problem, candidates,
                                                       judge_params);
            plain = scaling::plain_majority_vote(candidates);
          } catch (const std::invalid_argument&) {
            res.no_answer = true;
            res.row = json{{"problem_id", in.id}, {"no_answer", true}};
            return;
          }

          res.verified_correct = parse::answers_equal(verified.answer, in.reference);
          res.plain_correct = parse::answers_equal(plain.answer, in.reference);
          res.fallback_used = verified.fallback_used;

          json cand_rows = json::array();
          for (const auto& cj : verified.candidates) {
            cand_rows.push_back(
                json{{"answer", cj.answer ? json(*cj.answer) : json(nullptr)},
                     {"judged", cj.judged},
                     {"survived", cj.survived},
                     {"verdict", cj.verdict ? json(cj.verdict->value) : json(nullptr)}});
          }
          res.row = json{{"problem_id", in.id},
                         {"verified_answer", verified.answer},
                         {"verified_winner", verified.winner_index},
                         {"verified_correct", res.verified_correct},
                         {"fallback_used", verified.fallback_used},
                         {"plain_answer", plain.answer},
                         {"plain_winner", plain.winner_index},
                         {"plain_correct", res.plain_correct},
                         {"candidates", cand_rows}};
        } catch (const std::exception& e) {
          res.failed = true;
          res.failure = e.what();
        }
      },
      &interrupt_flag());

  std::map<std::string, long> counts{{"problems", 0},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", invalid_rows},
                                     {"verified_correct", 0},
                                     {"plain_correct", 0},
                                     {"fallbacks", 0},
                                     {"no_answer", 0},
                                     {"failed_candidates", 0},
                                     {"failed_problems", 0},
                                     {"unprocessed", 0}};

  jsonl::Writer votes_out(out_dir / "votes.jsonl");
  long scored = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!inputs[i]) continue;
    ++counts["problems"];
    const auto& res = results[i];
    if (!res.processed) {
      ++counts["unprocessed"];
      continue;
    }
    if (res.failed) {
      ++counts["failed_problems"];
      votes_out.write(json{{"problem_id", inputs[i]->id}, {"failed", true}, {"reason", res.failure}});
      continue;
    }
    counts["failed_candidates"] += res.failed_candidates;
    ++scored;
    if (res.no_answer) {
      ++counts["no_answer"];  // scored, counts as wrong for both strategies
      votes_out.write(res.row);
      continue;
    }
    if (res.verified_correct) ++counts["verified_correct"];
    if (res.plain_correct) ++counts["plain_correct"];
    if (res.fallback_used) ++counts["fallbacks"];
    votes_out.write(res.row);
  }

  json summary{
      {"problems", counts.at("problems")},
      {"scored", scored},
      {"verified_correct", counts.at("verified_correct")},
      {"plain_correct", counts.at("plain_correct")},
      {"verified_accuracy",
       scored > 0 ? 100.0 * static_cast<double>(counts.at("verified_correct")) / scored : 0.0},
      {"plain_accuracy",
       scored > 0 ? 100.0 * static_cast<double>(counts.at("plain_correct")) / scored : 0.0},
      {"fallbacks", counts.at("fallbacks")},
      {"no_answer", counts.at("no_answer")},
      {"failed_problems", counts.at("failed_problems")},
      {"failed_candidates", counts.at("failed_candidates")}};
  write_json_file(out_dir / "summary.json", summary);

  votes_out.close();
  const long attempted = counts.at("problems") * static_cast<long>(n_candidates);
  const long failed = counts.at("failed_candidates") +
                      counts.at("failed_problems") * static_cast<long>(n_candidates);
  return finish_run(cfg, "vote", out_dir, std::move(counts), {"votes.jsonl", "summary.json"}, &gw,
                    failed, attempted);
}

RunResult run_refine(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.refine.output_dir;
  std::filesystem::create_directories(out_dir);
  prompts::TemplateStore store(cfg.assets_dir);
  gateway::Gateway gw({cfg.cache_dir});
  const auto critic = cfg.critic.to_endpoint(gateway::Role::critic_under_test);
  gw.register_endpoint(critic);
  std::vector<gateway::EndpointConfig> gens;
  for (const auto& g : cfg.generators) {
    gens.push_back(g.to_endpoint(gateway::Role::generator));
    gw.register_endpoint(gens.back());
  }
  const gateway::SamplingParams gen_params{1.0, 0.9, cfg.refine.generate_max_new_tokens, 1};
  const auto judge_params = cfg.refine.judge.to_params();

  std::vector<jsonl::LineError> line_errors;
  const auto rows = jsonl::read_file(cfg.refine.input, &line_errors);

  struct RefineInput {
    std::string id;
    std::string problem;
    std::string reference;
  };
  std::vector<std::optional<RefineInput>> inputs(rows.size());
  long invalid_rows = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      RefineInput in;
      in.id = rows[i].value("problem_id", std::to_string(i));
      in.problem = rows[i].at("problem").get<std::string>();
      in.reference = rows[i].at("reference_answer").get<std::string>();
      inputs[i] = std::move(in);
    } catch (const std::exception& e) {
      ++invalid_rows;
      std::cerr << "warning: skipping refine row " << i << ": " << e.what() << '\n';
    }
  }

  struct ProblemResult {
    bool processed = false;
    bool failed = false;
    std::string failure;
    bool before_correct = false;
    bool after_correct = false;
    json row;
  };
  std::vector<ProblemResult> results(rows.size());

  concurrency::parallel_for(
      rows.size(), cfg.max_workers,
      [&](std::size_t i) {
        if (!inputs[i]) return;
        auto& res = results[i];
        res.processed = true;
        const auto& in = *inputs[i];
        try {
          const auto initial =
              sample_candidate(gw, gens.front(), store, in.id, in.problem, gen_params, 0);
          const auto outcome =
              scaling::refine_solution(gw, gens.front(), critic, store, in.problem,
                                       initial.solution, judge_params,
                                       cfg.refine.refine_max_new_tokens);
          auto is_correct = [&](const core::StepSolution& s) {
            return s.final_answer && parse::answers_equal(*s.final_answer, in.reference);
          };
          res.before_correct = is_correct(outcome.before);
          res.after_correct = is_correct(outcome.after);
          res.row = json{
              {"problem_id", in.id},
              {"refined", outcome.refined},
              {"answerless", outcome.answerless},
              {"critic_verdict",
               outcome.critic_verdict ? json(outcome.critic_verdict->value) : json(nullptr)},
              {"before_answer",
               outcome.before.final_answer ? json(*outcome.before.final_answer) : json(nullptr)},
              {"after_answer",
               outcome.after.final_answer ? json(*outcome.after.final_answer) : json(nullptr)},
              {"before_correct", res.before_correct},
              {"after_correct", res.after_correct}};
        } catch (const std::exception& e) {
          res.failed = true;
          res.failure = e.what();
        }
      },
      &interrupt_flag());

  std::map<std::string, long> counts{{"problems", 0},
                                     {"malformed_lines", static_cast<long>(line_errors.size())},
                                     {"invalid_rows", invalid_rows},
                                     {"refined", 0},
                                     {"answerless", 0},
                                     {"failed", 0},
                                     {"unprocessed", 0}};

  jsonl::Writer refine_out(out_dir / "refine.jsonl");
  std::vector<bool> before;
  std::vector<bool> after;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!inputs[i]) continue;
    ++counts["problems"];
    const auto& res = results[i];
    if (!res.processed) {
      ++counts["unprocessed"];
      continue;
    }
    if (res.failed) {
      ++counts["failed"];
      refine_out.write(
          json{{"problem_id", inputs[i]->id}, {"failed", true}, {"reason", res.failure}});
      continue;
    }
    if (res.row.at("refined").get<bool>()) ++counts["refined"];
    if (res.row.at("answerless").get<bool>()) ++counts["answerless"];
    before.push_back(res.before_correct);
    after.push_back(res.after_correct);
    refine_out.write(res.row);
  }

  json summary;
  if (!before.empty()) {
    const auto report = scaling::refinement_report(before, after);
    summary = json{{"n", report.n},
                   {"wrong_to_correct_count", report.wrong_to_correct_count},
                   {"correct_to_wrong_count", report.correct_to_wrong_count},
                   {"correct_before", report.correct_before},
                   {"correct_after", report.correct_after},
                   {"wrong_to_correct", report.wrong_to_correct},
                   {"correct_to_wrong", report.correct_to_wrong},
                   {"acc_before", report.acc_before},
                   {"acc_after", report.acc_after}};
  } else {
    summary = json{{"n", 0}};
  }
  write_json_file(out_dir / "summary.json", summary);

  refine_out.close();
  const long failed = counts.at("failed");
  const long attempted = counts.at("problems") - counts.at("unprocessed");
  return finish_run(cfg, "refine", out_dir, std::move(counts), {"refine.jsonl", "summary.json"},
                    &gw, failed, attempted);
}

RunResult run_stats(const config::AppConfig& cfg) {
  const std::filesystem::path out_dir = cfg.stats.output_dir;
  std::filesystem::create_directories(out_dir);

  std::map<std::string, long> counts{{"seed_records", 0},
                                     {"labeled_records", 0},
                                     {"invalid_rows", 0}};
  json stats_json;
  std::string stats_text;

  if (!cfg.stats.seed_critiques.empty()) {
    const auto rows = jsonl::read_file(cfg.stats.seed_critiques);
    std::vector<seedsynth::SynthRecord> records;
    for (const auto& row : rows) {
      std::string error;
      if (auto rec = record_from_json(row, &error))
        records.push_back(std::move(*rec));
      else
        ++counts["invalid_rows"];
    }
    counts["seed_records"] = static_cast<long>(records.size());
    const auto cs = seedsynth::correction_stats(records);
    stats_json["correction"] =
        json{{"correct_label_correct_initial", cs.correct_label_correct_initial},
             {"correct_label_incorrect_initial", cs.correct_label_incorrect_initial},
             {"incorrect_label_correct_initial", cs.incorrect_label_correct_initial},
             {"incorrect_label_incorrect_initial", cs.incorrect_label_incorrect_initial}};
    stats_text += "initial critique agreement with gold step labels\n";
    stats_text += "  gold correct steps:   " + std::to_string(cs.correct_label_correct_initial) +
                  " initial correct, " + std::to_string(cs.correct_label_incorrect_initial) +
                  " initial incorrect\n";
    stats_text += "  gold incorrect steps: " + std::to_string(cs.incorrect_label_correct_initial) +
                  " initial correct, " + std::to_string(cs.incorrect_label_incorrect_initial) +
                  " initial incorrect\n";
  } else {
    stats_json["correction"] = nullptr;
  }

  if (!cfg.stats.labeled.empty()) {
    const auto rows = jsonl::read_file(cfg.stats.labeled);
    std::vector<core::FirstErrorLabel> labels;
    for (const auto& row : rows) {
      try {
        labels.push_back(core::make_first_error_label(row.at("first_error").get<int>()));
      } catch (const std::exception&) {
        ++counts["invalid_rows"];
      }
    }
    counts["labeled_records"] = static_cast<long>(labels.size());
    const auto histogram = exporter::label_histogram(labels);
    json pairs = json::array();
    for (const auto& [label, count] : histogram) pairs.push_back(json::array({label, count}));
    stats_json["histogram"] = pairs;
    if (!stats_text.empty()) stats_text += "\n";
    stats_text += "first-error label distribution\n";
    stats_text += exporter::histogram_bars(histogram);
  } else {
    stats_json["histogram"] = nullptr;
  }

  write_json_file(out_dir / "stats.json", stats_json);
  write_text(out_dir / "stats.txt", stats_text);

  return finish_run(cfg, "stats", out_dir, std::move(counts), {"stats.json", "stats.txt"}, nullptr,
                    0, 0);
}

RunResult run_reward(std::istream& in, std::ostream& out) {
  RunResult result;
  long lines = 0;
  long errors = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++lines;
    json reply;
    const json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
      ++errors;
      reply = json{{"reward", 0.0}, {"error", "not a JSON object"}};
    } else {
      try {
        const auto critique = row.at("critique").get<std::string>();
        const auto gold = core::make_first_error_label(row.at("gold").get<int>());
        reply = json{{"reward", exporter::compute_reward(critique, gold)}};
      } catch (const std::exception& e) {
        ++errors;
        reply = json{{"reward", 0.0}, {"error", e.what()}};
      }
    }
    out << reply.dump() << '\n';
  }
  result.counts["lines"] = lines;
  result.counts["errors"] = errors;
  return result;
}

}  // namespace stepcritic::pipeline
