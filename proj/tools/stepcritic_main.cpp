#include <csignal>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stepcritic/config.hpp"
#include "stepcritic/pipeline.hpp"

namespace {

void on_interrupt(int) { stepcritic::pipeline::interrupt_flag().store(true); }

int dispatch(const std::string& subcommand, const stepcritic::config::AppConfig& cfg) {
  using namespace stepcritic::pipeline;
  if (subcommand == "synthesize-seed") return run_synthesize_seed(cfg).exit_code;
  if (subcommand == "mc-label") return run_mc_label(cfg).exit_code;
  if (subcommand == "export-sft") return run_export_sft(cfg).exit_code;
  if (subcommand == "export-rl") return run_export_rl(cfg).exit_code;
  if (subcommand == "evaluate") return run_evaluate(cfg).exit_code;
  if (subcommand == "vote") return run_vote(cfg).exit_code;
  if (subcommand == "refine") return run_refine(cfg).exit_code;
  if (subcommand == "stats") return run_stats(cfg).exit_code;
  if (subcommand == "reward") return run_reward(std::cin, std::cout).exit_code;
  std::cerr << "unknown subcommand: " << subcommand << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step-level critique pipelines: synthesize seed critiques, label solutions by "
               "Monte Carlo rollout, export training data, and evaluate critics."};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--set", overrides,
                 "Override one config field, e.g. --set seed=7 or --set mc_label.threshold=0.6")
      ->take_all();

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synthesize-seed", "Run the two-stage critique synthesis over annotated solutions"},
      {"mc-label", "Label sampled solutions' first errors via per-step rollouts"},
      {"export-sft", "Write chat fine-tuning pairs from retained seed critiques"},
      {"export-rl", "Write reward-training prompts from labeled solutions"},
      {"evaluate", "Score a critic's first-error judgements on benchmark sets"},
      {"vote", "Majority-vote candidate solutions with and without critic filtering"},
      {"refine", "Judge-then-revise candidate solutions with critic feedback"},
      {"stats", "Summarize seed critiques and label distributions"},
      {"reward", "Score critique rollouts from stdin ({\"critique\", \"gold\"} per line)"},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);

  try {
    const auto cfg = stepcritic::config::load_config(config_path, overrides);
    const auto problems = stepcritic::config::validate_for(cfg, subcommand);
    if (!problems.empty()) {
      for (const auto& p : problems) std::cerr << p << '\n';
      return 2;
    }
    const int code = dispatch(subcommand, cfg);
    if (stepcritic::pipeline::interrupt_flag().load())
      std::cerr << "interrupted: partial results written\n";
    return code;
  } catch (const stepcritic::config::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
