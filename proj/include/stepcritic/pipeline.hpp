#pragma once

#include <atomic>
#include <iosfwd>
#include <map>
#include <string>

#include "stepcritic/config.hpp"

namespace stepcritic::pipeline {

// Cooperative cancellation flag, set by the CLI's SIGINT handler. A set flag
// stops pipelines between items; completed work is still written out and the
// run manifest is marked partial.
std::atomic<bool>& interrupt_flag();

struct RunResult {
  int exit_code = 0;  // 0 = ok, 3 = failed-item fraction above the threshold
  std::map<std::string, long> counts;
  bool partial = false;
};

// Each run_* executes one subcommand end to end: read inputs, drive the
// models through the gateway, write output files plus a manifest.json into
// the subcommand's output directory. Item-level model failures are counted
// and recorded, never fatal; the failed fraction decides the exit code.
// Unusable inputs or configs still throw (the CLI turns those into exit 1).
RunResult run_synthesize_seed(const config::AppConfig& cfg);
RunResult run_mc_label(const config::AppConfig& cfg);
RunResult run_export_sft(const config::AppConfig& cfg);
RunResult run_export_rl(const config::AppConfig& cfg);
RunResult run_evaluate(const config::AppConfig& cfg);
RunResult run_vote(const config::AppConfig& cfg);
RunResult run_refine(const config::AppConfig& cfg);
RunResult run_stats(const config::AppConfig& cfg);

// Streaming reward scorer: one JSON object per input line ({"critique",
// "gold"}), one {"reward": 0|1} per output line. Malformed lines score 0.0
// and carry an "error" field. No files, no manifest.
RunResult run_reward(std::istream& in, std::ostream& out);

}  // namespace stepcritic::pipeline
