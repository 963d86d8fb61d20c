#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pipeline_config.hpp"

namespace sapa::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kMissingArtifact = 3,
  kNumericError = 4,
};

// Each command reads its inputs from and writes its artifacts into
// cfg.out_dir. Errors are thrown; run() maps them to exit codes.
void cmd_synth(const PipelineConfig& cfg, std::ostream& log);
void cmd_graph(const PipelineConfig& cfg, std::ostream& log);
void cmd_anchors(const PipelineConfig& cfg, std::ostream& log);
void cmd_train(const PipelineConfig& cfg, std::ostream& log);
void cmd_eval(const PipelineConfig& cfg, std::ostream& log);
void cmd_ablate(const PipelineConfig& cfg, std::ostream& log);
void cmd_transfer(const PipelineConfig& cfg, std::ostream& log);
void cmd_all(const PipelineConfig& cfg, std::ostream& log);

// Full command line, argv[0] excluded.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sapa::cli
