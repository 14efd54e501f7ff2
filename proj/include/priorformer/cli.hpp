#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "priorformer/config.hpp"
#include "priorformer/dataio.hpp"
#include "priorformer/train.hpp"

namespace priorformer::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kConfig = 3,
  kFormat = 4,
  kNumeric = 5,
  kGradCheckFailed = 6,
  kContract = 7,
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// key = value lines; '#' starts a comment. Unknown keys, repeated keys and
// unparsable values raise ConfigError naming the line.
RunConfig parse_run_config(std::string_view text, const std::string& what = "config");
SynthSpec parse_synth_spec(std::string_view text, const std::string& what = "spec");

// Entry point of the `priorformer` tool. Never throws; errors are reported on
// `err` and mapped to an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace priorformer::cli
