#pragma once

#include <string>
#include <vector>

#include "rtb/harness.hpp"
#include "rtb/manifest.hpp"

namespace rtb {

// Scenario assembly shared by the CLI and tests. `replay_phase` controls
// whether per-agent opponent models are loaded and attached.
sim::ScenarioConfig scenario_from_manifest(const io::Manifest& m, double cpm_train);
std::vector<std::shared_ptr<const agents::OpponentModel>> opponent_models_from_manifest(
    const io::Manifest& m, int b_max);

// Entry point behind the rtbsim binary. Exit codes: 0 success, 1 runtime
// error (one-line "error: ..." on stderr), 2 usage problems.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace rtb
