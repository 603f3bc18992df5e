#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "config.hpp"

namespace tta::runner {

// Executes every (mode, batch size, replicate) run from the config, writing
// one metrics CSV and one trace CSV per run plus a manifest.json and the
// per-layer source statistics snapshots. Partial outputs are removed when a
// run fails.
void run_simulation(const config::RunConfig& cfg,
                    const std::optional<std::string>& out_dir_override = {},
                    const std::optional<std::uint64_t>& seed_override = {});

// Aggregates a completed run directory into a mode x batch-size error
// matrix (seed mean per cell, plus the Avg. column).
std::string build_report(const std::string& run_dir);

}  // namespace tta::runner
