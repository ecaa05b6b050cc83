#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spoc/algorithm.hpp"
#include "spoc/fem.hpp"

namespace spoc {

/// Revision the library was built from ("unknown" outside a git checkout).
std::string git_revision();

/// Writes cost_trace.csv, sgd_trace.csv, filter_trace.csv, control_final.csv,
/// state_snapshots.csv, config.json and manifest.json into `dir` (created if
/// missing). CSV floats use 17 significant digits so files diff bit-exactly.
/// Returns the paths written.
std::vector<std::filesystem::path> write_artifacts(const RunReport& report, const FemOperators& ops,
                                                   const std::filesystem::path& dir);

/// Formats a double the way every CSV column does.
std::string format_real(double v);

}  // namespace spoc
