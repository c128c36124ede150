#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace mvr {

/// Default output directory: $REARRANGE_OUT_DIR, else "out".
std::filesystem::path default_out_dir();

/// Subcommands: gen, build-db, localize, rearrange, bench-pose,
/// bench-completion. Returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace mvr
