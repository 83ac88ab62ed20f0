#pragma once

namespace ssda::cli {

/// Entry point of the `ssda` command-line tool.
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
int run(int argc, const char* const* argv);

}  // namespace ssda::cli
