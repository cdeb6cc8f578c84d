#pragma once

namespace skl {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
int run_cli(int argc, const char* const* argv);

}  // namespace skl
