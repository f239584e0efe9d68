#pragma once

namespace timegate::cli {

// Exit codes: 0 success, 1 operational error, 2 usage error.
int run_cli(int argc, const char* const* argv);

} // namespace timegate::cli
