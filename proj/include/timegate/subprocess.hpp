#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "timegate/error.hpp"

namespace timegate {

class SubprocessError : public Error {
public:
    using Error::Error;
};

struct CommandSpec {
    std::vector<std::string> argv;           // execvp form; empty → error
    std::string cwd;                         // empty → inherit
    std::map<std::string, std::string> env;  // overrides on top of the parent env
    std::vector<std::string> unset_env;      // names removed from the parent env
    double timeout_seconds = 0;              // 0 → no timeout
    std::size_t output_cap_bytes = 8 * 1024 * 1024; // tail-preserved
};

struct CommandResult {
    int exit_status = -1;      // -signal when signal-terminated
    std::string output;        // stdout and stderr interleaved
    bool output_truncated = false;
    double duration_seconds = 0;
    bool timed_out = false;
};

// Runs the command in its own process group, merging stdout/stderr into one
// stream. On timeout the whole group is killed and `timed_out` is set; output
// beyond the cap keeps the tail and drops the head.
CommandResult run_command(const CommandSpec& spec);

// Convenience: run `script` via /bin/sh -c.
CommandResult run_shell(const std::string& script, const CommandSpec& base);

} // namespace timegate
