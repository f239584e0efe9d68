#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "timegate/chrono.hpp"
#include "timegate/error.hpp"
#include "timegate/triage.hpp"
#include "timegate/verspec.hpp"

namespace timegate::forge {

class SandboxError : public Error {
public:
    using Error::Error;
};

class NoSetupRecipe : public Error {
public:
    using Error::Error;
};

// One sandboxed command execution's outcome.
struct TestRun {
    int exit_status = -1;
    std::string log;
    double duration_seconds = 0;
    bool timed_out = false;
    Instant started_at{};
    bool log_truncated = false;
};

// Setup script exited nonzero (distinct from a timeout, which is reported in
// the returned TestRun instead).
class BuildFailed : public Error {
public:
    BuildFailed(const std::string& what, TestRun run): Error(what), run(std::move(run)) {}
    TestRun run;
};

// One migration task: a repo snapshot plus the instants and interpreters of
// its two environments.
struct TaskSpec {
    std::string task_id;
    std::filesystem::path repo_path;
    Instant committer_date{};
    Instant target_date{};
    std::optional<verspec::VersionId> old_interpreter;
    std::optional<verspec::VersionId> new_interpreter;
    std::string setup_script; // empty → generated
    std::string test_command; // empty → selected
    std::vector<std::string> test_files; // protected paths, relative to the repo root
};

void validate_task(const TaskSpec& task); // committer_date < target_date, repo readable

std::vector<TaskSpec> load_task_manifest(const std::filesystem::path& jsonl_path);

struct SandboxHandle {
    std::string id;
    std::filesystem::path root;     // runtime-private directory
    std::filesystem::path workdir;  // host side of the /work mount
    verspec::VersionId interpreter;
    std::string index_url;          // proxy URL carrying the environment's cutoff
};

// Container-engine abstraction. The bundled ProcessRuntime fakes isolation
// with a throwaway directory tree, interpreter shims and an install prefix,
// so the suite runs without any engine; real engines implement the same port.
class SandboxRuntimePort {
public:
    virtual ~SandboxRuntimePort() = default;
    virtual SandboxHandle create(const std::filesystem::path& source_tree,
                                 const verspec::VersionId& interpreter,
                                 const std::string& index_url) = 0;
    virtual TestRun exec(const SandboxHandle& h, const std::string& command,
                         double timeout_seconds, bool network_enabled) = 0;
    virtual void destroy(const SandboxHandle& h) = 0;
};

class ProcessRuntime : public SandboxRuntimePort {
public:
    explicit ProcessRuntime(std::size_t log_cap_bytes = 8 * 1024 * 1024);
    SandboxHandle create(const std::filesystem::path& source_tree,
                         const verspec::VersionId& interpreter,
                         const std::string& index_url) override;
    TestRun exec(const SandboxHandle& h, const std::string& command, double timeout_seconds,
                 bool network_enabled) override;
    void destroy(const SandboxHandle& h) override;

private:
    std::size_t log_cap_bytes_;
    bool unshare_available_;
};

// Destroys the sandbox when leaving scope.
class ScopedSandbox {
public:
    ScopedSandbox(SandboxRuntimePort& runtime, SandboxHandle handle)
        : runtime_(&runtime), handle_(std::move(handle)) {}
    ~ScopedSandbox() {
        try {
            runtime_->destroy(handle_);
        } catch (...) {
        }
    }
    ScopedSandbox(const ScopedSandbox&) = delete;
    ScopedSandbox& operator=(const ScopedSandbox&) = delete;
    const SandboxHandle& handle() const { return handle_; }

private:
    SandboxRuntimePort* runtime_;
    SandboxHandle handle_;
};

struct PrefilterResult {
    bool accepted = false;
    std::string reason; // "no-config" / "no-test-framework" when rejected
};

// Accepts repos that carry at least one of requirements.txt / pyproject.toml
// / setup.py and declare a test framework: an `import pytest` statement
// somewhere, or `unittest` and `TestCase` together in a single file.
PrefilterResult prefilter_repo(const std::filesystem::path& repo_root);

// `python -m pytest .` when any pytest import exists, else
// `python -m unittest discover`.
std::string select_test_command(const std::filesystem::path& repo_root);

// Workflow order pyproject → requirements → setup script; the requirements
// branch emits one `pip install -r <path>` per requirements file; scripts for
// pytest repos end by installing the framework. Throws NoSetupRecipe when no
// branch applies.
std::string generate_setup_script(const std::filesystem::path& repo_root,
                                  verspec::ExtractorPort& extractor);

struct ForgeConfig {
    std::string proxy_base_url;      // e.g. http://127.0.0.1:8750
    double setup_timeout_seconds = 600;
    double test_timeout_seconds = 600;
};

enum class Environment { Old, New };

// Builds the environment's index URL: proxy base + the per-request cutoff
// prefix for the environment's date.
std::string index_url_for(const ForgeConfig& config, Instant cutoff);

// Stages the repo (new environments get unpinned config files and all *.lock
// files removed) and creates the sandbox with the matching interpreter and
// index cutoff.
SandboxHandle prepare_env(const TaskSpec& task, Environment which, SandboxRuntimePort& runtime,
                          const ForgeConfig& config);

// Runs the setup script with network access. Returns the run on success or
// timeout; throws BuildFailed (carrying the run) on a plain nonzero exit.
TestRun run_setup(SandboxRuntimePort& runtime, const SandboxHandle& h, const std::string& script,
                  double timeout_seconds = 600);

// Runs the test command with network access disabled.
TestRun run_tests(SandboxRuntimePort& runtime, const SandboxHandle& h, const std::string& command,
                  double timeout_seconds = 600);

inline triage::Verdict triage_run(const TestRun& run) {
    return triage::triage_verdict(run.timed_out, run.log);
}

enum class StatusKind {
    PrefilterRejected,
    BuildFailedOld,
    BuildFailedNew,
    OldTestsFail,
    NewTestsPass,
    MigrationCandidate,
    TriageExcluded,
};

const char* to_string(StatusKind kind);

struct CandidateStatus {
    StatusKind kind = StatusKind::PrefilterRejected;
    std::string reason; // populated for rejections/exclusions
};

struct CandidateReport {
    CandidateStatus status;
    std::optional<TestRun> old_setup, old_tests, new_setup, new_tests;
};

// Orchestrates prepare/setup/test for both environments and triages the new
// environment's failure. MigrationCandidate iff the old tests exit 0 and the
// new tests fail with a user-code root cause.
CandidateReport extract_candidate(const TaskSpec& task, SandboxRuntimePort& runtime,
                                  const ForgeConfig& config);

// Fills unset TaskSpec fields: interpreters via detection/fallback, the setup
// script and test command via the deterministic generators.
void resolve_task(TaskSpec& task, verspec::ExtractorPort& extractor,
                  const verspec::ReleaseCalendar& calendar);

} // namespace timegate::forge
