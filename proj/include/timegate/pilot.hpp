#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "timegate/chat.hpp"
#include "timegate/error.hpp"
#include "timegate/forge.hpp"
#include "timegate/scoring.hpp"

namespace timegate::pilot {

class PathEscape : public Error {
public:
    explicit PathEscape(const std::string& path)
        : Error("path escapes the workspace: \"" + path + "\"") {}
};

// The workspace one trajectory operates on. Tool paths are virtual,
// rooted at /work; test files are protected from edits.
struct Workspace {
    std::filesystem::path host_root;
    std::set<std::string> test_files; // workspace-relative paths

    static constexpr const char* k_container_root = "/work";
};

// Maps a tool-call path ("/work/src/a.py" or "src/a.py") onto the host
// filesystem. Rejects traversal outside the workspace, including via
// symlinks. Throws PathEscape.
std::filesystem::path translate_path(const Workspace& workspace,
                                     const std::string& container_path);

struct ToolResult {
    bool ok = true;
    std::string body;
    std::string error_kind; // empty when ok
};

// Splits into lines the way the view/search tools count them: a trailing
// newline does not open an extra empty line.
std::vector<std::string> split_lines(const std::string& text);
std::vector<std::string> tail_lines(const std::string& text, std::size_t count);

// Hosts the ten agent tools over one workspace: path translation, the
// test-file guard, the reversible edit journal, and test-log storage.
class ToolHost {
public:
    using TestRunner = std::function<forge::TestRun()>;

    ToolHost(Workspace workspace, TestRunner runner);

    // Dispatch by wire name with a JSON-object argument payload. All
    // failures come back as error results; nothing model-triggered throws.
    ToolResult dispatch(const std::string& name, const std::string& arguments_json);

    ToolResult list_dir(const std::string& dir_path);
    ToolResult search_dir(const std::string& regex_pattern, const std::string& dir_path);
    ToolResult search_file(const std::string& regex_pattern, const std::string& file_path);
    ToolResult view_file(const std::string& file_path, std::int64_t line_no);
    ToolResult edit_file(const std::string& file_path, std::int64_t start_line,
                         std::int64_t end_line, const std::string& replacement_text);
    ToolResult replace_all_in_file(const std::string& file_path, const std::string& regex_pattern,
                                   const std::string& replacement_string);
    ToolResult revert_last();
    ToolResult execute_tests();
    ToolResult search_last_log(const std::string& regex_pattern);
    ToolResult view_last_log(std::int64_t line_no);

    // Runs the tests for the harness-seeded initial observation; stores the
    // log but does not count toward the agent's test executions.
    ToolResult seed_tests();

    const Workspace& workspace() const { return workspace_; }
    int tests_run() const { return tests_run_; }
    bool has_test_log() const { return has_test_log_; }
    const std::string& last_test_log() const { return last_test_log_; }
    bool last_test_passed() const { return last_test_passed_; }
    std::size_t journal_depth() const { return journal_.size(); }

    static std::vector<chat::ToolSchema> tool_schemas();

private:
    struct JournalEntry {
        std::string rel_path;
        std::string prior_content;
    };

    ToolResult run_tests_internal(bool count);
    bool is_protected(const std::filesystem::path& host_path) const;
    std::string rel_of(const std::filesystem::path& host_path) const;

    Workspace workspace_;
    TestRunner runner_;
    std::vector<JournalEntry> journal_;
    std::string last_test_log_;
    bool has_test_log_ = false;
    bool last_test_passed_ = false;
    int tests_run_ = 0;
};

struct Turn {
    int index = 0; // 1-based
    std::string reasoning;
    std::optional<chat::ToolCall> tool_call;
    std::string observation;
    bool is_test_turn = false;
    bool collapsed = false;
};

struct Trajectory {
    std::vector<Turn> turns;
    std::optional<int> last_test_turn; // Turn::index of the latest execute_tests
    std::string initial_observation;   // harness-seeded pre-run test output
    std::int64_t llm_calls = 0;
    std::int64_t test_execs = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

inline constexpr const char* k_collapsed_placeholder = "[observation collapsed]";
inline constexpr const char* k_corrective_observation =
    "You must use one of the available tools. Please try again.";

// History management: turns before the most recent test run are dropped
// entirely; among survivors, observations older than the last five turns
// collapse to a placeholder while reasoning is kept. Pure and idempotent.
std::vector<Turn> compacted_turns(const Trajectory& trajectory);
std::vector<chat::Message> compact_history(const Trajectory& trajectory,
                                           const std::string& system_prompt,
                                           const std::string& standing_context);

struct TrajectoryOptions {
    int llm_budget = 100;  // n
    int test_budget = 10;  // m
    std::string system_prompt;     // empty → built-in operator prompt
    std::string standing_context;  // target interpreter / library versions
    std::string transcript_path;   // optional JSONL, one turn per line
};

struct TrajectoryOutcome {
    scoring::RunRecord record;
    Trajectory trajectory;
    std::string diagnostic; // set when the sandbox died mid-run
};

// The ReAct loop: seed with an initial test observation, then alternate
// chat completion and guard-checked tool dispatch until the tests pass or
// a budget is exhausted. Emits the cumulative workspace diff as the
// record's final patch.
TrajectoryOutcome run_trajectory(const std::string& task_id, ToolHost& host,
                                 chat::ChatPort& chat_port, const TrajectoryOptions& options);

// Text-file snapshot used for the cumulative final patch.
std::map<std::string, std::string> snapshot_workspace(const std::filesystem::path& root);
std::string cumulative_patch(const std::map<std::string, std::string>& before,
                             const std::map<std::string, std::string>& after);

} // namespace timegate::pilot
