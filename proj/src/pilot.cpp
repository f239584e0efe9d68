#include "timegate/pilot.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "timegate/diff.hpp"
#include "timegate/embedded_data.hpp"
#include "timegate/fsutil.hpp"

namespace timegate::pilot {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        std::string line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        pos = nl + 1;
    }
    return lines;
}

std::vector<std::string> tail_lines(const std::string& text, std::size_t count) {
    std::vector<std::string> lines = split_lines(text);
    if (lines.size() <= count) return lines;
    return std::vector<std::string>(lines.end() - static_cast<std::ptrdiff_t>(count),
                                    lines.end());
}

namespace {

bool is_path_prefix(const fs::path& prefix, const fs::path& target) {
    auto pit = prefix.begin();
    auto tit = target.begin();
    for (; pit != prefix.end(); ++pit, ++tit) {
        if (tit == target.end() || *pit != *tit) return false;
    }
    return true;
}

std::string numbered(const std::vector<std::string>& lines, std::size_t first_line_no,
                     std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        out += std::to_string(first_line_no + (i - begin)) + ": " + lines[i];
        if (i + 1 < end) out += '\n';
    }
    return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size()) out += '\n';
    }
    return out;
}

ToolResult tool_error(const std::string& kind, const std::string& message) {
    return ToolResult{false, message, kind};
}

} // namespace

std::filesystem::path translate_path(const Workspace& workspace,
                                     const std::string& container_path) {
    std::string path = container_path;
    const std::string root = Workspace::k_container_root;
    if (path.rfind(root, 0) == 0 && (path.size() == root.size() || path[root.size()] == '/')) {
        path = path.substr(root.size());
        while (!path.empty() && path.front() == '/') path.erase(path.begin());
    } else if (!path.empty() && path.front() == '/') {
        throw PathEscape(container_path); // absolute path outside /work
    }
    fs::path rel = fs::path(path).lexically_normal();
    if (rel.is_absolute() || (!rel.empty() && rel.begin()->string() == ".."))
        throw PathEscape(container_path);
    fs::path host = workspace.host_root / rel;

    // A symlink inside the tree may still point outside; resolve what
    // exists and require the result to stay under the workspace root.
    std::error_code ec;
    fs::path root_canon = fs::weakly_canonical(workspace.host_root, ec);
    if (ec) root_canon = workspace.host_root;
    fs::path host_canon = fs::weakly_canonical(host, ec);
    if (ec) host_canon = host;
    if (!is_path_prefix(root_canon, host_canon)) throw PathEscape(container_path);
    return host;
}

ToolHost::ToolHost(Workspace workspace, TestRunner runner)
    : workspace_(std::move(workspace)), runner_(std::move(runner)) {}

bool ToolHost::is_protected(const fs::path& host_path) const {
    std::error_code ec;
    fs::path target = fs::weakly_canonical(host_path, ec);
    if (ec) target = host_path;
    for (const std::string& test_file : workspace_.test_files) {
        fs::path guard = fs::weakly_canonical(workspace_.host_root / test_file, ec);
        if (ec) guard = workspace_.host_root / test_file;
        if (guard == target) return true;
    }
    return false;
}

std::string ToolHost::rel_of(const fs::path& host_path) const {
    std::error_code ec;
    fs::path rel = fs::relative(host_path, workspace_.host_root, ec);
    if (ec) return host_path.generic_string();
    return rel.generic_string();
}

ToolResult ToolHost::list_dir(const std::string& dir_path) {
    fs::path host;
    try {
        host = translate_path(workspace_, dir_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (!fs::is_directory(host))
        return tool_error("NotADirectory", "not a directory: " + dir_path);
    std::vector<std::string> names;
    for (const fs::directory_entry& entry : fs::directory_iterator(host)) {
        std::string name = entry.path().filename().string();
        if (entry.is_directory()) name += "/";
        names.push_back(std::move(name));
    }
    std::sort(names.begin(), names.end());
    return ToolResult{true, join_lines(names), ""};
}

ToolResult ToolHost::search_dir(const std::string& regex_pattern, const std::string& dir_path) {
    fs::path host;
    try {
        host = translate_path(workspace_, dir_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (!fs::is_directory(host))
        return tool_error("NotADirectory", "not a directory: " + dir_path);
    std::regex re;
    try {
        re = std::regex(regex_pattern);
    } catch (const std::regex_error& e) {
        return tool_error("RegexError", std::string("invalid regular expression: ") + e.what());
    }
    std::vector<std::string> hits;
    for (const fs::directory_entry& entry : fs::recursive_directory_iterator(host)) {
        if (!entry.is_regular_file()) continue;
        if (fsutil::looks_binary(entry.path())) continue;
        std::string content;
        try {
            content = fsutil::read_text_file(entry.path());
        } catch (const Error&) {
            continue;
        }
        bool matched = false;
        for (const std::string& line : split_lines(content)) {
            if (std::regex_search(line, re)) {
                matched = true;
                break;
            }
        }
        if (matched) hits.push_back(rel_of(entry.path()));
    }
    std::sort(hits.begin(), hits.end());
    return ToolResult{true, join_lines(hits), ""};
}

ToolResult ToolHost::search_file(const std::string& regex_pattern, const std::string& file_path) {
    fs::path host;
    try {
        host = translate_path(workspace_, file_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (!fs::is_regular_file(host))
        return tool_error("FileNotFound", "no such file: " + file_path);
    std::regex re;
    try {
        re = std::regex(regex_pattern);
    } catch (const std::regex_error& e) {
        return tool_error("RegexError", std::string("invalid regular expression: ") + e.what());
    }
    std::vector<std::string> lines = split_lines(fsutil::read_text_file(host));
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!std::regex_search(lines[i], re)) continue;
        if (!out.empty()) out += '\n';
        out += std::to_string(i + 1) + ": " + lines[i];
    }
    return ToolResult{true, out, ""};
}

namespace {

// Shared by view_file and view_last_log: the 50-before/50-after window.
ToolResult view_window(const std::vector<std::string>& lines, std::int64_t line_no,
                       const std::string& what) {
    if (line_no < 1) return tool_error("RangeError", "line_no must be at least 1");
    if (lines.empty()) return ToolResult{true, "(" + what + " is empty)", ""};
    std::string note;
    std::int64_t eof = static_cast<std::int64_t>(lines.size());
    if (line_no > eof) {
        note = "note: line " + std::to_string(line_no) + " is past the end (" +
               std::to_string(eof) + " lines); showing the final window\n";
        line_no = eof;
    }
    std::size_t first = static_cast<std::size_t>(std::max<std::int64_t>(1, line_no - 50));
    std::size_t last = static_cast<std::size_t>(std::min<std::int64_t>(eof, line_no + 50));
    return ToolResult{true, note + numbered(lines, first, first - 1, last), ""};
}

} // namespace

ToolResult ToolHost::view_file(const std::string& file_path, std::int64_t line_no) {
    fs::path host;
    try {
        host = translate_path(workspace_, file_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (!fs::is_regular_file(host))
        return tool_error("FileNotFound", "no such file: " + file_path);
    return view_window(split_lines(fsutil::read_text_file(host)), line_no, "file");
}

ToolResult ToolHost::edit_file(const std::string& file_path, std::int64_t start_line,
                               std::int64_t end_line, const std::string& replacement_text) {
    fs::path host;
    try {
        host = translate_path(workspace_, file_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (is_protected(host))
        return tool_error("GuardViolation",
                          "editing test files is not allowed: " + file_path);
    if (!fs::is_regular_file(host))
        return tool_error("FileNotFound", "no such file: " + file_path);
    std::string content = fsutil::read_text_file(host);
    std::vector<std::string> lines = split_lines(content);
    std::int64_t eof = static_cast<std::int64_t>(lines.size());
    if (start_line < 1 || end_line < start_line || end_line > eof)
        return tool_error("RangeError", "invalid line range " + std::to_string(start_line) +
                                            "-" + std::to_string(end_line) + " for a " +
                                            std::to_string(eof) + "-line file");

    std::vector<std::string> replacement = split_lines(replacement_text);
    std::vector<std::string> updated(lines.begin(), lines.begin() + (start_line - 1));
    updated.insert(updated.end(), replacement.begin(), replacement.end());
    updated.insert(updated.end(), lines.begin() + end_line, lines.end());

    bool had_trailing_newline = !content.empty() && content.back() == '\n';
    std::string new_content = join_lines(updated);
    if (!new_content.empty() && had_trailing_newline) new_content += '\n';

    journal_.push_back({rel_of(host), content});
    fsutil::write_text_file(host, new_content);

    std::int64_t new_eof = static_cast<std::int64_t>(updated.size());
    std::int64_t show_first = std::max<std::int64_t>(1, start_line - 3);
    std::int64_t show_last = std::min<std::int64_t>(
        new_eof, start_line + static_cast<std::int64_t>(replacement.size()) - 1 + 3);
    std::string body = "updated " + rel_of(host) + " (replaced lines " +
                       std::to_string(start_line) + "-" + std::to_string(end_line) + " with " +
                       std::to_string(replacement.size()) + " lines)";
    if (show_first <= show_last) {
        body += '\n';
        body += numbered(updated, static_cast<std::size_t>(show_first),
                         static_cast<std::size_t>(show_first - 1),
                         static_cast<std::size_t>(show_last));
    }
    return ToolResult{true, body, ""};
}

ToolResult ToolHost::replace_all_in_file(const std::string& file_path,
                                         const std::string& regex_pattern,
                                         const std::string& replacement_string) {
    fs::path host;
    try {
        host = translate_path(workspace_, file_path);
    } catch (const PathEscape& e) {
        return tool_error("PathEscape", e.what());
    }
    if (is_protected(host))
        return tool_error("GuardViolation",
                          "editing test files is not allowed: " + file_path);
    if (!fs::is_regular_file(host))
        return tool_error("FileNotFound", "no such file: " + file_path);
    std::regex re;
    try {
        re = std::regex(regex_pattern);
    } catch (const std::regex_error& e) {
        return tool_error("RegexError", std::string("invalid regular expression: ") + e.what());
    }
    std::string content = fsutil::read_text_file(host);
    std::ptrdiff_t count =
        std::distance(std::sregex_iterator(content.begin(), content.end(), re),
                      std::sregex_iterator());
    if (count == 0) return ToolResult{true, "0 occurrences replaced", ""};
    journal_.push_back({rel_of(host), content});
    fsutil::write_text_file(host, std::regex_replace(content, re, replacement_string));
    return ToolResult{true, std::to_string(count) + " occurrences replaced in " + rel_of(host),
                      ""};
}

ToolResult ToolHost::revert_last() {
    if (journal_.empty()) return tool_error("NothingToRevert", "no edits to revert");
    JournalEntry entry = std::move(journal_.back());
    journal_.pop_back();
    fsutil::write_text_file(workspace_.host_root / entry.rel_path, entry.prior_content);
    return ToolResult{true, "reverted last edit to " + entry.rel_path, ""};
}

ToolResult ToolHost::run_tests_internal(bool count) {
    forge::TestRun run;
    try {
        run = runner_();
    } catch (const std::exception& e) {
        return tool_error("SandboxError", std::string("test execution failed: ") + e.what());
    }
    last_test_log_ = run.log;
    has_test_log_ = true;
    last_test_passed_ = run.exit_status == 0 && !run.timed_out;
    if (count) ++tests_run_;
    std::string body = join_lines(tail_lines(run.log, 100));
    if (!body.empty()) body += '\n';
    body += "exit status: " + std::to_string(run.exit_status);
    if (run.timed_out) body += " (timed out)";
    return ToolResult{true, body, ""};
}

ToolResult ToolHost::execute_tests() { return run_tests_internal(true); }

ToolResult ToolHost::seed_tests() { return run_tests_internal(false); }

ToolResult ToolHost::search_last_log(const std::string& regex_pattern) {
    if (!has_test_log_) return tool_error("NoLogAvailable", "no test has been executed yet");
    std::regex re;
    try {
        re = std::regex(regex_pattern);
    } catch (const std::regex_error& e) {
        return tool_error("RegexError", std::string("invalid regular expression: ") + e.what());
    }
    std::vector<std::string> lines = split_lines(last_test_log_);
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!std::regex_search(lines[i], re)) continue;
        if (!out.empty()) out += '\n';
        out += std::to_string(i + 1) + ": " + lines[i];
    }
    return ToolResult{true, out, ""};
}

ToolResult ToolHost::view_last_log(std::int64_t line_no) {
    if (!has_test_log_) return tool_error("NoLogAvailable", "no test has been executed yet");
    return view_window(split_lines(last_test_log_), line_no, "log");
}

namespace {

struct ArgReader {
    const json& args;
    std::string error;

    std::string get_string(const char* key, bool required, const std::string& fallback = "") {
        if (!args.contains(key) || args[key].is_null()) {
            if (required) error = std::string("missing required argument \"") + key + "\"";
            return fallback;
        }
        if (!args[key].is_string()) {
            error = std::string("argument \"") + key + "\" must be a string";
            return fallback;
        }
        return args[key].get<std::string>();
    }

    std::int64_t get_int(const char* key) {
        if (!args.contains(key) || args[key].is_null()) {
            error = std::string("missing required argument \"") + key + "\"";
            return 0;
        }
        const json& v = args[key];
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_string()) {
            try {
                return std::stoll(v.get<std::string>());
            } catch (const std::exception&) {
            }
        }
        error = std::string("argument \"") + key + "\" must be an integer";
        return 0;
    }
};

} // namespace

ToolResult ToolHost::dispatch(const std::string& name, const std::string& arguments_json) {
    json args;
    try {
        args = arguments_json.empty() ? json::object() : json::parse(arguments_json);
        if (!args.is_object()) throw json::other_error::create(501, "not an object", nullptr);
    } catch (const json::exception&) {
        return tool_error("BadArguments", "tool arguments must be a JSON object");
    }
    ArgReader reader{args, {}};
    try {
        if (name == "list_dir") {
            std::string dir = reader.get_string("dir_path", false, Workspace::k_container_root);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return list_dir(dir);
        }
        if (name == "search_dir") {
            std::string pattern = reader.get_string("regex_pattern", true);
            std::string dir = reader.get_string("dir_path", false, Workspace::k_container_root);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return search_dir(pattern, dir);
        }
        if (name == "search_file") {
            std::string pattern = reader.get_string("regex_pattern", true);
            std::string file = reader.get_string("file_path", true);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return search_file(pattern, file);
        }
        if (name == "view_file") {
            std::string file = reader.get_string("file_path", true);
            std::int64_t line_no = reader.get_int("line_no");
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return view_file(file, line_no);
        }
        if (name == "edit_file") {
            std::string file = reader.get_string("file_path", true);
            std::int64_t start = reader.get_int("start_line");
            std::int64_t end = reader.get_int("end_line");
            std::string text = reader.get_string("replacement_text", true);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return edit_file(file, start, end, text);
        }
        if (name == "replace_all_in_file") {
            std::string file = reader.get_string("file_path", true);
            std::string pattern = reader.get_string("regex_pattern", true);
            std::string replacement = reader.get_string("replacement_string", true);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return replace_all_in_file(file, pattern, replacement);
        }
        if (name == "revert_last") return revert_last();
        if (name == "execute_tests") return execute_tests();
        if (name == "search_last_log") {
            std::string pattern = reader.get_string("regex_pattern", true);
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return search_last_log(pattern);
        }
        if (name == "view_last_log") {
            std::int64_t line_no = reader.get_int("line_no");
            if (!reader.error.empty()) return tool_error("BadArguments", reader.error);
            return view_last_log(line_no);
        }
    } catch (const std::exception& e) {
        return tool_error("ToolError", e.what());
    }
    return tool_error("UnknownTool", "no such tool: \"" + name + "\"");
}

std::vector<chat::ToolSchema> ToolHost::tool_schemas() {
    auto schema = [](std::initializer_list<std::pair<const char*, const char*>> props,
                     std::initializer_list<const char*> required) {
        json parameters;
        parameters["type"] = "object";
        parameters["properties"] = json::object();
        for (const auto& [key, type] : props)
            parameters["properties"][key] = json{{"type", type}};
        parameters["required"] = json::array();
        for (const char* key : required) parameters["required"].push_back(key);
        return parameters.dump();
    };
    return {
        {"list_dir",
         "List the name of files and subdirectories under the specified directory (default to "
         "/work).",
         schema({{"dir_path", "string"}}, {})},
        {"search_dir",
         "Search for the given regular expression in all files under dir_path and return the "
         "name of matching files. If dir_path is not specified, perform search under the /work "
         "directory.",
         schema({{"regex_pattern", "string"}, {"dir_path", "string"}}, {"regex_pattern"})},
        {"search_file",
         "Search for the given regular expression in the file at file_path and return the "
         "content of matching lines.",
         schema({{"regex_pattern", "string"}, {"file_path", "string"}},
                {"regex_pattern", "file_path"})},
        {"view_file",
         "Open the content at file_path and return the content. Show 50 lines before and after "
         "the specified line number.",
         schema({{"file_path", "string"}, {"line_no", "integer"}}, {"file_path", "line_no"})},
        {"edit_file",
         "Make edits to the file at file_path by replacing the lines from start_line to "
         "end_line (inclusive) with replacement_text. Returns the updated parts of the file "
         "after editing.",
         schema({{"file_path", "string"},
                 {"start_line", "integer"},
                 {"end_line", "integer"},
                 {"replacement_text", "string"}},
                {"file_path", "start_line", "end_line", "replacement_text"})},
        {"replace_all_in_file",
         "Finds all occurrences of a regular expression pattern in the file at file_path and "
         "replaces them with replacement_string.",
         schema({{"file_path", "string"},
                 {"regex_pattern", "string"},
                 {"replacement_string", "string"}},
                {"file_path", "regex_pattern", "replacement_string"})},
        {"revert_last", "Revert the last edit and return the updated parts of the affected files.",
         schema({}, {})},
        {"execute_tests",
         "Execute the tests and get the test log. Returns last 100 lines of the log and the "
         "exit status of the container.",
         schema({}, {})},
        {"search_last_log",
         "Query the log of the last test execution for the given regular expression and return "
         "matching lines.",
         schema({{"regex_pattern", "string"}}, {"regex_pattern"})},
        {"view_last_log",
         "Open the log of the last test execution and return the content. Show 50 lines before "
         "and after the specified line number.",
         schema({{"line_no", "integer"}}, {"line_no"})},
    };
}

std::vector<Turn> compacted_turns(const Trajectory& trajectory) {
    std::vector<Turn> out;
    int last_index = trajectory.turns.empty() ? 0 : trajectory.turns.back().index;
    int drop_below = trajectory.last_test_turn.value_or(0);
    int full_from = last_index - 4; // the most recent five turns keep observations
    for (const Turn& turn : trajectory.turns) {
        if (turn.index < drop_below) continue;
        Turn copy = turn;
        if (copy.index < full_from) {
            copy.collapsed = true;
            copy.observation = k_collapsed_placeholder;
        }
        out.push_back(std::move(copy));
    }
    return out;
}

std::vector<chat::Message> compact_history(const Trajectory& trajectory,
                                           const std::string& system_prompt,
                                           const std::string& standing_context) {
    std::vector<chat::Message> messages;
    std::string system = system_prompt;
    if (!standing_context.empty()) system += "\n\n" + standing_context;
    messages.push_back({chat::Role::System, system, std::nullopt});

    int last_index = trajectory.turns.empty() ? 0 : trajectory.turns.back().index;
    bool drop_initial = trajectory.last_test_turn.has_value();
    if (!drop_initial && !trajectory.initial_observation.empty()) {
        bool collapse_initial = last_index >= 5; // index 0 vs the five-turn rule
        messages.push_back({chat::Role::User,
                            collapse_initial ? std::string(k_collapsed_placeholder)
                                             : trajectory.initial_observation,
                            std::nullopt});
    }
    for (const Turn& turn : compacted_turns(trajectory)) {
        messages.push_back({chat::Role::Assistant, turn.reasoning, turn.tool_call});
        chat::Role observation_role = turn.tool_call ? chat::Role::Tool : chat::Role::User;
        messages.push_back({observation_role, turn.observation, std::nullopt});
    }
    return messages;
}

std::map<std::string, std::string> snapshot_workspace(const std::filesystem::path& root) {
    std::map<std::string, std::string> snapshot;
    if (!fs::is_directory(root)) return snapshot;
    for (const fs::directory_entry& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::error_code ec;
        if (entry.file_size(ec) > 2 * 1024 * 1024 || ec) continue;
        if (fsutil::looks_binary(entry.path())) continue;
        std::string content;
        try {
            content = fsutil::read_text_file(entry.path());
        } catch (const Error&) {
            continue;
        }
        snapshot[fs::relative(entry.path(), root).generic_string()] = std::move(content);
    }
    return snapshot;
}

std::string cumulative_patch(const std::map<std::string, std::string>& before,
                             const std::map<std::string, std::string>& after) {
    std::set<std::string> paths;
    for (const auto& [path, content] : before) paths.insert(path);
    for (const auto& [path, content] : after) paths.insert(path);
    std::string patch;
    for (const std::string& path : paths) {
        auto old_it = before.find(path);
        auto new_it = after.find(path);
        const std::string& old_text = old_it == before.end() ? std::string{} : old_it->second;
        const std::string& new_text = new_it == after.end() ? std::string{} : new_it->second;
        if (old_text == new_text) continue;
        patch += diff::generate_unified_diff(old_text, new_text, path);
    }
    return patch;
}

namespace {

void append_transcript(std::ofstream& out, const Turn& turn) {
    if (!out.is_open()) return;
    json j;
    j["schema_version"] = 1;
    j["index"] = turn.index;
    j["reasoning"] = turn.reasoning;
    if (turn.tool_call) {
        j["tool"] = turn.tool_call->name;
        try {
            j["arguments"] = json::parse(turn.tool_call->arguments_json);
        } catch (const json::exception&) {
            j["arguments"] = turn.tool_call->arguments_json;
        }
    } else {
        j["tool"] = nullptr;
    }
    j["observation"] = turn.observation;
    j["is_test_turn"] = turn.is_test_turn;
    out << j.dump() << '\n';
    out.flush();
}

} // namespace

TrajectoryOutcome run_trajectory(const std::string& task_id, ToolHost& host,
                                 chat::ChatPort& chat_port, const TrajectoryOptions& options) {
    TrajectoryOutcome outcome;
    Trajectory& trajectory = outcome.trajectory;

    std::map<std::string, std::string> before = snapshot_workspace(host.workspace().host_root);
    std::string system_prompt = options.system_prompt.empty()
                                    ? std::string(data::default_agent_system_prompt)
                                    : options.system_prompt;

    std::ofstream transcript;
    if (!options.transcript_path.empty()) {
        fs::path p(options.transcript_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        transcript.open(options.transcript_path, std::ios::app | std::ios::binary);
    }

    ToolResult seed = host.seed_tests();
    if (!seed.ok && seed.error_kind == "SandboxError") {
        outcome.diagnostic = seed.body;
        outcome.record.task_id = task_id;
        outcome.record.final_patch = "";
        return outcome;
    }
    trajectory.initial_observation =
        seed.ok ? seed.body : "error (" + seed.error_kind + "): " + seed.body;

    std::vector<chat::ToolSchema> schemas = ToolHost::tool_schemas();
    bool success = false;

    while (true) {
        if (trajectory.llm_calls >= options.llm_budget) break;
        std::vector<chat::Message> messages =
            compact_history(trajectory, system_prompt, options.standing_context);
        chat::ChatReply reply;
        try {
            reply = chat_port.complete(messages, schemas);
        } catch (const std::exception& e) {
            outcome.diagnostic = std::string("chat backend failed: ") + e.what();
            break;
        }
        ++trajectory.llm_calls;
        trajectory.tokens_in += reply.usage.tokens_in;
        trajectory.tokens_out += reply.usage.tokens_out;

        Turn turn;
        turn.index = static_cast<int>(trajectory.turns.size()) + 1;
        turn.reasoning = reply.reasoning;
        turn.tool_call = reply.tool_call;

        if (!reply.tool_call) {
            turn.observation = k_corrective_observation;
            trajectory.turns.push_back(turn);
            append_transcript(transcript, turn);
            continue;
        }

        if (reply.tool_call->name == "execute_tests" &&
            trajectory.test_execs >= options.test_budget) {
            turn.observation = "error (BudgetExhausted): test execution budget exhausted";
            trajectory.turns.push_back(turn);
            append_transcript(transcript, turn);
            break;
        }

        ToolResult result = host.dispatch(reply.tool_call->name, reply.tool_call->arguments_json);
        turn.observation =
            result.ok ? result.body : "error (" + result.error_kind + "): " + result.body;
        if (reply.tool_call->name == "execute_tests" && result.ok) {
            turn.is_test_turn = true;
            trajectory.test_execs = host.tests_run();
            trajectory.last_test_turn = turn.index;
        }
        trajectory.turns.push_back(turn);
        append_transcript(transcript, turn);

        if (!result.ok && result.error_kind == "SandboxError") {
            outcome.diagnostic = result.body;
            break;
        }
        if (turn.is_test_turn && host.last_test_passed()) {
            success = true;
            break;
        }
        if (trajectory.test_execs >= options.test_budget) break;
    }

    std::map<std::string, std::string> after = snapshot_workspace(host.workspace().host_root);
    outcome.record.task_id = task_id;
    outcome.record.result = success ? scoring::RunResult::Success : scoring::RunResult::Failure;
    outcome.record.llm_calls = trajectory.llm_calls;
    outcome.record.test_execs = trajectory.test_execs;
    outcome.record.tokens_in = trajectory.tokens_in;
    outcome.record.tokens_out = trajectory.tokens_out;
    outcome.record.final_patch = cumulative_patch(before, after);
    return outcome;
}

} // namespace timegate::pilot
