#include "timegate/forge.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <regex>

#include <json.hpp>

#include "timegate/fsutil.hpp"
#include "timegate/subprocess.hpp"

namespace timegate::forge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxScanBytes = 2 * 1024 * 1024;

bool should_skip_dir(const fs::path& p) {
    std::string name = p.filename().string();
    return name == ".git" || name == "__pycache__" || name == ".tox" || name == ".venv";
}

// Calls `visit` with (path, text) for every readable text file in the tree.
// Stops early when visit returns true.
void scan_text_files(const fs::path& root,
                     const std::function<bool(const fs::path&, const std::string&)>& visit) {
    if (!fs::exists(root)) return;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied);
    for (auto end = fs::recursive_directory_iterator(); it != end; ++it) {
        if (it->is_directory()) {
            if (should_skip_dir(it->path())) it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) continue;
        std::error_code ec;
        auto size = fs::file_size(it->path(), ec);
        if (ec || size > kMaxScanBytes) continue;
        if (looks_binary(it->path())) continue;
        std::string text;
        try {
            text = read_text_file(it->path());
        } catch (const Error&) {
            continue;
        }
        if (visit(it->path(), text)) return;
    }
}

bool has_pytest_import(const fs::path& root) {
    static const std::regex import_re(
        R"((^|\n)\s*(import\s+pytest\b|from\s+pytest(\.[A-Za-z0-9_.]+)?\s+import\b))");
    bool found = false;
    scan_text_files(root, [&](const fs::path& p, const std::string& text) {
        if (p.extension() != ".py") return false;
        if (std::regex_search(text, import_re)) {
            found = true;
            return true;
        }
        return false;
    });
    return found;
}

bool has_single_file_unittest(const fs::path& root) {
    bool found = false;
    scan_text_files(root, [&](const fs::path& p, const std::string& text) {
        if (p.extension() != ".py") return false;
        if (text.find("unittest") != std::string::npos &&
            text.find("TestCase") != std::string::npos) {
            found = true;
            return true;
        }
        return false;
    });
    return found;
}

bool has_config_file(const fs::path& root) {
    bool found = false;
    scan_text_files(root, [&](const fs::path& p, const std::string&) {
        std::string name = p.filename().string();
        if (name == "requirements.txt" || name == "pyproject.toml" || name == "setup.py") {
            found = true;
            return true;
        }
        return false;
    });
    return found;
}

bool is_requirements_file(const fs::path& p) {
    std::string name = p.filename().string();
    return name.rfind("requirements", 0) == 0 && p.extension() == ".txt";
}

std::vector<fs::path> find_requirements_files(const fs::path& root) {
    std::vector<fs::path> out;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied);
    for (auto end = fs::recursive_directory_iterator(); it != end; ++it) {
        if (it->is_directory()) {
            if (should_skip_dir(it->path())) it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file() && is_requirements_file(it->path()))
            out.push_back(fs::relative(it->path(), root));
    }
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
        // Root-level files first, then lexicographic.
        auto depth = [](const fs::path& p) { return std::distance(p.begin(), p.end()); };
        if (depth(a) != depth(b)) return depth(a) < depth(b);
        return a.generic_string() < b.generic_string();
    });
    return out;
}

// The interpreter the shims delegate to, resolved against the parent PATH.
// Resolution must happen here, outside the sandbox: inside it the shim
// directory shadows python3, and an env-based lookup would loop forever.
std::string find_host_python3() {
    const char* path_env = std::getenv("PATH");
    std::string path = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
    std::size_t begin = 0;
    while (begin <= path.size()) {
        std::size_t end = path.find(':', begin);
        std::string dir =
            path.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
        if (!dir.empty()) {
            fs::path candidate = fs::path(dir) / "python3";
            std::error_code ec;
            if (fs::is_regular_file(candidate, ec) && ::access(candidate.c_str(), X_OK) == 0)
                return candidate.string();
        }
        if (end == std::string::npos) break;
        begin = end + 1;
    }
    throw SandboxError("no python3 executable on the host PATH");
}

bool requirements_text_mentions_pytest(const std::string& text) {
    // True when some requirement line names the pytest project itself
    // (pytest, pytest==7, pytest[extra], ...), not a plugin like pytest-cov.
    static const std::regex line_re(R"re((^|\n)[ \t]*pytest[ \t]*($|[\r\n<>=!~;\[#,]))re",
                                    std::regex::icase);
    return std::regex_search(text, line_re);
}

std::string host_of(const std::string& url) {
    std::size_t scheme = url.find("://");
    std::size_t begin = scheme == std::string::npos ? 0 : scheme + 3;
    std::size_t end = url.find_first_of(":/", begin);
    return url.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

verspec::VersionId parse_optional_version(const json& j, const char* key) {
    return verspec::parse_version(j.at(key).get<std::string>());
}

} // namespace

const char* to_string(StatusKind kind) {
    switch (kind) {
        case StatusKind::PrefilterRejected: return "prefilter-rejected";
        case StatusKind::BuildFailedOld: return "build-failed-old";
        case StatusKind::BuildFailedNew: return "build-failed-new";
        case StatusKind::OldTestsFail: return "old-tests-fail";
        case StatusKind::NewTestsPass: return "new-tests-pass";
        case StatusKind::MigrationCandidate: return "migration-candidate";
        case StatusKind::TriageExcluded: return "triage-excluded";
    }
    return "prefilter-rejected";
}

void validate_task(const TaskSpec& task) {
    if (task.task_id.empty()) throw Error("task without task_id");
    if (!(task.committer_date < task.target_date))
        throw Error("task " + task.task_id + ": committer_date must precede target_date");
    if (!fs::exists(task.repo_path))
        throw IoError("task " + task.task_id + ": repo path " + task.repo_path.string() +
                      " does not exist");
}

std::vector<TaskSpec> load_task_manifest(const fs::path& jsonl_path) {
    std::ifstream in(jsonl_path);
    if (!in) throw IoError("cannot open manifest " + jsonl_path.string());
    std::vector<TaskSpec> tasks;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw Error("manifest line " + std::to_string(line_no) + ": " + ex.what());
        }
        TaskSpec task;
        task.task_id = j.at("task_id").get<std::string>();
        task.repo_path = j.at("repo_path").get<std::string>();
        task.committer_date = parse_rfc3339(j.at("committer_date").get<std::string>());
        task.target_date = parse_cutoff(j.at("target_date").get<std::string>());
        if (j.contains("old_interpreter")) task.old_interpreter = parse_optional_version(j, "old_interpreter");
        if (j.contains("new_interpreter")) task.new_interpreter = parse_optional_version(j, "new_interpreter");
        task.setup_script = j.value("setup_script", "");
        task.test_command = j.value("test_command", "");
        for (const json& f : j.value("test_files", json::array()))
            task.test_files.push_back(f.get<std::string>());
        validate_task(task);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

PrefilterResult prefilter_repo(const fs::path& repo_root) {
    if (!fs::exists(repo_root)) throw IoError("repo " + repo_root.string() + " unreadable");
    if (!has_config_file(repo_root)) return {false, "no-config"};
    if (!has_pytest_import(repo_root) && !has_single_file_unittest(repo_root))
        return {false, "no-test-framework"};
    return {true, ""};
}

std::string select_test_command(const fs::path& repo_root) {
    return has_pytest_import(repo_root) ? "python -m pytest ." : "python -m unittest discover";
}

std::string generate_setup_script(const fs::path& repo_root, verspec::ExtractorPort& extractor) {
    std::string script;
    std::vector<fs::path> installed_reqs;

    fs::path pyproject = repo_root / "pyproject.toml";
    if (script.empty() && fs::exists(pyproject)) {
        if (auto cmds = extractor.derive_setup_commands("pyproject", read_text_file(pyproject)))
            script = *cmds;
    }
    if (script.empty()) {
        installed_reqs = find_requirements_files(repo_root);
        for (const fs::path& rel : installed_reqs)
            script += "pip install -r " + rel.generic_string() + "\n";
    }
    fs::path setup_py = repo_root / "setup.py";
    if (script.empty() && fs::exists(setup_py)) {
        if (auto cmds = extractor.derive_setup_commands("setup", read_text_file(setup_py)))
            script = *cmds;
    }
    if (script.empty()) throw NoSetupRecipe("no pyproject, requirements or setup script found");

    if (!script.empty() && script.back() != '\n') script += '\n';
    // The test run needs its framework present; the interpreter ships the
    // fallback runner, so only pytest needs installing. A requirements file
    // the script installs may already pin it, and that pin must not be
    // overridden by a bare install afterwards.
    bool pytest_repo = has_pytest_import(repo_root);
    bool pytest_installed = script.find("pytest") != std::string::npos;
    for (const fs::path& rel : installed_reqs) {
        if (pytest_installed) break;
        if (requirements_text_mentions_pytest(read_text_file(repo_root / rel)))
            pytest_installed = true;
    }
    if (pytest_repo && !pytest_installed) script += "pip install pytest\n";
    return script;
}

std::string index_url_for(const ForgeConfig& config, Instant cutoff) {
    std::string base = config.proxy_base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + "/at/" + format_rfc3339(cutoff) + "/simple/";
}

SandboxHandle prepare_env(const TaskSpec& task, Environment which, SandboxRuntimePort& runtime,
                          const ForgeConfig& config) {
    validate_task(task);
    if (!task.old_interpreter || !task.new_interpreter)
        throw Error("task " + task.task_id + " has unresolved interpreters");

    fs::path staging = make_temp_dir("timegate-stage-");
    try {
        copy_tree(task.repo_path, staging);
        if (which == Environment::New) {
            std::vector<fs::path> to_delete;
            fs::recursive_directory_iterator it(staging,
                                                fs::directory_options::skip_permission_denied);
            for (auto end = fs::recursive_directory_iterator(); it != end; ++it) {
                if (!it->is_regular_file()) continue;
                const fs::path& p = it->path();
                if (p.extension() == ".lock") {
                    to_delete.push_back(p);
                } else if (is_requirements_file(p)) {
                    write_text_file(
                        p, verspec::unpin_specifiers(read_text_file(p),
                                                     verspec::ConfigKind::Requirements)
                               .text);
                } else if (p.filename() == "pyproject.toml") {
                    write_text_file(p,
                                    verspec::unpin_specifiers(read_text_file(p),
                                                              verspec::ConfigKind::Pyproject)
                                        .text);
                }
            }
            for (const fs::path& p : to_delete) fs::remove(p);
        }

        Instant cutoff = which == Environment::Old ? task.committer_date : task.target_date;
        const verspec::VersionId& interp =
            which == Environment::Old ? *task.old_interpreter : *task.new_interpreter;
        SandboxHandle handle = runtime.create(staging, interp, index_url_for(config, cutoff));
        fs::remove_all(staging);
        return handle;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

TestRun run_setup(SandboxRuntimePort& runtime, const SandboxHandle& h, const std::string& script,
                  double timeout_seconds) {
    TestRun run = runtime.exec(h, script, timeout_seconds, /*network_enabled=*/true);
    if (run.timed_out) return run;
    if (run.exit_status != 0)
        throw BuildFailed("setup script exited with status " + std::to_string(run.exit_status),
                          run);
    return run;
}

TestRun run_tests(SandboxRuntimePort& runtime, const SandboxHandle& h, const std::string& command,
                  double timeout_seconds) {
    return runtime.exec(h, command, timeout_seconds, /*network_enabled=*/false);
}

CandidateReport extract_candidate(const TaskSpec& task, SandboxRuntimePort& runtime,
                                  const ForgeConfig& config) {
    CandidateReport report;

    {
        ScopedSandbox old_env(runtime, prepare_env(task, Environment::Old, runtime, config));
        try {
            report.old_setup =
                run_setup(runtime, old_env.handle(), task.setup_script, config.setup_timeout_seconds);
        } catch (const BuildFailed& ex) {
            report.old_setup = ex.run;
            report.status = {StatusKind::BuildFailedOld, ex.what()};
            return report;
        }
        if (report.old_setup->timed_out) {
            report.status = {StatusKind::BuildFailedOld, "setup timed out"};
            return report;
        }
        report.old_tests =
            run_tests(runtime, old_env.handle(), task.test_command, config.test_timeout_seconds);
        if (report.old_tests->timed_out || report.old_tests->exit_status != 0) {
            report.status = {StatusKind::OldTestsFail,
                             report.old_tests->timed_out ? "timeout" : ""};
            return report;
        }
    }

    ScopedSandbox new_env(runtime, prepare_env(task, Environment::New, runtime, config));
    try {
        report.new_setup =
            run_setup(runtime, new_env.handle(), task.setup_script, config.setup_timeout_seconds);
    } catch (const BuildFailed& ex) {
        report.new_setup = ex.run;
        report.status = {StatusKind::BuildFailedNew, ex.what()};
        return report;
    }
    if (report.new_setup->timed_out) {
        report.status = {StatusKind::BuildFailedNew, "setup timed out"};
        return report;
    }
    report.new_tests =
        run_tests(runtime, new_env.handle(), task.test_command, config.test_timeout_seconds);
    if (!report.new_tests->timed_out && report.new_tests->exit_status == 0) {
        report.status = {StatusKind::NewTestsPass, ""};
        return report;
    }

    switch (triage_run(*report.new_tests)) {
        case triage::Verdict::UserCode:
            report.status = {StatusKind::MigrationCandidate, ""};
            break;
        case triage::Verdict::Timeout:
            report.status = {StatusKind::TriageExcluded, "timeout"};
            break;
        case triage::Verdict::ThirdParty:
            report.status = {StatusKind::TriageExcluded, "third-party"};
            break;
        case triage::Verdict::Unparseable:
            report.status = {StatusKind::TriageExcluded, "unparseable"};
            break;
    }
    return report;
}

void resolve_task(TaskSpec& task, verspec::ExtractorPort& extractor,
                  const verspec::ReleaseCalendar& calendar) {
    validate_task(task);
    if (!task.old_interpreter)
        task.old_interpreter = verspec::detect_interpreter(task.repo_path.string(), extractor,
                                                           calendar, task.committer_date);
    if (!task.new_interpreter)
        task.new_interpreter = verspec::fallback_interpreter(calendar, task.target_date);
    if (task.setup_script.empty())
        task.setup_script = generate_setup_script(task.repo_path, extractor);
    if (task.test_command.empty()) task.test_command = select_test_command(task.repo_path);
}

ProcessRuntime::ProcessRuntime(std::size_t log_cap_bytes): log_cap_bytes_(log_cap_bytes) {
    CommandSpec probe;
    probe.argv = {"unshare", "-rn", "true"};
    probe.timeout_seconds = 10;
    try {
        unshare_available_ = run_command(probe).exit_status == 0;
    } catch (const SubprocessError&) {
        unshare_available_ = false;
    }
}

SandboxHandle ProcessRuntime::create(const fs::path& source_tree,
                                     const verspec::VersionId& interpreter,
                                     const std::string& index_url) {
    static std::atomic<unsigned> counter{0};
    SandboxHandle handle;
    handle.id = "sbx-" + std::to_string(++counter);
    handle.root = make_temp_dir("timegate-sbx-");
    handle.workdir = handle.root / "work";
    handle.interpreter = interpreter;
    handle.index_url = index_url;

    try {
        copy_tree(source_tree, handle.workdir);
        fs::create_directories(handle.root / "site");
        fs::create_directories(handle.root / "bin");
        fs::create_directories(handle.root / "cache");

        // The process runtime records the requested interpreter but runs the
        // host one; real isolation lives behind other SandboxRuntimePort
        // implementations.
        const std::string host_python = find_host_python3();
        const std::string python_shim = "#!/bin/sh\nexec \"" + host_python + "\" \"$@\"\n";
        const std::string pip_shim = "#!/bin/sh\nexec \"" + host_python + "\" -m pip \"$@\"\n";
        for (const char* name : {"python", "python3"})
            write_text_file(handle.root / "bin" / name, python_shim);
        write_text_file(handle.root / "bin" / "pip", pip_shim);
        for (const char* name : {"python", "python3", "pip"})
            fs::permissions(handle.root / "bin" / name,
                            fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                                fs::perms::others_read | fs::perms::others_exec);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(handle.root, ec);
        throw;
    }
    return handle;
}

TestRun ProcessRuntime::exec(const SandboxHandle& h, const std::string& command,
                             double timeout_seconds, bool network_enabled) {
    CommandSpec spec;
    spec.cwd = h.workdir.string();
    spec.timeout_seconds = timeout_seconds;
    spec.output_cap_bytes = log_cap_bytes_;

    const char* parent_path = std::getenv("PATH");
    spec.env["PATH"] =
        (h.root / "bin").string() + (parent_path ? ":" + std::string(parent_path) : "");
    spec.env["PYTHONPATH"] = (h.root / "site").string();
    spec.env["PYTHONDONTWRITEBYTECODE"] = "1";
    spec.env["PYTHONNOUSERSITE"] = "1";
    // Solver redirection: these two variables are the documented contract for
    // pointing the stock installer at the date-filtered index.
    spec.env["PIP_INDEX_URL"] = h.index_url;
    spec.env["PIP_TRUSTED_HOST"] = host_of(h.index_url);
    spec.env["PIP_TARGET"] = (h.root / "site").string();
    spec.env["PIP_CACHE_DIR"] = (h.root / "cache").string();
    spec.env["PIP_CONFIG_FILE"] = "/dev/null";
    spec.env["PIP_DISABLE_PIP_VERSION_CHECK"] = "1";
    spec.env["PIP_NO_BUILD_ISOLATION"] = "1";
    spec.env["PIP_RETRIES"] = "1";
    spec.env["PIP_DEFAULT_TIMEOUT"] = "20";

    if (network_enabled) {
        for (const char* name : {"http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY"})
            spec.unset_env.push_back(name);
    } else {
        // Point protocol clients at a blackhole; no_proxy exemptions removed.
        for (const char* name : {"http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY"})
            spec.env[name] = "http://127.0.0.1:9";
        for (const char* name : {"no_proxy", "NO_PROXY"}) spec.unset_env.push_back(name);
    }

    TestRun run;
    run.started_at = Instant{std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count()};
    CommandResult result;
    try {
        if (!network_enabled && unshare_available_) {
            CommandSpec wrapped = spec;
            wrapped.argv = {"unshare", "-rn", "--", "/bin/sh", "-c", command};
            result = run_command(wrapped);
        } else {
            result = run_shell(command, spec);
        }
    } catch (const SubprocessError& ex) {
        throw SandboxError(std::string("sandbox exec failed: ") + ex.what());
    }

    run.exit_status = result.exit_status;
    run.log = std::move(result.output);
    run.duration_seconds = result.duration_seconds;
    run.timed_out = result.timed_out;
    run.log_truncated = result.output_truncated;
    return run;
}

void ProcessRuntime::destroy(const SandboxHandle& h) {
    std::error_code ec;
    fs::remove_all(h.root, ec);
    if (ec) throw SandboxError("cannot remove sandbox root " + h.root.string());
}

} // namespace timegate::forge
