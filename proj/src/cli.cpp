#include "timegate/cli.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "timegate/chat.hpp"
#include "timegate/chrono.hpp"
#include "timegate/config.hpp"
#include "timegate/forge.hpp"
#include "timegate/fsutil.hpp"
#include "timegate/pilot.hpp"
#include "timegate/proxy.hpp"
#include "timegate/scoring.hpp"
#include "timegate/triage.hpp"
#include "timegate/verspec.hpp"

namespace timegate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Marks CLI-flag strings so "user did not pass this" is distinguishable.
struct Flag {
    std::string value;
    bool set = false;
};

config::RunConfig layered_config(const std::string& config_path) {
    return config::resolve_config(config_path.empty()
                                      ? std::nullopt
                                      : std::optional<std::string>(config_path));
}

Instant required_cutoff(const std::string& text) {
    if (text.empty())
        throw config::ConfigError("a cutoff is required (flag --cutoff, env TIMEGATE_CUTOFF, or "
                                  "config key cutoff)");
    return parse_cutoff(text);
}

std::set<std::string> existing_task_ids(const std::string& jsonl_path, const char* id_key) {
    std::set<std::string> ids;
    std::ifstream in(jsonl_path);
    if (!in) return ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            if (j.contains(id_key)) ids.insert(j.at(id_key).get<std::string>());
        } catch (const json::exception&) {
            // Partial trailing line from an interrupted run: the id is
            // unknown, so the task reruns and appends a fresh line.
        }
    }
    return ids;
}

// Starts an embedded index proxy unless the operator pointed at a running
// one. Returns the base URL to hand to the forge.
struct IndexProxy {
    std::unique_ptr<proxy::ProxyServer> server;
    std::string base_url;
};

IndexProxy make_index_proxy(const std::string& index_proxy_url, const std::string& upstream_url,
                            double ttl_seconds, Instant default_cutoff) {
    IndexProxy out;
    if (!index_proxy_url.empty()) {
        out.base_url = index_proxy_url;
        while (!out.base_url.empty() && out.base_url.back() == '/') out.base_url.pop_back();
        return out;
    }
    proxy::ProxyConfig cfg;
    cfg.upstream_url = upstream_url;
    cfg.default_cutoff = default_cutoff;
    cfg.cache_ttl_seconds = ttl_seconds;
    out.server = std::make_unique<proxy::ProxyServer>(cfg);
    int port = out.server->start_on_any_port("127.0.0.1");
    out.base_url = "http://127.0.0.1:" + std::to_string(port);
    return out;
}

std::string standing_context_for(const forge::TaskSpec& task) {
    std::string context = "Environment: Python " +
                          verspec::to_string(task.new_interpreter.value()) +
                          "; the package index only serves releases up to " +
                          format_rfc3339(task.target_date) + ".";
    if (!task.test_command.empty()) context += " Tests run via: " + task.test_command + ".";
    return context;
}

int cmd_proxy_serve(const config::RunConfig& cfg) {
    proxy::ProxyConfig proxy_cfg;
    proxy_cfg.upstream_url = cfg.upstream_url;
    proxy_cfg.default_cutoff = required_cutoff(cfg.cutoff);
    proxy_cfg.cache_ttl_seconds = cfg.cache_ttl_seconds;
    proxy_cfg.strict_metadata = cfg.strict_metadata;
    proxy::ProxyServer server(proxy_cfg);
    std::cerr << "serving date-filtered index on http://" << cfg.listen_host << ":"
              << cfg.listen_port << " (upstream " << cfg.upstream_url << ", default cutoff "
              << format_rfc3339(proxy_cfg.default_cutoff) << ")\n";
    if (!server.listen(cfg.listen_host, cfg.listen_port)) {
        std::cerr << "error: cannot listen on " << cfg.listen_host << ":" << cfg.listen_port
                  << "\n";
        return 1;
    }
    return 0;
}

int cmd_pipeline_run(const config::RunConfig& cfg, const std::string& index_proxy_url) {
    if (cfg.manifest_path.empty()) throw config::ConfigError("pipeline run needs --manifest");
    std::vector<forge::TaskSpec> tasks = forge::load_task_manifest(cfg.manifest_path);
    if (tasks.empty()) {
        std::cerr << "manifest has no tasks\n";
        return 1;
    }

    fs::create_directories(cfg.output_dir);
    std::string report_path = (fs::path(cfg.output_dir) / "pipeline.jsonl").string();
    std::set<std::string> done = existing_task_ids(report_path, "task_id");

    Instant latest_target = tasks.front().target_date;
    for (const forge::TaskSpec& task : tasks)
        if (task.target_date.seconds > latest_target.seconds) latest_target = task.target_date;
    IndexProxy index =
        make_index_proxy(index_proxy_url, cfg.upstream_url, cfg.cache_ttl_seconds, latest_target);

    forge::ForgeConfig forge_cfg;
    forge_cfg.proxy_base_url = index.base_url;
    forge_cfg.setup_timeout_seconds = cfg.setup_timeout_seconds;
    forge_cfg.test_timeout_seconds = cfg.test_timeout_seconds;

    verspec::RuleBasedExtractor extractor;
    const verspec::ReleaseCalendar& calendar = verspec::ReleaseCalendar::builtin();

    std::ofstream report(report_path, std::ios::app | std::ios::binary);
    if (!report) throw IoError("cannot open \"" + report_path + "\" for append");
    std::mutex output_mutex;
    std::map<std::string, int> tally;
    std::atomic<std::size_t> next_task{0};

    auto worker = [&]() {
        forge::ProcessRuntime runtime;
        while (true) {
            std::size_t index_of_task = next_task.fetch_add(1);
            if (index_of_task >= tasks.size()) return;
            forge::TaskSpec task = tasks[index_of_task];
            if (done.count(task.task_id)) continue;
            json line;
            line["schema_version"] = 1;
            line["task_id"] = task.task_id;
            try {
                forge::validate_task(task);
                forge::resolve_task(task, extractor, calendar);
                forge::CandidateReport result = forge::extract_candidate(task, runtime, forge_cfg);
                line["status"] = forge::to_string(result.status.kind);
                line["reason"] = result.status.reason;
            } catch (const std::exception& e) {
                line["status"] = "error";
                line["reason"] = e.what();
            }
            std::lock_guard<std::mutex> lock(output_mutex);
            report << line.dump() << '\n';
            report.flush();
            ++tally[line["status"].get<std::string>()];
        }
    };

    int width = std::max(1, cfg.workers);
    std::vector<std::thread> pool;
    for (int i = 1; i < width; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    std::cout << "# schema_version: 1\nstatus\tcount\n";
    for (const auto& [status, count] : tally) std::cout << status << "\t" << count << "\n";
    return 0;
}

std::unique_ptr<chat::ChatPort> make_chat_port(const config::RunConfig& cfg) {
    if (!cfg.chat_script.empty()) {
        return std::make_unique<chat::ScriptedChatPort>(
            chat::ScriptedChatPort::from_jsonl_file(cfg.chat_script));
    }
    if (!cfg.chat_base_url.empty()) {
        chat::HttpChatOptions options;
        options.base_url = cfg.chat_base_url;
        options.model = cfg.chat_model;
        options.api_key = cfg.chat_api_key;
        return std::make_unique<chat::HttpChatPort>(options);
    }
    throw config::ConfigError("agent run needs a chat backend: --script or --chat-url");
}

int cmd_agent_run(const config::RunConfig& cfg, const std::string& index_proxy_url,
                  const std::string& transcripts_dir) {
    if (cfg.manifest_path.empty()) throw config::ConfigError("agent run needs --manifest");
    std::vector<forge::TaskSpec> tasks = forge::load_task_manifest(cfg.manifest_path);

    fs::create_directories(cfg.output_dir);
    std::string records_path = (fs::path(cfg.output_dir) / "records.jsonl").string();
    std::set<std::string> done = existing_task_ids(records_path, "task_id");

    Instant latest_target =
        tasks.empty() ? parse_cutoff("2100-01-01") : tasks.front().target_date;
    for (const forge::TaskSpec& task : tasks)
        if (task.target_date.seconds > latest_target.seconds) latest_target = task.target_date;
    IndexProxy index =
        make_index_proxy(index_proxy_url, cfg.upstream_url, cfg.cache_ttl_seconds, latest_target);

    forge::ForgeConfig forge_cfg;
    forge_cfg.proxy_base_url = index.base_url;
    forge_cfg.setup_timeout_seconds = cfg.setup_timeout_seconds;
    forge_cfg.test_timeout_seconds = cfg.test_timeout_seconds;

    verspec::RuleBasedExtractor extractor;
    const verspec::ReleaseCalendar& calendar = verspec::ReleaseCalendar::builtin();
    forge::ProcessRuntime runtime;

    std::string system_prompt;
    if (!cfg.system_prompt_path.empty())
        system_prompt = fsutil::read_text_file(cfg.system_prompt_path);

    for (forge::TaskSpec task : tasks) {
        if (done.count(task.task_id)) continue;
        forge::validate_task(task);
        forge::resolve_task(task, extractor, calendar);

        scoring::RunRecord record;
        record.task_id = task.task_id;
        try {
            forge::SandboxHandle handle =
                forge::prepare_env(task, forge::Environment::New, runtime, forge_cfg);
            forge::ScopedSandbox sandbox(runtime, handle);
            forge::TestRun setup = forge::run_setup(runtime, handle, task.setup_script,
                                                    forge_cfg.setup_timeout_seconds);
            if (setup.timed_out) {
                std::cerr << "task " << task.task_id << ": environment setup timed out\n";
            } else {
                pilot::Workspace workspace;
                workspace.host_root = handle.workdir;
                workspace.test_files.insert(task.test_files.begin(), task.test_files.end());
                pilot::ToolHost host(workspace, [&]() {
                    return forge::run_tests(runtime, handle, task.test_command,
                                            forge_cfg.test_timeout_seconds);
                });

                std::unique_ptr<chat::ChatPort> chat_port = make_chat_port(cfg);
                pilot::TrajectoryOptions options;
                options.llm_budget = cfg.llm_budget;
                options.test_budget = cfg.test_budget;
                options.system_prompt = system_prompt;
                options.standing_context = standing_context_for(task);
                if (!transcripts_dir.empty()) {
                    fs::create_directories(transcripts_dir);
                    options.transcript_path =
                        (fs::path(transcripts_dir) / (task.task_id + ".jsonl")).string();
                }
                pilot::TrajectoryOutcome outcome =
                    pilot::run_trajectory(task.task_id, host, *chat_port, options);
                record = outcome.record;
                if (!outcome.diagnostic.empty())
                    std::cerr << "task " << task.task_id << ": " << outcome.diagnostic << "\n";
            }
        } catch (const forge::BuildFailed& e) {
            std::cerr << "task " << task.task_id << ": environment build failed: " << e.what()
                      << "\n";
        }
        scoring::append_run_record(records_path, record);
        std::cout << record.task_id << "\t"
                  << (record.result == scoring::RunResult::Success ? "success" : "failure")
                  << "\tL=" << record.llm_calls << "\tT=" << record.test_execs << "\n";
    }
    return 0;
}

int cmd_score(const config::RunConfig& cfg, const std::string& records_path,
              const std::string& sweep_path) {
    scoring::EvaluationSet set;
    set.records = scoring::load_run_records(records_path);
    if (set.records.empty()) {
        std::cerr << "error: evaluation set is empty\n";
        return 1;
    }
    if (cfg.gold_dir.empty()) throw config::ConfigError("score needs --golds");
    set.golds = scoring::load_gold_dir(cfg.gold_dir);

    if (!cfg.manifest_path.empty()) {
        for (const forge::TaskSpec& task : forge::load_task_manifest(cfg.manifest_path)) {
            for (const scoring::RunRecord& record : set.records) {
                if (record.task_id != task.task_id || record.final_patch.empty()) continue;
                scoring::validate_patch(
                    record.task_id,
                    diff::modified_lines(diff::parse_unified_diff(record.final_patch)),
                    task.test_files);
            }
        }
    }

    std::cout << scoring::format_score_table(set, cfg.llm_budget, cfg.test_budget);
    if (!sweep_path.empty()) {
        std::vector<std::pair<int, double>> curve =
            scoring::sweep_pass_at_1(set, cfg.llm_budget, cfg.test_budget);
        fsutil::write_text_file(sweep_path, scoring::format_sweep_csv(curve));
        std::cerr << "wrote sweep curve to " << sweep_path << "\n";
    }
    if (!cfg.tariff_path.empty()) {
        std::cout << "\n"
                  << scoring::format_cost_table(set.records,
                                                scoring::load_tariff_table(cfg.tariff_path));
    }
    return 0;
}

int cmd_triage_inspect(const std::string& log_path, bool timed_out) {
    std::string log = fsutil::read_text_file(log_path);
    std::vector<triage::ParsedFailure> failures = triage::parse_failures(log);
    json out;
    out["schema_version"] = 1;
    out["verdict"] = triage::to_string(triage::triage_verdict(timed_out, log));
    out["failures"] = json::array();
    for (const triage::ParsedFailure& failure : failures) {
        const triage::TracebackFrame& root = triage::root_cause_frame(failure);
        json f;
        f["exception_type"] = failure.exception_type;
        f["message"] = failure.message;
        f["frame_count"] = failure.frames.size();
        f["root_file"] = root.file_path;
        f["root_line"] = root.line_no;
        f["root_origin"] = triage::classify_frame(root) == triage::FrameOrigin::UserCode
                               ? "user-code"
                               : "third-party";
        out["failures"].push_back(std::move(f));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"timegate: a date-filtered package index proxy, migration-task pipeline, "
                 "tool-calling agent harness, and run-record scorer"};
    app.require_subcommand(1);

    std::string config_path;

    // proxy serve
    CLI::App* proxy_cmd = app.add_subcommand("proxy", "Index proxy operations");
    proxy_cmd->require_subcommand(1);
    CLI::App* serve = proxy_cmd->add_subcommand("serve", "Serve the date-filtered package index");
    Flag serve_upstream, serve_host, serve_cutoff;
    int serve_port = -1;
    double serve_ttl = -1;
    bool serve_strict = false;
    serve->add_option("--config", config_path, "Config file (key=value lines)");
    serve->add_option("--upstream", serve_upstream.value, "Upstream simple-index URL");
    serve->add_option("--host", serve_host.value, "Listen host");
    serve->add_option("--port", serve_port, "Listen port");
    serve->add_option("--cutoff", serve_cutoff.value,
                      "Default cutoff (RFC 3339 instant or YYYY-MM-DD, end of day)");
    serve->add_option("--ttl", serve_ttl, "Page cache TTL seconds");
    serve->add_flag("--strict-metadata", serve_strict,
                    "Fail on index entries without upload times instead of skipping them");

    // pipeline run
    CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "Migration-task pipeline");
    pipeline_cmd->require_subcommand(1);
    CLI::App* pipeline_run =
        pipeline_cmd->add_subcommand("run", "Prefilter, build, test and triage each task");
    Flag pl_manifest, pl_out, pl_upstream, pl_index_proxy;
    int pl_workers = -1;
    double pl_setup_timeout = -1, pl_test_timeout = -1;
    pipeline_run->add_option("--config", config_path, "Config file (key=value lines)");
    pipeline_run->add_option("--manifest", pl_manifest.value, "Task manifest JSONL");
    pipeline_run->add_option("--out", pl_out.value, "Output directory");
    pipeline_run->add_option("--upstream", pl_upstream.value, "Upstream simple-index URL");
    pipeline_run->add_option("--index-proxy", pl_index_proxy.value,
                             "Base URL of an already-running index proxy");
    pipeline_run->add_option("--workers", pl_workers, "Worker pool width");
    pipeline_run->add_option("--setup-timeout", pl_setup_timeout, "Setup timeout seconds");
    pipeline_run->add_option("--test-timeout", pl_test_timeout, "Test timeout seconds");

    // agent run
    CLI::App* agent_cmd = app.add_subcommand("agent", "Tool-calling agent");
    agent_cmd->require_subcommand(1);
    CLI::App* agent_run = agent_cmd->add_subcommand("run", "Run the agent over candidate tasks");
    Flag ag_manifest, ag_out, ag_upstream, ag_index_proxy, ag_script, ag_chat_url, ag_model,
        ag_api_key, ag_prompt;
    std::string ag_transcripts;
    int ag_n = -1, ag_m = -1;
    agent_run->add_option("--config", config_path, "Config file (key=value lines)");
    agent_run->add_option("--manifest", ag_manifest.value, "Task manifest JSONL");
    agent_run->add_option("--out", ag_out.value, "Output directory");
    agent_run->add_option("--upstream", ag_upstream.value, "Upstream simple-index URL");
    agent_run->add_option("--index-proxy", ag_index_proxy.value,
                          "Base URL of an already-running index proxy");
    agent_run->add_option("--script", ag_script.value, "Scripted chat replay JSONL");
    agent_run->add_option("--chat-url", ag_chat_url.value,
                          "Chat-completions base URL (e.g. http://host:port/v1)");
    agent_run->add_option("--model", ag_model.value, "Chat model identifier");
    agent_run->add_option("--api-key", ag_api_key.value, "Chat API bearer token");
    agent_run->add_option("--prompt", ag_prompt.value, "System prompt file (default built-in)");
    agent_run->add_option("--transcripts", ag_transcripts, "Directory for turn transcripts");
    agent_run->add_option("-n,--llm-budget", ag_n, "LLM call budget n");
    agent_run->add_option("-m,--test-budget", ag_m, "Test execution budget m");

    // score
    CLI::App* score = app.add_subcommand("score", "Score run records against gold annotations");
    std::string sc_records, sc_sweep;
    Flag sc_golds, sc_tariffs, sc_manifest;
    int sc_n = -1, sc_m = -1;
    score->add_option("--config", config_path, "Config file (key=value lines)");
    score->add_option("--records", sc_records, "Run records JSONL")->required();
    score->add_option("--golds", sc_golds.value, "Directory of <task_id>.diff gold patches");
    score->add_option("--tasks", sc_manifest.value,
                      "Task manifest for protected-test-file validation");
    score->add_option("--sweep", sc_sweep, "Write the pass@1 sweep curve CSV here");
    score->add_option("--tariffs", sc_tariffs.value, "Tariff table JSON for the cost report");
    score->add_option("-n,--llm-budget", sc_n, "LLM call budget n");
    score->add_option("-m,--test-budget", sc_m, "Test execution budget m");

    // triage inspect
    CLI::App* triage_cmd = app.add_subcommand("triage", "Failure triage");
    triage_cmd->require_subcommand(1);
    CLI::App* inspect = triage_cmd->add_subcommand("inspect", "Parse and classify a test log");
    std::string tr_log;
    bool tr_timed_out = false;
    inspect->add_option("--log", tr_log, "Test log file")->required();
    inspect->add_flag("--timed-out", tr_timed_out, "The run hit its time limit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        config::RunConfig cfg = layered_config(config_path);
        if (serve->parsed()) {
            if (serve_upstream.value.size()) cfg.upstream_url = serve_upstream.value;
            if (serve_host.value.size()) cfg.listen_host = serve_host.value;
            if (serve_port >= 0) cfg.listen_port = serve_port;
            if (serve_cutoff.value.size()) cfg.cutoff = serve_cutoff.value;
            if (serve_ttl >= 0) cfg.cache_ttl_seconds = serve_ttl;
            if (serve_strict) cfg.strict_metadata = true;
            return cmd_proxy_serve(cfg);
        }
        if (pipeline_run->parsed()) {
            if (pl_manifest.value.size()) cfg.manifest_path = pl_manifest.value;
            if (pl_out.value.size()) cfg.output_dir = pl_out.value;
            if (pl_upstream.value.size()) cfg.upstream_url = pl_upstream.value;
            if (pl_workers >= 1) cfg.workers = pl_workers;
            if (pl_setup_timeout > 0) cfg.setup_timeout_seconds = pl_setup_timeout;
            if (pl_test_timeout > 0) cfg.test_timeout_seconds = pl_test_timeout;
            return cmd_pipeline_run(cfg, pl_index_proxy.value);
        }
        if (agent_run->parsed()) {
            if (ag_manifest.value.size()) cfg.manifest_path = ag_manifest.value;
            if (ag_out.value.size()) cfg.output_dir = ag_out.value;
            if (ag_upstream.value.size()) cfg.upstream_url = ag_upstream.value;
            if (ag_script.value.size()) cfg.chat_script = ag_script.value;
            if (ag_chat_url.value.size()) cfg.chat_base_url = ag_chat_url.value;
            if (ag_model.value.size()) cfg.chat_model = ag_model.value;
            if (ag_api_key.value.size()) cfg.chat_api_key = ag_api_key.value;
            if (ag_prompt.value.size()) cfg.system_prompt_path = ag_prompt.value;
            if (ag_n >= 1) cfg.llm_budget = ag_n;
            if (ag_m >= 1) cfg.test_budget = ag_m;
            return cmd_agent_run(cfg, ag_index_proxy.value, ag_transcripts);
        }
        if (score->parsed()) {
            if (sc_golds.value.size()) cfg.gold_dir = sc_golds.value;
            if (sc_tariffs.value.size()) cfg.tariff_path = sc_tariffs.value;
            if (sc_manifest.value.size()) cfg.manifest_path = sc_manifest.value;
            if (sc_n >= 1) cfg.llm_budget = sc_n;
            if (sc_m >= 1) cfg.test_budget = sc_m;
            return cmd_score(cfg, sc_records, sc_sweep);
        }
        if (inspect->parsed()) return cmd_triage_inspect(tr_log, tr_timed_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace timegate::cli
