#include "timegate/scoring.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "timegate/fsutil.hpp"

namespace timegate::scoring {

namespace fs = std::filesystem;
using nlohmann::json;

double precision(const diff::ModifiedLineSet& modified, const diff::ModifiedLineSet& gold) {
    std::size_t total = 0, hits = 0;
    for (const auto& [file, lines] : modified) {
        total += lines.size();
        auto it = gold.find(file);
        if (it == gold.end()) continue;
        for (int line : lines) hits += it->second.count(line);
    }
    if (total == 0) return 1.0;
    return static_cast<double>(hits) / static_cast<double>(total);
}

int success_indicator(const RunRecord& record, int llm_budget, int test_budget) {
    return record.result == RunResult::Success && record.llm_calls <= llm_budget &&
                   record.test_execs <= test_budget
               ? 1
               : 0;
}

double pass_at_1(const EvaluationSet& set, int llm_budget, int test_budget) {
    if (set.records.empty()) throw EmptyEvaluation();
    std::int64_t successes = 0;
    for (const RunRecord& record : set.records)
        successes += success_indicator(record, llm_budget, test_budget);
    return static_cast<double>(successes) / static_cast<double>(set.records.size());
}

double prec_at_1(const EvaluationSet& set, int llm_budget, int test_budget) {
    if (set.records.empty()) throw EmptyEvaluation();
    double sum = 0.0;
    for (const RunRecord& record : set.records) {
        if (!success_indicator(record, llm_budget, test_budget)) continue;
        auto gold = set.golds.find(record.task_id);
        if (gold == set.golds.end()) throw MissingGold(record.task_id);
        diff::ModifiedLineSet modified =
            diff::modified_lines(diff::parse_unified_diff(record.final_patch));
        sum += precision(modified, gold->second);
    }
    return sum / static_cast<double>(set.records.size());
}

std::vector<std::pair<int, double>> sweep_pass_at_1(const EvaluationSet& set, int llm_budget_max,
                                                    int test_budget) {
    if (set.records.empty()) throw EmptyEvaluation();
    // Bucket successful records by their call count, then prefix-sum so the
    // whole curve costs one pass regardless of the budget ceiling.
    std::vector<std::int64_t> new_successes(static_cast<std::size_t>(llm_budget_max) + 1, 0);
    for (const RunRecord& record : set.records) {
        if (record.result != RunResult::Success || record.test_execs > test_budget) continue;
        if (record.llm_calls > llm_budget_max) continue;
        std::int64_t bucket = std::max<std::int64_t>(record.llm_calls, 1);
        ++new_successes[static_cast<std::size_t>(bucket)];
    }
    std::vector<std::pair<int, double>> curve;
    curve.reserve(static_cast<std::size_t>(llm_budget_max));
    std::int64_t running = 0;
    for (int n = 1; n <= llm_budget_max; ++n) {
        running += new_successes[static_cast<std::size_t>(n)];
        curve.emplace_back(n, static_cast<double>(running) /
                                  static_cast<double>(set.records.size()));
    }
    return curve;
}

num::Decimal cost(const RunRecord& record, const Tariff& tariff) {
    return num::Decimal::from_int(record.tokens_in) * tariff.price_per_input_token +
           num::Decimal::from_int(record.tokens_out) * tariff.price_per_output_token;
}

num::Decimal total_cost(const std::vector<RunRecord>& records, const Tariff& tariff) {
    num::Decimal sum;
    for (const RunRecord& record : records) sum = sum + cost(record, tariff);
    return sum;
}

void validate_patch(const std::string& task_id, const diff::ModifiedLineSet& modified,
                    const std::vector<std::string>& test_files) {
    for (const auto& [file, lines] : modified) {
        (void)lines;
        for (const std::string& test_file : test_files) {
            if (file == test_file) throw TestFileTouched(task_id, file);
        }
    }
}

std::string run_record_to_json(const RunRecord& record) {
    json j;
    j["schema_version"] = k_run_record_schema_version;
    j["task_id"] = record.task_id;
    j["result"] = record.result == RunResult::Success ? "success" : "failure";
    j["llm_calls"] = record.llm_calls;
    j["test_execs"] = record.test_execs;
    j["tokens_in"] = record.tokens_in;
    j["tokens_out"] = record.tokens_out;
    j["final_patch"] = record.final_patch;
    return j.dump();
}

RunRecord run_record_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw RecordParseError(std::string("invalid run-record JSON: ") + e.what());
    }
    try {
        if (j.value("schema_version", 1) != k_run_record_schema_version)
            throw RecordParseError("unsupported run-record schema_version");
        RunRecord record;
        record.task_id = j.at("task_id").get<std::string>();
        std::string result = j.at("result").get<std::string>();
        if (result == "success")
            record.result = RunResult::Success;
        else if (result == "failure")
            record.result = RunResult::Failure;
        else
            throw RecordParseError("invalid result value \"" + result + "\"");
        record.llm_calls = j.at("llm_calls").get<std::int64_t>();
        record.test_execs = j.at("test_execs").get<std::int64_t>();
        record.tokens_in = j.value("tokens_in", std::int64_t{0});
        record.tokens_out = j.value("tokens_out", std::int64_t{0});
        record.final_patch = j.value("final_patch", std::string{});
        if (record.llm_calls < 0 || record.test_execs < 0 || record.tokens_in < 0 ||
            record.tokens_out < 0)
            throw RecordParseError("run-record counters must be non-negative");
        if (record.result == RunResult::Success && record.test_execs < 1)
            throw RecordParseError("successful record \"" + record.task_id +
                                   "\" has no test execution");
        return record;
    } catch (const json::exception& e) {
        throw RecordParseError(std::string("run-record field error: ") + e.what());
    }
}

std::vector<RunRecord> load_run_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run records file \"" + path + "\"");
    std::vector<RunRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        records.push_back(run_record_from_json(line));
    }
    return records;
}

void append_run_record(const std::string& path, const RunRecord& record) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open run records file \"" + path + "\" for append");
    out << run_record_to_json(record) << '\n';
    if (!out) throw IoError("failed writing run record to \"" + path + "\"");
}

std::map<std::string, diff::ModifiedLineSet> load_gold_dir(const std::string& dir) {
    std::map<std::string, diff::ModifiedLineSet> golds;
    if (!fs::is_directory(dir)) throw IoError("gold directory \"" + dir + "\" does not exist");
    for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".diff") continue;
        std::string task_id = entry.path().stem().string();
        golds[task_id] =
            diff::modified_lines(diff::parse_unified_diff(fsutil::read_text_file(entry.path())));
    }
    return golds;
}

std::vector<std::pair<std::string, Tariff>> load_tariff_table(const std::string& path) {
    json j;
    try {
        j = json::parse(fsutil::read_text_file(path));
    } catch (const json::exception& e) {
        throw RecordParseError(std::string("invalid tariff JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, Tariff>> tariffs;
    try {
        for (const auto& [name, prices] : j.at("models").items()) {
            Tariff t;
            t.price_per_input_token = num::Decimal::parse(prices.at("input").get<std::string>());
            t.price_per_output_token = num::Decimal::parse(prices.at("output").get<std::string>());
            if (t.price_per_input_token.is_negative() || t.price_per_output_token.is_negative())
                throw RecordParseError("tariff prices must be non-negative");
            tariffs.emplace_back(name, t);
        }
    } catch (const json::exception& e) {
        throw RecordParseError(std::string("tariff field error: ") + e.what());
    }
    std::sort(tariffs.begin(), tariffs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return tariffs;
}

namespace {

std::string format_fraction(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

} // namespace

std::string format_score_table(const EvaluationSet& set, int llm_budget, int test_budget) {
    std::string out = "# schema_version: 1\nmetric\tvalue\n";
    out += "records\t" + std::to_string(set.records.size()) + "\n";
    out += "llm_budget\t" + std::to_string(llm_budget) + "\n";
    out += "test_budget\t" + std::to_string(test_budget) + "\n";
    out += "pass_at_1\t" + format_fraction(pass_at_1(set, llm_budget, test_budget)) + "\n";
    out += "prec_at_1\t" + format_fraction(prec_at_1(set, llm_budget, test_budget)) + "\n";
    return out;
}

std::string format_sweep_csv(const std::vector<std::pair<int, double>>& curve) {
    std::string out = "# schema_version: 1\nn_prime,pass_at_1\n";
    for (const auto& [n, value] : curve)
        out += std::to_string(n) + "," + format_fraction(value) + "\n";
    return out;
}

std::string format_cost_table(const std::vector<RunRecord>& records,
                              const std::vector<std::pair<std::string, Tariff>>& tariffs) {
    std::int64_t tokens_in = 0, tokens_out = 0;
    for (const RunRecord& record : records) {
        tokens_in += record.tokens_in;
        tokens_out += record.tokens_out;
    }
    std::string out = "# schema_version: 1\nmodel\ttokens_in\ttokens_out\tcost\n";
    for (const auto& [name, tariff] : tariffs) {
        out += name + "\t" + std::to_string(tokens_in) + "\t" + std::to_string(tokens_out) + "\t" +
               total_cost(records, tariff).to_string() + "\n";
    }
    return out;
}

} // namespace timegate::scoring
