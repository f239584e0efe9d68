#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "timegate/decimal.hpp"
#include "timegate/diff.hpp"
#include "timegate/error.hpp"

namespace timegate::scoring {

class EmptyEvaluation : public Error {
public:
    EmptyEvaluation() : Error("evaluation set is empty") {}
};

class MissingGold : public Error {
public:
    explicit MissingGold(const std::string& task_id)
        : Error("no gold annotation for successful task \"" + task_id + "\""), task_id(task_id) {}
    std::string task_id;
};

class TestFileTouched : public Error {
public:
    TestFileTouched(const std::string& task_id, const std::string& file)
        : Error("patch for task \"" + task_id + "\" modifies protected test file \"" + file +
                "\"") {}
};

class RecordParseError : public Error {
public:
    using Error::Error;
};

enum class RunResult { Success, Failure };

// One agent trajectory outcome. llm_calls counts every model invocation
// including malformed-output retries; test_execs counts agent-requested
// test runs. A Success must have observed at least one test execution.
struct RunRecord {
    std::string task_id;
    RunResult result = RunResult::Failure;
    std::int64_t llm_calls = 0;
    std::int64_t test_execs = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::string final_patch;
};

struct Tariff {
    num::Decimal price_per_input_token;
    num::Decimal price_per_output_token;
};

struct EvaluationSet {
    std::vector<RunRecord> records;
    std::map<std::string, diff::ModifiedLineSet> golds;
};

inline constexpr int k_run_record_schema_version = 1;

// p = |H ∩ M| / |M|, intersected per file; 1 when M is empty (no
// superfluous edit exists, so precision is vacuously perfect).
double precision(const diff::ModifiedLineSet& modified, const diff::ModifiedLineSet& gold);

// 1 iff the run succeeded within both budgets: L ≤ n and T ≤ m.
int success_indicator(const RunRecord& record, int llm_budget, int test_budget);

double pass_at_1(const EvaluationSet& set, int llm_budget, int test_budget);

// Mean over all records of (precision if the record succeeded within
// budget, else 0). Requires gold annotations for in-budget successes.
double prec_at_1(const EvaluationSet& set, int llm_budget, int test_budget);

// One pass over the records; curve[i] = pass_at_1 at budget (i+1, test_budget).
std::vector<std::pair<int, double>> sweep_pass_at_1(const EvaluationSet& set, int llm_budget_max,
                                                    int test_budget);

num::Decimal cost(const RunRecord& record, const Tariff& tariff);
num::Decimal total_cost(const std::vector<RunRecord>& records, const Tariff& tariff);

// Throws TestFileTouched if the patch edits a protected test file.
void validate_patch(const std::string& task_id, const diff::ModifiedLineSet& modified,
                    const std::vector<std::string>& test_files);

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const std::string& line);
std::vector<RunRecord> load_run_records(const std::string& path);
void append_run_record(const std::string& path, const RunRecord& record);

// Gold annotations live as one unified-diff file per task: <dir>/<task_id>.diff.
std::map<std::string, diff::ModifiedLineSet> load_gold_dir(const std::string& dir);

// Named tariffs: JSON {"schema_version":1,"models":{name:{"input":"2e-6","output":"6e-6"}}}.
std::vector<std::pair<std::string, Tariff>> load_tariff_table(const std::string& path);

std::string format_score_table(const EvaluationSet& set, int llm_budget, int test_budget);
std::string format_sweep_csv(const std::vector<std::pair<int, double>>& curve);
std::string format_cost_table(const std::vector<RunRecord>& records,
                              const std::vector<std::pair<std::string, Tariff>>& tariffs);

} // namespace timegate::scoring
