#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "timegate/chrono.hpp"
#include "timegate/decimal.hpp"
#include "timegate/diff.hpp"
#include "timegate/proxy.hpp"
#include "timegate/scoring.hpp"
#include "timegate/triage.hpp"
#include "timegate/verspec.hpp"

namespace py = pybind11;
using namespace timegate;

namespace {

diff::ModifiedLineSet line_set_from(const std::map<std::string, std::vector<int>>& in) {
    diff::ModifiedLineSet out;
    for (const auto& [file, lines] : in) out[file] = std::set<int>(lines.begin(), lines.end());
    return out;
}

std::map<std::string, std::vector<int>> line_set_to(const diff::ModifiedLineSet& in) {
    std::map<std::string, std::vector<int>> out;
    for (const auto& [file, lines] : in) out[file] = std::vector<int>(lines.begin(), lines.end());
    return out;
}

scoring::RunRecord record_from_dict(const py::dict& d) {
    scoring::RunRecord record;
    record.task_id = d["task_id"].cast<std::string>();
    std::string result = d["result"].cast<std::string>();
    record.result = result == "success" ? scoring::RunResult::Success
                                        : scoring::RunResult::Failure;
    record.llm_calls = d["llm_calls"].cast<std::int64_t>();
    record.test_execs = d["test_execs"].cast<std::int64_t>();
    if (d.contains("tokens_in")) record.tokens_in = d["tokens_in"].cast<std::int64_t>();
    if (d.contains("tokens_out")) record.tokens_out = d["tokens_out"].cast<std::int64_t>();
    if (d.contains("final_patch")) record.final_patch = d["final_patch"].cast<std::string>();
    return record;
}

scoring::EvaluationSet set_from_py(
    const std::vector<py::dict>& records,
    const std::map<std::string, std::map<std::string, std::vector<int>>>& golds) {
    scoring::EvaluationSet set;
    for (const py::dict& d : records) set.records.push_back(record_from_dict(d));
    for (const auto& [task_id, gold] : golds) set.golds[task_id] = line_set_from(gold);
    return set;
}

} // namespace

PYBIND11_MODULE(_timegate, m) {
    m.doc() = "Core operations: version selection, unpinning, diff line mapping, "
              "run-record metrics, cost accounting and failure triage.";

    // --- time ---------------------------------------------------------
    m.def(
        "parse_cutoff",
        [](const std::string& text) { return parse_cutoff(text).seconds; },
        py::arg("text"),
        "Parse an RFC 3339 instant or a YYYY-MM-DD date (meaning end of that "
        "UTC day) to Unix seconds.");
    m.def(
        "format_rfc3339", [](std::int64_t seconds) { return format_rfc3339(Instant{seconds}); },
        py::arg("seconds"));

    // --- versions -----------------------------------------------------
    m.def(
        "canonical_version",
        [](const std::string& text) { return verspec::to_string(verspec::parse_version(text)); },
        py::arg("text"));
    m.def(
        "compare_versions",
        [](const std::string& a, const std::string& b) {
            return verspec::compare(verspec::parse_version(a), verspec::parse_version(b));
        },
        py::arg("a"), py::arg("b"), "Returns -1, 0 or 1.");
    m.def(
        "version_matches",
        [](const std::string& version, const std::string& specifier) {
            return verspec::version_matches(verspec::parse_version(version),
                                            verspec::parse_specifier_set(specifier));
        },
        py::arg("version"), py::arg("specifier"));
    m.def(
        "select_interpreter",
        [](const std::string& specifier, const std::string& commit_date) {
            return verspec::to_string(
                verspec::select_interpreter(verspec::parse_specifier_set(specifier),
                                            verspec::ReleaseCalendar::builtin(),
                                            parse_cutoff(commit_date)));
        },
        py::arg("specifier"), py::arg("commit_date"));
    m.def(
        "fallback_interpreter",
        [](const std::string& commit_date) {
            return verspec::to_string(verspec::fallback_interpreter(
                verspec::ReleaseCalendar::builtin(), parse_cutoff(commit_date)));
        },
        py::arg("commit_date"),
        "Interpreter chosen when a repo declares no usable requirement: the "
        "minor series current one year before the commit date, at its newest "
        "patch released by the commit date.");
    m.def(
        "unpin",
        [](const std::string& text, const std::string& kind) {
            verspec::ConfigKind config_kind;
            if (kind == "requirements")
                config_kind = verspec::ConfigKind::Requirements;
            else if (kind == "pyproject")
                config_kind = verspec::ConfigKind::Pyproject;
            else
                throw py::value_error("kind must be 'requirements' or 'pyproject'");
            verspec::UnpinResult result = verspec::unpin_specifiers(text, config_kind);
            return py::make_tuple(result.text, result.warnings);
        },
        py::arg("text"), py::arg("kind"),
        "Widen dependency constraints; returns (new_text, warnings).");

    // --- index names ----------------------------------------------------
    m.def(
        "normalize_project_name",
        [](const std::string& raw) { return proxy::normalize_project_name(raw).normalized; },
        py::arg("raw"));

    // --- diffs ----------------------------------------------------------
    m.def(
        "modified_lines",
        [](const std::string& diff_text) {
            return line_set_to(diff::modified_lines(diff::parse_unified_diff(diff_text)));
        },
        py::arg("diff_text"),
        "Pre-edit line numbers touched per file: minus lines for replacements "
        "and deletions, the insertion anchor for additions.");
    m.def("generate_unified_diff", &diff::generate_unified_diff, py::arg("old_text"),
          py::arg("new_text"), py::arg("path"), py::arg("context") = 3);
    m.def("apply_unified_diff", &diff::apply_unified_diff, py::arg("old_text"),
          py::arg("diff_text"));

    // --- metrics --------------------------------------------------------
    m.def(
        "precision",
        [](const std::map<std::string, std::vector<int>>& modified,
           const std::map<std::string, std::vector<int>>& gold) {
            return scoring::precision(line_set_from(modified), line_set_from(gold));
        },
        py::arg("modified"), py::arg("gold"));
    m.def(
        "pass_at_1",
        [](const std::vector<py::dict>& records, int llm_budget, int test_budget) {
            return scoring::pass_at_1(set_from_py(records, {}), llm_budget, test_budget);
        },
        py::arg("records"), py::arg("llm_budget"), py::arg("test_budget"));
    m.def(
        "prec_at_1",
        [](const std::vector<py::dict>& records,
           const std::map<std::string, std::map<std::string, std::vector<int>>>& golds,
           int llm_budget, int test_budget) {
            return scoring::prec_at_1(set_from_py(records, golds), llm_budget, test_budget);
        },
        py::arg("records"), py::arg("golds"), py::arg("llm_budget"), py::arg("test_budget"));
    m.def(
        "sweep_pass_at_1",
        [](const std::vector<py::dict>& records, int llm_budget_max, int test_budget) {
            return scoring::sweep_pass_at_1(set_from_py(records, {}), llm_budget_max,
                                            test_budget);
        },
        py::arg("records"), py::arg("llm_budget_max"), py::arg("test_budget"));
    m.def(
        "cost",
        [](std::int64_t tokens_in, std::int64_t tokens_out, const std::string& price_in,
           const std::string& price_out) {
            scoring::RunRecord record;
            record.tokens_in = tokens_in;
            record.tokens_out = tokens_out;
            scoring::Tariff tariff{num::Decimal::parse(price_in), num::Decimal::parse(price_out)};
            return scoring::cost(record, tariff).to_string();
        },
        py::arg("tokens_in"), py::arg("tokens_out"), py::arg("price_in"), py::arg("price_out"),
        "Exact decimal cost as a string.");

    // --- triage ---------------------------------------------------------
    m.def(
        "triage_verdict",
        [](const std::string& log, bool timed_out) {
            return std::string(triage::to_string(triage::triage_verdict(timed_out, log)));
        },
        py::arg("log"), py::arg("timed_out") = false);
}
