#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/mock_index.hpp"
#include "timegate/chat.hpp"
#include "timegate/diff.hpp"
#include "timegate/fsutil.hpp"
#include "timegate/pilot.hpp"

using namespace timegate;
using namespace timegate::pilot;
using timegate::chat::ChatReply;
using timegate::chat::ScriptedChatPort;
using timegate::testsupport::TempDir;
using nlohmann::json;

namespace fs = std::filesystem;

TEST_SUITE_BEGIN("pilot");

TEST_CASE("line splitting ignores the trailing newline and strips CR") {
    CHECK(split_lines("") == std::vector<std::string>{});
    CHECK(split_lines("x") == std::vector<std::string>{"x"});
    CHECK(split_lines("a\nb") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("a\r\nb\r\n") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("\n\n") == std::vector<std::string>{"", ""});

    CHECK(tail_lines("1\n2\n3\n4\n", 2) == std::vector<std::string>{"3", "4"});
    CHECK(tail_lines("1\n2\n", 5) == std::vector<std::string>{"1", "2"});
    CHECK(tail_lines("", 3) == std::vector<std::string>{});
}

TEST_CASE("path translation confines tool paths to the workspace") {
    TempDir dir;
    Workspace ws;
    ws.host_root = dir.path();
    fs::create_directories(ws.host_root / "src");
    write_text_file(ws.host_root / "src" / "a.py", "pass\n");

    CHECK(translate_path(ws, "/work/src/a.py") == ws.host_root / "src/a.py");
    CHECK(translate_path(ws, "src/a.py") == ws.host_root / "src/a.py");
    CHECK(fs::weakly_canonical(translate_path(ws, "/work")) ==
          fs::weakly_canonical(ws.host_root));
    CHECK(translate_path(ws, "src/../src/a.py") == ws.host_root / "src/a.py");

    CHECK_THROWS_AS(translate_path(ws, "/etc/passwd"), PathEscape);
    CHECK_THROWS_AS(translate_path(ws, "../outside.py"), PathEscape);
    CHECK_THROWS_AS(translate_path(ws, "/work/../etc/passwd"), PathEscape);
    CHECK_THROWS_AS(translate_path(ws, "src/../../victim"), PathEscape);
    // A workspace prefix that is not the /work directory itself must not match.
    CHECK_THROWS_AS(translate_path(ws, "/workspace/a.py"), PathEscape);

    fs::create_symlink("/usr", ws.host_root / "sneaky");
    CHECK_THROWS_AS(translate_path(ws, "sneaky/bin/env"), PathEscape);
}

namespace {

// A workspace with a known file layout, a protected test file, and a canned
// test runner whose verdict flips on the content of app.py.
struct HostFixture {
    TempDir dir;
    Workspace ws;
    int runner_calls = 0;
    bool runner_throws = false;
    bool time_out_runs = false;

    static constexpr const char* k_app_text =
        "import helpers\n"
        "\n"
        "\n"
        "def run():\n"
        "    return helpers.legacy_name()\n";

    HostFixture() {
        ws.host_root = dir.path();
        ws.test_files = {"tests/test_app.py"};
        write_text_file(ws.host_root / "app.py", k_app_text);
        write_text_file(ws.host_root / "helpers.py", "def fresh_name():\n    return 42\n");
        fs::create_directories(ws.host_root / "tests");
        write_text_file(ws.host_root / "tests" / "test_app.py",
                        "import unittest\n"
                        "import app\n"
                        "\n"
                        "class T(unittest.TestCase):\n"
                        "    def test_run(self):\n"
                        "        self.assertEqual(app.run(), 42)\n");
        std::string big;
        for (int i = 1; i <= 200; ++i) big += "line " + std::to_string(i) + "\n";
        write_text_file(ws.host_root / "big.py", big);
    }

    ToolHost::TestRunner runner() {
        return [this]() {
            ++runner_calls;
            if (runner_throws) throw std::runtime_error("container vanished");
            forge::TestRun run;
            run.timed_out = time_out_runs;
            std::string app = read_text_file(ws.host_root / "app.py");
            if (app.find("fresh_name") != std::string::npos) {
                run.exit_status = 0;
                run.log = "Ran 1 test in 0.001s\n\nOK\n";
            } else {
                run.exit_status = 1;
                run.log =
                    "Traceback (most recent call last):\n"
                    "  File \"/work/app.py\", line 5, in run\n"
                    "    return helpers.legacy_name()\n"
                    "AttributeError: module 'helpers' has no attribute 'legacy_name'\n"
                    "FAILED (errors=1)\n";
            }
            return run;
        };
    }

    ToolHost host() { return ToolHost(ws, runner()); }
};

int count_lines(const std::string& text) {
    return static_cast<int>(split_lines(text).size());
}

} // namespace

TEST_CASE("list_dir returns sorted names with directory markers") {
    HostFixture fx;
    ToolHost host = fx.host();

    ToolResult r = host.list_dir("/work");
    REQUIRE(r.ok);
    CHECK(r.body == "app.py\nbig.py\nhelpers.py\ntests/");

    ToolResult sub = host.list_dir("tests");
    REQUIRE(sub.ok);
    CHECK(sub.body == "test_app.py");

    ToolResult bad = host.list_dir("app.py");
    CHECK(!bad.ok);
    CHECK(bad.error_kind == "NotADirectory");

    ToolResult escape = host.list_dir("/etc");
    CHECK(!escape.ok);
    CHECK(escape.error_kind == "PathEscape");
}

TEST_CASE("search_dir lists files whose lines match the pattern") {
    HostFixture fx;
    ToolHost host = fx.host();

    ToolResult r = host.search_dir("legacy_name", "/work");
    REQUIRE(r.ok);
    CHECK(r.body == "app.py");

    ToolResult multi = host.search_dir("import", "/work");
    REQUIRE(multi.ok);
    CHECK(multi.body == "app.py\ntests/test_app.py");

    CHECK(host.search_dir("no_such_token_anywhere", "/work").body.empty());
    CHECK(host.search_dir("(", "/work").error_kind == "RegexError");
    CHECK(host.search_dir("x", "/work/app.py").error_kind == "NotADirectory");
}

TEST_CASE("search_file returns numbered matching lines") {
    HostFixture fx;
    ToolHost host = fx.host();

    ToolResult r = host.search_file("helpers", "/work/app.py");
    REQUIRE(r.ok);
    CHECK(r.body == "1: import helpers\n5:     return helpers.legacy_name()");

    CHECK(host.search_file("zzz", "app.py").body.empty());
    CHECK(host.search_file("x", "absent.py").error_kind == "FileNotFound");
    CHECK(host.search_file("[", "app.py").error_kind == "RegexError");
}

TEST_CASE("view_file shows a 50-before/50-after window") {
    HostFixture fx;
    ToolHost host = fx.host();

    SUBCASE("an interior line gets the full 101-line window") {
        ToolResult r = host.view_file("big.py", 100);
        REQUIRE(r.ok);
        std::vector<std::string> lines = split_lines(r.body);
        REQUIRE(lines.size() == 101);
        CHECK(lines.front() == "50: line 50");
        CHECK(lines.back() == "150: line 150");
    }
    SUBCASE("windows clamp at the start of the file") {
        ToolResult r = host.view_file("big.py", 1);
        std::vector<std::string> lines = split_lines(r.body);
        REQUIRE(lines.size() == 51);
        CHECK(lines.front() == "1: line 1");
        CHECK(lines.back() == "51: line 51");
    }
    SUBCASE("windows clamp at the end of the file") {
        ToolResult r = host.view_file("big.py", 180);
        std::vector<std::string> lines = split_lines(r.body);
        REQUIRE(lines.size() == 71);
        CHECK(lines.front() == "130: line 130");
        CHECK(lines.back() == "200: line 200");
    }
    SUBCASE("past-the-end lines get a note and the final window") {
        ToolResult r = host.view_file("big.py", 500);
        REQUIRE(r.ok);
        std::vector<std::string> lines = split_lines(r.body);
        CHECK(lines.front() ==
              "note: line 500 is past the end (200 lines); showing the final window");
        REQUIRE(lines.size() == 52);
        CHECK(lines[1] == "150: line 150");
        CHECK(lines.back() == "200: line 200");
    }
    SUBCASE("line numbers below one are range errors") {
        CHECK(host.view_file("big.py", 0).error_kind == "RangeError");
        CHECK(host.view_file("big.py", -3).error_kind == "RangeError");
    }
    SUBCASE("empty files say so") {
        write_text_file(fx.ws.host_root / "empty.py", "");
        ToolResult r = host.view_file("empty.py", 1);
        REQUIRE(r.ok);
        CHECK(r.body == "(file is empty)");
    }
    SUBCASE("missing files are reported") {
        CHECK(host.view_file("ghost.py", 1).error_kind == "FileNotFound");
    }
}

TEST_CASE("edit_file replaces a line range and journals the prior content") {
    HostFixture fx;
    ToolHost host = fx.host();

    ToolResult r = host.edit_file("/work/app.py", 5, 5, "    return helpers.fresh_name()");
    REQUIRE(r.ok);
    CHECK(r.body ==
          "updated app.py (replaced lines 5-5 with 1 lines)\n"
          "2: \n"
          "3: \n"
          "4: def run():\n"
          "5:     return helpers.fresh_name()");
    CHECK(read_text_file(fx.ws.host_root / "app.py") ==
          "import helpers\n\n\ndef run():\n    return helpers.fresh_name()\n");
    CHECK(host.journal_depth() == 1);

    SUBCASE("multi-line replacements grow the file") {
        ToolResult grow = host.edit_file("app.py", 4, 5, "def run():\n    x = 1\n    return x");
        REQUIRE(grow.ok);
        CHECK(count_lines(read_text_file(fx.ws.host_root / "app.py")) == 6);
        CHECK(host.journal_depth() == 2);
    }
    SUBCASE("an empty replacement deletes the range") {
        ToolResult del = host.edit_file("app.py", 2, 3, "");
        REQUIRE(del.ok);
        CHECK(del.body.find("with 0 lines") != std::string::npos);
        CHECK(read_text_file(fx.ws.host_root / "app.py") ==
              "import helpers\ndef run():\n    return helpers.fresh_name()\n");
    }
    SUBCASE("files without a final newline stay that way") {
        write_text_file(fx.ws.host_root / "raw.txt", "a\nb");
        ToolResult raw = host.edit_file("raw.txt", 1, 1, "A");
        REQUIRE(raw.ok);
        CHECK(read_text_file(fx.ws.host_root / "raw.txt") == "A\nb");
    }
    SUBCASE("bad ranges are rejected without touching the file") {
        std::string before = read_text_file(fx.ws.host_root / "app.py");
        CHECK(host.edit_file("app.py", 0, 1, "x").error_kind == "RangeError");
        CHECK(host.edit_file("app.py", 3, 2, "x").error_kind == "RangeError");
        CHECK(host.edit_file("app.py", 1, 99, "x").error_kind == "RangeError");
        CHECK(read_text_file(fx.ws.host_root / "app.py") == before);
        CHECK(host.journal_depth() == 1);
    }
    SUBCASE("missing files are reported") {
        CHECK(host.edit_file("ghost.py", 1, 1, "x").error_kind == "FileNotFound");
    }
}

TEST_CASE("the guard refuses every route to a protected test file") {
    HostFixture fx;
    ToolHost host = fx.host();
    std::string before = read_text_file(fx.ws.host_root / "tests" / "test_app.py");

    CHECK(host.edit_file("/work/tests/test_app.py", 1, 1, "x").error_kind == "GuardViolation");
    CHECK(host.edit_file("tests/test_app.py", 1, 1, "x").error_kind == "GuardViolation");
    CHECK(host.edit_file("tests/../tests/test_app.py", 1, 1, "x").error_kind == "GuardViolation");
    CHECK(host.replace_all_in_file("tests/test_app.py", "assertEqual", "assertTrue").error_kind ==
          "GuardViolation");

    // A symlink to the protected file is caught by canonical comparison.
    fs::create_symlink(fx.ws.host_root / "tests" / "test_app.py", fx.ws.host_root / "alias.py");
    CHECK(host.edit_file("alias.py", 1, 1, "x").error_kind == "GuardViolation");
    CHECK(host.replace_all_in_file("alias.py", "a", "b").error_kind == "GuardViolation");

    CHECK(read_text_file(fx.ws.host_root / "tests" / "test_app.py") == before);
    CHECK(host.journal_depth() == 0);
}

TEST_CASE("replace_all_in_file rewrites every match with backreferences") {
    HostFixture fx;
    ToolHost host = fx.host();
    write_text_file(fx.ws.host_root / "multi.py",
                    "legacy_name()\nlegacy_call()\nnothing\nlegacy_name()\n");

    ToolResult r = host.replace_all_in_file("multi.py", "legacy_(\\w+)", "fresh_$1");
    REQUIRE(r.ok);
    CHECK(r.body == "3 occurrences replaced in multi.py");
    CHECK(read_text_file(fx.ws.host_root / "multi.py") ==
          "fresh_name()\nfresh_call()\nnothing\nfresh_name()\n");
    CHECK(host.journal_depth() == 1);

    SUBCASE("zero matches do not journal") {
        ToolResult none = host.replace_all_in_file("multi.py", "absent_token", "x");
        REQUIRE(none.ok);
        CHECK(none.body == "0 occurrences replaced");
        CHECK(host.journal_depth() == 1);
    }
    SUBCASE("invalid patterns are reported") {
        CHECK(host.replace_all_in_file("multi.py", "(", "x").error_kind == "RegexError");
    }
    SUBCASE("missing files are reported") {
        CHECK(host.replace_all_in_file("ghost.py", "a", "b").error_kind == "FileNotFound");
    }
}

TEST_CASE("revert_last unwinds edits newest-first, byte for byte") {
    HostFixture fx;
    ToolHost host = fx.host();
    const std::string original = read_text_file(fx.ws.host_root / "app.py");

    REQUIRE(host.edit_file("app.py", 5, 5, "    return helpers.fresh_name()").ok);
    const std::string after_first = read_text_file(fx.ws.host_root / "app.py");
    REQUIRE(host.replace_all_in_file("app.py", "helpers", "aides").ok);
    CHECK(host.journal_depth() == 2);

    ToolResult r1 = host.revert_last();
    REQUIRE(r1.ok);
    CHECK(r1.body == "reverted last edit to app.py");
    CHECK(read_text_file(fx.ws.host_root / "app.py") == after_first);

    ToolResult r2 = host.revert_last();
    REQUIRE(r2.ok);
    CHECK(read_text_file(fx.ws.host_root / "app.py") == original);
    CHECK(host.journal_depth() == 0);

    ToolResult r3 = host.revert_last();
    CHECK(!r3.ok);
    CHECK(r3.error_kind == "NothingToRevert");
}

TEST_CASE("test execution stores the log and reports the tail") {
    HostFixture fx;
    ToolHost host = fx.host();
    CHECK(!host.has_test_log());
    CHECK(host.search_last_log("x").error_kind == "NoLogAvailable");
    CHECK(host.view_last_log(1).error_kind == "NoLogAvailable");

    ToolResult fail = host.execute_tests();
    REQUIRE(fail.ok);
    CHECK(host.tests_run() == 1);
    CHECK(host.has_test_log());
    CHECK(!host.last_test_passed());
    CHECK(fail.body.find("AttributeError") != std::string::npos);
    std::vector<std::string> lines = split_lines(fail.body);
    CHECK(lines.back() == "exit status: 1");

    SUBCASE("the fix flips the verdict") {
        REQUIRE(host.edit_file("app.py", 5, 5, "    return helpers.fresh_name()").ok);
        ToolResult pass = host.execute_tests();
        REQUIRE(pass.ok);
        CHECK(host.tests_run() == 2);
        CHECK(host.last_test_passed());
        CHECK(split_lines(pass.body).back() == "exit status: 0");
    }
    SUBCASE("seeding stores a log without spending budget") {
        ToolHost fresh = fx.host();
        ToolResult seed = fresh.seed_tests();
        REQUIRE(seed.ok);
        CHECK(fresh.tests_run() == 0);
        CHECK(fresh.has_test_log());
    }
    SUBCASE("timeouts are flagged in the observation and fail the run") {
        fx.time_out_runs = true;
        REQUIRE(host.edit_file("app.py", 5, 5, "    return helpers.fresh_name()").ok);
        ToolResult run = host.execute_tests();
        REQUIRE(run.ok);
        CHECK(split_lines(run.body).back() == "exit status: 0 (timed out)");
        CHECK(!host.last_test_passed());
    }
    SUBCASE("a dead sandbox is a tool error, not a crash") {
        fx.runner_throws = true;
        ToolResult dead = host.execute_tests();
        CHECK(!dead.ok);
        CHECK(dead.error_kind == "SandboxError");
        CHECK(host.tests_run() == 1); // the throwing attempt is not counted
    }
}

TEST_CASE("the log tools window and search the stored log") {
    HostFixture fx;
    ToolHost host = fx.host();
    REQUIRE(host.execute_tests().ok);

    ToolResult hits = host.search_last_log("AttributeError");
    REQUIRE(hits.ok);
    CHECK(hits.body == "4: AttributeError: module 'helpers' has no attribute 'legacy_name'");
    CHECK(host.search_last_log("[").error_kind == "RegexError");

    ToolResult window = host.view_last_log(1);
    REQUIRE(window.ok);
    CHECK(split_lines(window.body).front() == "1: Traceback (most recent call last):");

    ToolResult past = host.view_last_log(400);
    REQUIRE(past.ok);
    CHECK(past.body.rfind("note: line 400 is past the end", 0) == 0);
}

TEST_CASE("the test-log tail is exactly the last hundred lines") {
    TempDir dir;
    Workspace ws;
    ws.host_root = dir.path();
    write_text_file(ws.host_root / "app.py", "pass\n");
    ToolHost host(ws, []() {
        forge::TestRun run;
        run.exit_status = 1;
        for (int i = 1; i <= 250; ++i) run.log += "L" + std::to_string(i) + "\n";
        return run;
    });
    ToolResult r = host.execute_tests();
    REQUIRE(r.ok);
    std::vector<std::string> lines = split_lines(r.body);
    REQUIRE(lines.size() == 101); // 100 log lines + the exit-status line
    CHECK(lines.front() == "L151");
    CHECK(lines[99] == "L250");
    CHECK(lines.back() == "exit status: 1");
}

TEST_CASE("dispatch routes wire names and validates arguments") {
    HostFixture fx;
    ToolHost host = fx.host();

    SUBCASE("happy-path routing") {
        ToolResult r = host.dispatch("view_file", R"({"file_path":"app.py","line_no":1})");
        REQUIRE(r.ok);
        CHECK(r.body.find("1: import helpers") != std::string::npos);

        CHECK(host.dispatch("list_dir", "{}").body == "app.py\nbig.py\nhelpers.py\ntests/");
        CHECK(host.dispatch("list_dir", "").body == "app.py\nbig.py\nhelpers.py\ntests/");
        CHECK(host.dispatch("search_dir", R"({"regex_pattern":"fresh_name"})").body ==
              "helpers.py");
        CHECK(host.dispatch("search_file",
                            R"({"regex_pattern":"def","file_path":"helpers.py"})")
                  .body == "1: def fresh_name():");
        CHECK(host.dispatch("execute_tests", "{}").ok);
        CHECK(host.dispatch("search_last_log", R"({"regex_pattern":"FAILED"})").ok);
        CHECK(host.dispatch("view_last_log", R"({"line_no":1})").ok);
        CHECK(host.dispatch("edit_file",
                            R"js({"file_path":"app.py","start_line":5,"end_line":5,)js"
                            R"js("replacement_text":"    return helpers.fresh_name()"})js")
                  .ok);
        CHECK(host.dispatch("replace_all_in_file",
                            R"({"file_path":"app.py","regex_pattern":"fresh",)"
                            R"("replacement_string":"fresh"})")
                  .ok);
        CHECK(host.dispatch("revert_last", "{}").ok);
    }
    SUBCASE("integer arguments tolerate numeric strings") {
        CHECK(host.dispatch("view_file", R"({"file_path":"app.py","line_no":"2"})").ok);
        ToolResult bad = host.dispatch("view_file", R"({"file_path":"app.py","line_no":"two"})");
        CHECK(bad.error_kind == "BadArguments");
    }
    SUBCASE("missing and mistyped arguments are BadArguments") {
        CHECK(host.dispatch("search_dir", "{}").error_kind == "BadArguments");
        CHECK(host.dispatch("view_file", R"({"file_path":"app.py"})").error_kind ==
              "BadArguments");
        CHECK(host.dispatch("view_file", R"({"file_path":7,"line_no":1})").error_kind ==
              "BadArguments");
    }
    SUBCASE("non-object argument payloads are BadArguments") {
        CHECK(host.dispatch("list_dir", "[1,2]").error_kind == "BadArguments");
        CHECK(host.dispatch("list_dir", "not json").error_kind == "BadArguments");
    }
    SUBCASE("unknown tools are reported by name") {
        ToolResult r = host.dispatch("rm_rf", "{}");
        CHECK(!r.ok);
        CHECK(r.error_kind == "UnknownTool");
        CHECK(r.body.find("rm_rf") != std::string::npos);
    }
}

TEST_CASE("the tool catalog exposes ten schemas with valid parameter JSON") {
    std::vector<chat::ToolSchema> schemas = ToolHost::tool_schemas();
    REQUIRE(schemas.size() == 10);
    std::vector<std::string> names;
    for (const chat::ToolSchema& schema : schemas) {
        names.push_back(schema.name);
        CHECK(!schema.description.empty());
        json parameters = json::parse(schema.parameters_json);
        CHECK(parameters["type"] == "object");
        CHECK(parameters.contains("properties"));
        CHECK(parameters.contains("required"));
    }
    CHECK(names == std::vector<std::string>{"list_dir", "search_dir", "search_file", "view_file",
                                            "edit_file", "replace_all_in_file", "revert_last",
                                            "execute_tests", "search_last_log", "view_last_log"});

    json view_file_params = json::parse(schemas[3].parameters_json);
    CHECK(view_file_params["required"] == json::array({"file_path", "line_no"}));
    CHECK(view_file_params["properties"]["line_no"]["type"] == "integer");
}

namespace {

Turn make_turn(int index, bool with_tool, bool is_test = false) {
    Turn turn;
    turn.index = index;
    turn.reasoning = "thought " + std::to_string(index);
    if (with_tool) turn.tool_call = chat::ToolCall{"list_dir", "{}"};
    turn.observation = "obs " + std::to_string(index);
    turn.is_test_turn = is_test;
    return turn;
}

Trajectory make_trajectory(int turn_count, std::optional<int> test_turn) {
    Trajectory t;
    t.initial_observation = "initial failing log";
    for (int i = 1; i <= turn_count; ++i)
        t.turns.push_back(make_turn(i, true, test_turn && *test_turn == i));
    t.last_test_turn = test_turn;
    return t;
}

} // namespace

TEST_CASE("history compaction keeps five full observations and drops pre-test turns") {
    SUBCASE("short histories are untouched") {
        std::vector<Turn> turns = compacted_turns(make_trajectory(3, std::nullopt));
        REQUIRE(turns.size() == 3);
        for (const Turn& turn : turns) {
            CHECK(!turn.collapsed);
            CHECK(turn.observation == "obs " + std::to_string(turn.index));
        }
    }
    SUBCASE("exactly five turns keep all observations") {
        std::vector<Turn> turns = compacted_turns(make_trajectory(5, std::nullopt));
        REQUIRE(turns.size() == 5);
        for (const Turn& turn : turns) CHECK(!turn.collapsed);
    }
    SUBCASE("older observations collapse to the placeholder") {
        std::vector<Turn> turns = compacted_turns(make_trajectory(8, std::nullopt));
        REQUIRE(turns.size() == 8);
        for (const Turn& turn : turns) {
            if (turn.index < 4) {
                CHECK(turn.collapsed);
                CHECK(turn.observation == k_collapsed_placeholder);
                CHECK(turn.reasoning == "thought " + std::to_string(turn.index));
            } else {
                CHECK(!turn.collapsed);
                CHECK(turn.observation == "obs " + std::to_string(turn.index));
            }
        }
    }
    SUBCASE("turns before the last test run are dropped entirely") {
        std::vector<Turn> turns = compacted_turns(make_trajectory(8, 6));
        REQUIRE(turns.size() == 3);
        CHECK(turns[0].index == 6);
        CHECK(turns[2].index == 8);
        for (const Turn& turn : turns) CHECK(!turn.collapsed);
    }
    SUBCASE("a test on the final turn leaves only that turn") {
        std::vector<Turn> turns = compacted_turns(make_trajectory(8, 8));
        REQUIRE(turns.size() == 1);
        CHECK(turns[0].index == 8);
        CHECK(!turns[0].collapsed);
    }
    SUBCASE("compaction is idempotent") {
        Trajectory t = make_trajectory(10, std::nullopt);
        std::vector<Turn> once = compacted_turns(t);
        Trajectory again = t;
        again.turns = once;
        std::vector<Turn> twice = compacted_turns(again);
        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) {
            CHECK(once[i].observation == twice[i].observation);
            CHECK(once[i].collapsed == twice[i].collapsed);
        }
    }
}

TEST_CASE("compacted histories serialize to chat messages") {
    SUBCASE("short runs keep the initial observation verbatim") {
        std::vector<chat::Message> messages =
            compact_history(make_trajectory(3, std::nullopt), "SYSTEM", "CONTEXT");
        REQUIRE(messages.size() == 2 + 2 * 3);
        CHECK(messages[0].role == chat::Role::System);
        CHECK(messages[0].content == "SYSTEM\n\nCONTEXT");
        CHECK(messages[1].role == chat::Role::User);
        CHECK(messages[1].content == "initial failing log");
        CHECK(messages[2].role == chat::Role::Assistant);
        REQUIRE(messages[2].tool_call.has_value());
        CHECK(messages[3].role == chat::Role::Tool);
        CHECK(messages[3].content == "obs 1");
    }
    SUBCASE("long runs collapse the initial observation") {
        std::vector<chat::Message> messages =
            compact_history(make_trajectory(6, std::nullopt), "SYSTEM", "");
        CHECK(messages[0].content == "SYSTEM");
        CHECK(messages[1].role == chat::Role::User);
        CHECK(messages[1].content == k_collapsed_placeholder);
    }
    SUBCASE("a test run removes the initial observation entirely") {
        std::vector<chat::Message> messages =
            compact_history(make_trajectory(8, 6), "SYSTEM", "");
        REQUIRE(messages.size() == 1 + 2 * 3);
        CHECK(messages[1].role == chat::Role::Assistant);
    }
    SUBCASE("turns without a tool call read back as user corrections") {
        Trajectory t;
        t.turns.push_back(make_turn(1, false));
        std::vector<chat::Message> messages = compact_history(t, "S", "");
        REQUIRE(messages.size() == 3);
        CHECK(!messages[1].tool_call.has_value());
        CHECK(messages[2].role == chat::Role::User);
    }
}

TEST_CASE("workspace snapshots diff into a cumulative patch") {
    TempDir dir;
    write_text_file(fs::path(dir.path()) / "a.py", "one\ntwo\n");
    write_text_file(fs::path(dir.path()) / "b.py", "keep\n");

    std::map<std::string, std::string> before = snapshot_workspace(dir.path());
    REQUIRE(before.size() == 2);
    CHECK(before.at("a.py") == "one\ntwo\n");

    write_text_file(fs::path(dir.path()) / "a.py", "one\nTWO\n");
    write_text_file(fs::path(dir.path()) / "c.py", "new file\n");
    std::map<std::string, std::string> after = snapshot_workspace(dir.path());

    std::string patch = cumulative_patch(before, after);
    CHECK(patch.find("--- a/a.py") != std::string::npos);
    CHECK(patch.find("+++ b/a.py") != std::string::npos);
    CHECK(patch.find("-two") != std::string::npos);
    CHECK(patch.find("+TWO") != std::string::npos);
    CHECK(patch.find("+new file") != std::string::npos);
    // b.py is unchanged and so absent from the patch.
    CHECK(patch.find("b.py") == std::string::npos);

    auto modified = diff::modified_lines(diff::parse_unified_diff(patch));
    REQUIRE(modified.count("a.py") == 1);
    CHECK(modified.at("a.py") == std::set<int>{2});

    CHECK(cumulative_patch(before, before).empty());
}

namespace {

ScriptedChatPort fixing_script() {
    ChatReply look;
    look.reasoning = "inspect the failing call";
    look.tool_call = chat::ToolCall{"view_file", R"({"file_path":"/work/app.py","line_no":5})"};
    look.usage = {100, 10};

    ChatReply fix;
    fix.reasoning = "replace the removed helper";
    fix.tool_call = chat::ToolCall{
        "edit_file",
        R"js({"file_path":"/work/app.py","start_line":5,"end_line":5,)js"
        R"js("replacement_text":"    return helpers.fresh_name()"})js"};
    fix.usage = {120, 25};

    ChatReply verify;
    verify.reasoning = "re-run the tests";
    verify.tool_call = chat::ToolCall{"execute_tests", "{}"};
    verify.usage = {90, 5};

    return ScriptedChatPort({look, fix, verify});
}

} // namespace

TEST_CASE("a scripted trajectory fixes the bug and records its costs") {
    HostFixture fx;
    ToolHost host = fx.host();
    ScriptedChatPort chat_port = fixing_script();

    TrajectoryOptions options;
    options.llm_budget = 10;
    options.test_budget = 5;
    options.system_prompt = "You repair repositories.";

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);

    CHECK(outcome.diagnostic.empty());
    CHECK(outcome.record.task_id == "demo-task");
    CHECK(outcome.record.result == scoring::RunResult::Success);
    CHECK(outcome.record.llm_calls == 3);
    CHECK(outcome.record.test_execs == 1);
    CHECK(outcome.record.tokens_in == 310);
    CHECK(outcome.record.tokens_out == 40);

    auto modified = diff::modified_lines(diff::parse_unified_diff(outcome.record.final_patch));
    REQUIRE(modified.count("app.py") == 1);
    CHECK(modified.at("app.py") == std::set<int>{5});

    const Trajectory& t = outcome.trajectory;
    REQUIRE(t.turns.size() == 3);
    CHECK(t.initial_observation.find("exit status: 1") != std::string::npos);
    CHECK(t.turns[0].observation.find("5:     return helpers.legacy_name()") !=
          std::string::npos);
    CHECK(t.turns[2].is_test_turn);
    CHECK(t.last_test_turn == 3);
    // Seed run plus one budgeted run.
    CHECK(fx.runner_calls == 2);
}

TEST_CASE("trajectories stop at the call budget with corrective observations") {
    HostFixture fx;
    ToolHost host = fx.host();
    ScriptedChatPort chat_port({}); // immediately exhausted: no tool calls ever

    TrajectoryOptions options;
    options.llm_budget = 3;
    options.test_budget = 5;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(outcome.record.result == scoring::RunResult::Failure);
    CHECK(outcome.record.llm_calls == 3);
    CHECK(outcome.record.test_execs == 0);
    REQUIRE(outcome.trajectory.turns.size() == 3);
    for (const Turn& turn : outcome.trajectory.turns) {
        CHECK(!turn.tool_call.has_value());
        CHECK(turn.observation == k_corrective_observation);
    }
    CHECK(outcome.record.final_patch.empty());
}

TEST_CASE("trajectories stop when the test budget is spent") {
    HostFixture fx;
    ToolHost host = fx.host();

    ChatReply test_again;
    test_again.reasoning = "try the tests";
    test_again.tool_call = chat::ToolCall{"execute_tests", "{}"};
    ScriptedChatPort chat_port({test_again, test_again, test_again});

    TrajectoryOptions options;
    options.llm_budget = 10;
    options.test_budget = 2;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(outcome.record.result == scoring::RunResult::Failure);
    CHECK(outcome.record.test_execs == 2);
    CHECK(outcome.record.llm_calls == 2);
    REQUIRE(outcome.trajectory.turns.size() == 2);
    CHECK(outcome.trajectory.turns[1].is_test_turn);
}

TEST_CASE("a zero test budget refuses the first execution attempt") {
    HostFixture fx;
    ToolHost host = fx.host();
    ChatReply test_now;
    test_now.tool_call = chat::ToolCall{"execute_tests", "{}"};
    ScriptedChatPort chat_port({test_now});

    TrajectoryOptions options;
    options.llm_budget = 10;
    options.test_budget = 0;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(outcome.record.result == scoring::RunResult::Failure);
    CHECK(outcome.record.test_execs == 0);
    REQUIRE(outcome.trajectory.turns.size() == 1);
    CHECK(outcome.trajectory.turns[0].observation ==
          "error (BudgetExhausted): test execution budget exhausted");
}

TEST_CASE("trajectories record transcripts as JSONL") {
    HostFixture fx;
    ToolHost host = fx.host();
    ScriptedChatPort chat_port = fixing_script();
    TempDir out;

    TrajectoryOptions options;
    options.llm_budget = 10;
    options.test_budget = 5;
    options.transcript_path = out.path() + "/nested/transcript.jsonl";

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    REQUIRE(outcome.record.result == scoring::RunResult::Success);

    std::ifstream in(options.transcript_path);
    REQUIRE(in.good());
    std::vector<json> rows;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(json::parse(line));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0]["schema_version"] == 1);
    CHECK(rows[0]["index"] == 1);
    CHECK(rows[0]["tool"] == "view_file");
    CHECK(rows[0]["arguments"]["file_path"] == "/work/app.py");
    CHECK(rows[2]["tool"] == "execute_tests");
    CHECK(rows[2]["is_test_turn"] == true);
}

namespace {

struct ThrowingPort : chat::ChatPort {
    chat::ChatReply complete(const std::vector<chat::Message>&,
                             const std::vector<chat::ToolSchema>&) override {
        throw std::runtime_error("backend exploded");
    }
};

} // namespace

TEST_CASE("a dead chat backend ends the run with a diagnostic") {
    HostFixture fx;
    ToolHost host = fx.host();
    ThrowingPort chat_port;
    TrajectoryOptions options;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(outcome.record.result == scoring::RunResult::Failure);
    CHECK(outcome.record.llm_calls == 0);
    CHECK(outcome.diagnostic.find("backend exploded") != std::string::npos);
}

TEST_CASE("a sandbox that dies at seeding aborts before any calls") {
    HostFixture fx;
    fx.runner_throws = true;
    ToolHost host = fx.host();
    ScriptedChatPort chat_port = fixing_script();
    TrajectoryOptions options;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(!outcome.diagnostic.empty());
    CHECK(outcome.record.llm_calls == 0);
    CHECK(chat_port.calls_made() == 0);
}

TEST_CASE("a sandbox that dies mid-run surfaces the diagnostic") {
    TempDir dir;
    Workspace ws;
    ws.host_root = dir.path();
    write_text_file(ws.host_root / "app.py", "pass\n");

    // The seed run inside the trajectory succeeds; every later run throws.
    int calls = 0;
    ToolHost host(ws, [&calls]() {
        if (++calls > 1) throw std::runtime_error("container vanished");
        forge::TestRun run;
        run.exit_status = 1;
        run.log = "seed failure\n";
        return run;
    });

    ChatReply test_now;
    test_now.tool_call = chat::ToolCall{"execute_tests", "{}"};
    ScriptedChatPort chat_port({test_now, test_now});
    TrajectoryOptions options;

    TrajectoryOutcome outcome = run_trajectory("demo-task", host, chat_port, options);
    CHECK(outcome.record.result == scoring::RunResult::Failure);
    CHECK(outcome.record.llm_calls == 1);
    CHECK(outcome.diagnostic.find("container vanished") != std::string::npos);
    REQUIRE(outcome.trajectory.turns.size() == 1);
    CHECK(outcome.trajectory.turns[0].observation.find("SandboxError") != std::string::npos);
}

TEST_SUITE_END();
