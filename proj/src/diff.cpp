#include "timegate/diff.hpp"

#include <algorithm>
#include <regex>

namespace timegate::diff {

namespace {

struct FileLines {
    std::vector<std::string> lines;
    bool newline_at_eof = true;
};

FileLines split_file(const std::string& text) {
    FileLines out;
    if (text.empty()) return out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.lines.push_back(text.substr(pos));
            out.newline_at_eof = false;
            break;
        }
        out.lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

std::string strip_diff_label(const std::string& raw) {
    // Labels may carry a timestamp after a tab and an a/ or b/ prefix.
    std::string label = raw.substr(0, raw.find('\t'));
    if (label.rfind("a/", 0) == 0 || label.rfind("b/", 0) == 0) return label.substr(2);
    return label;
}

struct HunkHeader {
    int a_start = 0, a_count = 0, b_start = 0, b_count = 0;
};

bool parse_hunk_header(const std::string& line, HunkHeader& h) {
    static const std::regex re(R"(^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@.*$)");
    std::smatch m;
    if (!std::regex_match(line, m, re)) return false;
    h.a_start = std::stoi(m[1].str());
    h.a_count = m[2].matched ? std::stoi(m[2].str()) : 1;
    h.b_start = std::stoi(m[3].str());
    h.b_count = m[4].matched ? std::stoi(m[4].str()) : 1;
    return true;
}

// Accumulates -/+ runs and flushes them as grouped ops.
struct RunGrouper {
    std::string file;
    std::vector<EditOp>& ops;
    std::vector<int> minus_lines;
    std::vector<std::string> plus_text;
    int plus_anchor = 0; // pre-edit line the pending plus-run anchors at

    void flush() {
        if (!minus_lines.empty() && !plus_text.empty()) {
            ops.push_back({EditKind::Replacement, file, minus_lines, 0, plus_text});
        } else if (!minus_lines.empty()) {
            ops.push_back({EditKind::Deletion, file, minus_lines, 0, {}});
        } else if (!plus_text.empty()) {
            ops.push_back({EditKind::Addition, file, {}, plus_anchor, plus_text});
        }
        minus_lines.clear();
        plus_text.clear();
    }

    void on_minus(int pre_line) {
        // A completed +-run not preceded by minus lines is a standalone
        // Addition; a new minus run starts a fresh group.
        if (!plus_text.empty()) flush();
        minus_lines.push_back(pre_line);
    }

    void on_plus(int next_pre_line) {
        if (plus_text.empty() && minus_lines.empty()) plus_anchor = next_pre_line;
        // When minus lines are pending this plus-run completes a Replacement.
    }
};

} // namespace

std::vector<EditOp> parse_unified_diff(const std::string& text) {
    std::vector<EditOp> ops;
    FileLines diff = split_file(text);
    const std::vector<std::string>& lines = diff.lines;

    std::string current_file;
    bool have_file = false;

    std::size_t i = 0;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (line.rfind("--- ", 0) == 0) {
            if (i + 1 >= lines.size() || lines[i + 1].rfind("+++ ", 0) != 0)
                throw DiffParseError("file header without +++ line", static_cast<int>(i + 1));
            std::string minus_path = strip_diff_label(line.substr(4));
            std::string plus_path = strip_diff_label(lines[i + 1].substr(4));
            current_file = minus_path == "/dev/null" ? plus_path : minus_path;
            have_file = true;
            i += 2;
            continue;
        }
        HunkHeader h;
        if (line.rfind("@@", 0) == 0) {
            if (!parse_hunk_header(line, h))
                throw DiffParseError("malformed hunk header \"" + line + "\"",
                                     static_cast<int>(i + 1));
            if (!have_file)
                throw DiffParseError("hunk before any file header", static_cast<int>(i + 1));
            ++i;

            int pre_line = h.a_count == 0 ? h.a_start + 1 : h.a_start;
            int remaining_a = h.a_count;
            int remaining_b = h.b_count;
            RunGrouper grouper{current_file, ops, {}, {}, 0};

            while (remaining_a > 0 || remaining_b > 0) {
                if (i >= lines.size())
                    throw DiffParseError("hunk ends before declared line counts",
                                         static_cast<int>(i));
                const std::string& body = lines[i];
                char tag = body.empty() ? ' ' : body[0];
                switch (tag) {
                    case ' ': {
                        if (remaining_a <= 0 || remaining_b <= 0)
                            throw DiffParseError("context line exceeds declared counts",
                                                 static_cast<int>(i + 1));
                        grouper.flush();
                        --remaining_a;
                        --remaining_b;
                        ++pre_line;
                        break;
                    }
                    case '-': {
                        if (remaining_a <= 0)
                            throw DiffParseError("minus line exceeds declared count",
                                                 static_cast<int>(i + 1));
                        grouper.on_minus(pre_line);
                        --remaining_a;
                        ++pre_line;
                        break;
                    }
                    case '+': {
                        if (remaining_b <= 0)
                            throw DiffParseError("plus line exceeds declared count",
                                                 static_cast<int>(i + 1));
                        grouper.on_plus(pre_line);
                        grouper.plus_text.push_back(body.substr(1));
                        --remaining_b;
                        break;
                    }
                    case '\\': // "\ No newline at end of file"
                        break;
                    default:
                        throw DiffParseError("unexpected line inside hunk: \"" + body + "\"",
                                             static_cast<int>(i + 1));
                }
                ++i;
            }
            // Trailing no-newline marker belongs to the hunk.
            if (i < lines.size() && !lines[i].empty() && lines[i][0] == '\\') ++i;
            grouper.flush();
            continue;
        }
        ++i; // headers like "diff --git", "index ..." and unrelated prose
    }
    return ops;
}

ModifiedLineSet modified_lines(const std::vector<EditOp>& ops) {
    ModifiedLineSet out;
    for (const EditOp& op : ops) {
        std::set<int>& lines = out[op.file];
        if (op.kind == EditKind::Addition)
            lines.insert(op.anchor_line);
        else
            lines.insert(op.minus_lines.begin(), op.minus_lines.end());
    }
    return out;
}

namespace {

enum class StepOp { Keep, Del, Ins };

struct Step {
    StepOp op;
    int a_idx = -1; // 0-based index into the old side (Keep/Del)
    int b_idx = -1; // 0-based index into the new side (Keep/Ins)
};

// Myers O(ND) greedy diff over lines.
std::vector<Step> myers_script(const std::vector<std::string>& a,
                               const std::vector<std::string>& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    const int max = n + m;
    std::vector<Step> script;
    if (max == 0) return script;

    std::vector<std::vector<int>> trace;
    std::vector<int> v(2 * max + 1, 0);
    auto at = [&](std::vector<int>& vec, int k) -> int& { return vec[k + max]; };

    int depth = -1;
    for (int d = 0; d <= max && depth < 0; ++d) {
        trace.push_back(v);
        for (int k = -d; k <= d; k += 2) {
            int x;
            if (k == -d || (k != d && at(v, k - 1) < at(v, k + 1)))
                x = at(v, k + 1);
            else
                x = at(v, k - 1) + 1;
            int y = x - k;
            while (x < n && y < m && a[x] == b[y]) {
                ++x;
                ++y;
            }
            at(v, k) = x;
            if (x >= n && y >= m) {
                depth = d;
                break;
            }
        }
    }

    int x = n, y = m;
    for (int d = depth; d > 0; --d) {
        std::vector<int>& prev = trace[d];
        int k = x - y;
        int prev_k;
        if (k == -d || (k != d && at(prev, k - 1) < at(prev, k + 1)))
            prev_k = k + 1;
        else
            prev_k = k - 1;
        int prev_x = at(prev, prev_k);
        int prev_y = prev_x - prev_k;
        while (x > prev_x && y > prev_y) {
            script.push_back({StepOp::Keep, x - 1, y - 1});
            --x;
            --y;
        }
        if (x == prev_x) {
            script.push_back({StepOp::Ins, -1, y - 1});
            --y;
        } else {
            script.push_back({StepOp::Del, x - 1, -1});
            --x;
        }
    }
    while (x > 0 && y > 0) {
        script.push_back({StepOp::Keep, x - 1, y - 1});
        --x;
        --y;
    }
    std::reverse(script.begin(), script.end());
    return script;
}

} // namespace

std::string generate_unified_diff(const std::string& old_text, const std::string& new_text,
                                  const std::string& path, int context) {
    if (old_text == new_text) return "";
    FileLines a = split_file(old_text);
    FileLines b = split_file(new_text);
    // A final line without its newline must never match a line that has one,
    // or the no-newline marker would end up after a context line that the new
    // file continues past. Suffix such lines with the one character a split
    // line cannot contain so the match is decided by content and ending alike.
    std::vector<std::string> a_keys = a.lines;
    std::vector<std::string> b_keys = b.lines;
    if (!a.newline_at_eof) a_keys.back() += '\n';
    if (!b.newline_at_eof) b_keys.back() += '\n';
    std::vector<Step> script = myers_script(a_keys, b_keys);

    // Collect change regions as [begin, end) index ranges over the script,
    // widened by the context and merged when they touch.
    struct Range {
        int begin, end;
    };
    std::vector<Range> hunks;
    const int total = static_cast<int>(script.size());
    for (int i = 0; i < total; ++i) {
        if (script[i].op == StepOp::Keep) continue;
        int begin = std::max(0, i - context);
        int end = i + 1;
        while (end < total && script[end].op != StepOp::Keep) ++end;
        int padded_end = std::min(total, end + context);
        if (!hunks.empty() && begin <= hunks.back().end)
            hunks.back().end = padded_end;
        else
            hunks.push_back({begin, padded_end});
        i = end - 1;
    }
    std::string out = "--- a/" + path + "\n+++ b/" + path + "\n";
    for (const Range& hunk : hunks) {
        int a_count = 0, b_count = 0;
        for (int i = hunk.begin; i < hunk.end; ++i) {
            if (script[i].op != StepOp::Ins) ++a_count;
            if (script[i].op != StepOp::Del) ++b_count;
        }
        int a_before = 0, b_before = 0;
        for (int i = 0; i < hunk.begin; ++i) {
            if (script[i].op != StepOp::Ins) ++a_before;
            if (script[i].op != StepOp::Del) ++b_before;
        }
        int a_start = a_count == 0 ? a_before : a_before + 1;
        int b_start = b_count == 0 ? b_before : b_before + 1;

        out += "@@ -" + std::to_string(a_start);
        if (a_count != 1) out += "," + std::to_string(a_count);
        out += " +" + std::to_string(b_start);
        if (b_count != 1) out += "," + std::to_string(b_count);
        out += " @@\n";

        for (int i = hunk.begin; i < hunk.end; ++i) {
            const Step& s = script[i];
            switch (s.op) {
                case StepOp::Keep: out += " " + a.lines[s.a_idx] + "\n"; break;
                case StepOp::Del: out += "-" + a.lines[s.a_idx] + "\n"; break;
                case StepOp::Ins: out += "+" + b.lines[s.b_idx] + "\n"; break;
            }
            bool last_a = !a.newline_at_eof && s.op != StepOp::Ins &&
                          s.a_idx == static_cast<int>(a.lines.size()) - 1;
            bool last_b = !b.newline_at_eof && s.op != StepOp::Del &&
                          s.b_idx == static_cast<int>(b.lines.size()) - 1;
            if (last_a || last_b) out += "\\ No newline at end of file\n";
        }
    }
    return out;
}

std::string apply_unified_diff(const std::string& old_text, const std::string& diff_text) {
    FileLines old_file = split_file(old_text);
    FileLines patch = split_file(diff_text);
    const std::vector<std::string>& lines = patch.lines;

    std::vector<std::string> out;
    bool out_newline_at_eof = true;
    std::size_t cursor = 0; // 0-based index into old lines, next to copy

    auto old_line = [&](std::size_t idx, int at) -> const std::string& {
        if (idx >= old_file.lines.size())
            throw DiffParseError("patch refers past the end of the input", at);
        return old_file.lines[idx];
    };

    std::size_t i = 0;
    bool saw_hunk = false;
    while (i < lines.size()) {
        HunkHeader h;
        if (lines[i].rfind("--- ", 0) == 0) {
            i += 2; // header pair; single-file apply ignores the labels
            continue;
        }
        if (lines[i].rfind("@@", 0) != 0 || !parse_hunk_header(lines[i], h)) {
            ++i;
            continue;
        }
        saw_hunk = true;
        ++i;
        std::size_t copy_until = h.a_count == 0 ? static_cast<std::size_t>(h.a_start)
                                                : static_cast<std::size_t>(h.a_start - 1);
        if (copy_until < cursor)
            throw DiffParseError("hunks out of order", static_cast<int>(i));
        while (cursor < copy_until) out.push_back(old_line(cursor++, static_cast<int>(i)));

        int remaining_a = h.a_count, remaining_b = h.b_count;
        bool last_emit_was_plus_or_keep = false;
        while (remaining_a > 0 || remaining_b > 0) {
            if (i >= lines.size())
                throw DiffParseError("hunk ends before declared line counts",
                                     static_cast<int>(i));
            const std::string& body = lines[i];
            char tag = body.empty() ? ' ' : body[0];
            std::string content = body.empty() ? "" : body.substr(1);
            switch (tag) {
                case ' ':
                    if (old_line(cursor, static_cast<int>(i + 1)) != content)
                        throw DiffParseError("context mismatch at input line " +
                                                 std::to_string(cursor + 1),
                                             static_cast<int>(i + 1));
                    out.push_back(old_file.lines[cursor++]);
                    --remaining_a;
                    --remaining_b;
                    last_emit_was_plus_or_keep = true;
                    break;
                case '-':
                    if (old_line(cursor, static_cast<int>(i + 1)) != content)
                        throw DiffParseError("minus mismatch at input line " +
                                                 std::to_string(cursor + 1),
                                             static_cast<int>(i + 1));
                    ++cursor;
                    --remaining_a;
                    last_emit_was_plus_or_keep = false;
                    break;
                case '+':
                    out.push_back(content);
                    --remaining_b;
                    last_emit_was_plus_or_keep = true;
                    break;
                case '\\':
                    if (last_emit_was_plus_or_keep) out_newline_at_eof = false;
                    break;
                default:
                    throw DiffParseError("unexpected line inside hunk: \"" + body + "\"",
                                         static_cast<int>(i + 1));
            }
            ++i;
        }
        if (i < lines.size() && !lines[i].empty() && lines[i][0] == '\\') {
            if (last_emit_was_plus_or_keep) out_newline_at_eof = false;
            ++i;
        }
    }
    if (!saw_hunk && !diff_text.empty())
        throw DiffParseError("no hunks found in patch", 1);

    bool tail_copied = cursor < old_file.lines.size();
    while (cursor < old_file.lines.size()) out.push_back(old_file.lines[cursor++]);
    if (tail_copied) out_newline_at_eof = old_file.newline_at_eof;

    std::string result;
    for (std::size_t j = 0; j < out.size(); ++j) {
        result += out[j];
        if (j + 1 < out.size() || out_newline_at_eof) result += '\n';
    }
    return result;
}

} // namespace timegate::diff
