#include "timegate/verspec.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <functional>
#include <regex>
#include <sstream>

#include "timegate/embedded_data.hpp"
#include "timegate/fsutil.hpp"

namespace timegate::verspec {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool is_sep(char c) { return c == '.' || c == '-' || c == '_'; }

// Cursor over a lowercased version string.
struct Scanner {
    const std::string& s;
    std::size_t pos = 0;

    bool done() const { return pos >= s.size(); }
    char peek() const { return done() ? '\0' : s[pos]; }
    bool eat(char c) {
        if (peek() != c) return false;
        ++pos;
        return true;
    }
    bool eat_word(const char* w) {
        std::size_t n = std::strlen(w);
        if (s.compare(pos, n, w) != 0) return false;
        pos += n;
        return true;
    }
    std::optional<int> eat_number() {
        std::size_t start = pos;
        while (!done() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == start) return std::nullopt;
        if (pos - start > 9) throw VersionParseError("numeric segment too long in \"" + s + "\"");
        return std::stoi(s.substr(start, pos - start));
    }
};

std::optional<std::pair<PreKind, int>> scan_pre(Scanner& sc) {
    std::size_t mark = sc.pos;
    bool sep = !sc.done() && is_sep(sc.peek());
    if (sep) ++sc.pos;
    PreKind kind;
    if (sc.eat_word("alpha") || sc.eat_word("a"))
        kind = PreKind::Alpha;
    else if (sc.eat_word("beta") || sc.eat_word("b"))
        kind = PreKind::Beta;
    else if (sc.eat_word("rc") || sc.eat_word("preview") || sc.eat_word("pre") || sc.eat_word("c"))
        kind = PreKind::ReleaseCandidate;
    else {
        sc.pos = mark;
        return std::nullopt;
    }
    if (!sc.done() && is_sep(sc.peek())) ++sc.pos;
    int num = sc.eat_number().value_or(0);
    return std::make_pair(kind, num);
}

std::optional<int> scan_post(Scanner& sc) {
    std::size_t mark = sc.pos;
    if (sc.peek() == '-') { // implicit post release "1.0-1"
        ++sc.pos;
        if (auto n = sc.eat_number()) return n;
        sc.pos = mark;
        return std::nullopt;
    }
    bool sep = !sc.done() && is_sep(sc.peek());
    if (sep) ++sc.pos;
    if (!(sc.eat_word("post") || sc.eat_word("rev") || sc.eat_word("r"))) {
        sc.pos = mark;
        return std::nullopt;
    }
    if (!sc.done() && is_sep(sc.peek())) ++sc.pos;
    return sc.eat_number().value_or(0);
}

std::optional<int> scan_dev(Scanner& sc) {
    std::size_t mark = sc.pos;
    if (!sc.done() && is_sep(sc.peek())) ++sc.pos;
    if (!sc.eat_word("dev")) {
        sc.pos = mark;
        return std::nullopt;
    }
    if (!sc.done() && is_sep(sc.peek())) ++sc.pos;
    return sc.eat_number().value_or(0);
}

std::vector<int> trimmed_release(const std::vector<int>& release) {
    std::vector<int> r = release;
    while (r.size() > 1 && r.back() == 0) r.pop_back();
    return r;
}

int cmp_int(std::int64_t a, std::int64_t b) { return a < b ? -1 : a > b ? 1 : 0; }

constexpr std::int64_t kNegInf = INT64_MIN;
constexpr std::int64_t kPosInf = INT64_MAX;

// pre slot per the packaging ordering: dev-only releases sort below any
// pre-release; plain releases sort above all pre-releases.
std::pair<std::int64_t, std::int64_t> pre_key(const VersionId& v) {
    if (v.pre) return {static_cast<std::int64_t>(v.pre->first), v.pre->second};
    if (!v.post && v.dev) return {kNegInf, 0};
    return {kPosInf, 0};
}

// True when candidate's release, zero-padded, starts with the given prefix.
bool release_prefix_match(const VersionId& candidate, const std::vector<int>& prefix) {
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        int seg = i < candidate.release.size() ? candidate.release[i] : 0;
        if (seg != prefix[i]) return false;
    }
    return true;
}

std::string release_to_string(const std::vector<int>& release) {
    std::string out;
    for (std::size_t i = 0; i < release.size(); ++i) {
        if (i) out += '.';
        out += std::to_string(release[i]);
    }
    return out;
}

const char* op_text(Op op) {
    switch (op) {
        case Op::Eq: return "==";
        case Op::Ne: return "!=";
        case Op::Le: return "<=";
        case Op::Ge: return ">=";
        case Op::Lt: return "<";
        case Op::Gt: return ">";
        case Op::Compatible: return "~=";
        case Op::ArbitraryEq: return "===";
    }
    return "==";
}

} // namespace

VersionId parse_version(const std::string& text) {
    std::string t = lower(text);
    // Strip surrounding whitespace; versions themselves contain none.
    std::size_t b = t.find_first_not_of(" \t");
    std::size_t e = t.find_last_not_of(" \t");
    if (b == std::string::npos) throw VersionParseError("empty version string");
    t = t.substr(b, e - b + 1);

    Scanner sc{t};
    sc.eat('v'); // optional prefix, insignificant

    VersionId v;
    auto first = sc.eat_number();
    if (!first) throw VersionParseError("expected release segment in \"" + text + "\"");
    v.release.push_back(*first);
    while (sc.peek() == '.') {
        std::size_t mark = sc.pos;
        ++sc.pos;
        auto n = sc.eat_number();
        if (!n) {
            sc.pos = mark; // dot belongs to a pre/post/dev marker
            break;
        }
        v.release.push_back(*n);
    }

    v.pre = scan_pre(sc);
    v.post = scan_post(sc);
    v.dev = scan_dev(sc);

    if (!sc.done()) throw VersionParseError("unexpected trailing text in \"" + text + "\"");
    return v;
}

std::string to_string(const VersionId& v) {
    std::string out = release_to_string(v.release);
    if (v.pre) {
        switch (v.pre->first) {
            case PreKind::Alpha: out += 'a'; break;
            case PreKind::Beta: out += 'b'; break;
            case PreKind::ReleaseCandidate: out += "rc"; break;
        }
        out += std::to_string(v.pre->second);
    }
    if (v.post) out += ".post" + std::to_string(*v.post);
    if (v.dev) out += ".dev" + std::to_string(*v.dev);
    return out;
}

int compare(const VersionId& a, const VersionId& b) {
    std::vector<int> ra = trimmed_release(a.release);
    std::vector<int> rb = trimmed_release(b.release);
    for (std::size_t i = 0; i < std::max(ra.size(), rb.size()); ++i) {
        // A missing segment sorts below any present one (1.2 < 1.2.1).
        std::int64_t sa = i < ra.size() ? ra[i] : kNegInf;
        std::int64_t sb = i < rb.size() ? rb[i] : kNegInf;
        if (int c = cmp_int(sa, sb)) return c;
    }
    auto [pa, na] = pre_key(a);
    auto [pb, nb] = pre_key(b);
    if (int c = cmp_int(pa, pb)) return c;
    if (int c = cmp_int(na, nb)) return c;
    if (int c = cmp_int(a.post ? *a.post : kNegInf, b.post ? *b.post : kNegInf)) return c;
    return cmp_int(a.dev ? *a.dev : kPosInf, b.dev ? *b.dev : kPosInf);
}

bool same_version(const VersionId& a, const VersionId& b) { return compare(a, b) == 0; }

SpecifierSet parse_specifier_set(const std::string& text) {
    SpecifierSet set;
    std::size_t pos = 0;
    bool any_content = text.find_first_not_of(" \t") != std::string::npos;
    if (!any_content) return set;

    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::size_t end = comma == std::string::npos ? text.size() : comma;
        std::size_t b = pos;
        while (b < end && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        std::size_t e = end;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
        if (b == e) throw SpecifierParseError("empty specifier clause", pos);

        std::string clause_text = text.substr(b, e - b);
        Clause clause;
        std::size_t op_len = 0;
        if (clause_text.rfind("===", 0) == 0) {
            clause.op = Op::ArbitraryEq;
            op_len = 3;
        } else if (clause_text.rfind("==", 0) == 0) {
            clause.op = Op::Eq;
            op_len = 2;
        } else if (clause_text.rfind("!=", 0) == 0) {
            clause.op = Op::Ne;
            op_len = 2;
        } else if (clause_text.rfind("<=", 0) == 0) {
            clause.op = Op::Le;
            op_len = 2;
        } else if (clause_text.rfind(">=", 0) == 0) {
            clause.op = Op::Ge;
            op_len = 2;
        } else if (clause_text.rfind("~=", 0) == 0) {
            clause.op = Op::Compatible;
            op_len = 2;
        } else if (clause_text.rfind("<", 0) == 0) {
            clause.op = Op::Lt;
            op_len = 1;
        } else if (clause_text.rfind(">", 0) == 0) {
            clause.op = Op::Gt;
            op_len = 1;
        } else {
            throw SpecifierParseError("unknown operator in \"" + clause_text + "\"", b);
        }

        std::string ver = clause_text.substr(op_len);
        std::size_t vb = ver.find_first_not_of(" \t");
        if (vb == std::string::npos)
            throw SpecifierParseError("missing version after operator", b);
        ver = ver.substr(vb);
        if (ver.find_first_of(" \t") != std::string::npos)
            throw SpecifierParseError("whitespace inside version \"" + ver + "\"", b);

        if (ver.size() > 2 && ver.compare(ver.size() - 2, 2, ".*") == 0) {
            if (clause.op != Op::Eq && clause.op != Op::Ne)
                throw SpecifierParseError("wildcard requires == or != in \"" + clause_text + "\"",
                                          b);
            clause.wildcard = true;
            ver = ver.substr(0, ver.size() - 2);
        } else if (ver.find('*') != std::string::npos) {
            throw SpecifierParseError("misplaced wildcard in \"" + clause_text + "\"", b);
        }

        try {
            clause.version = parse_version(ver);
        } catch (const VersionParseError& ex) {
            throw SpecifierParseError(ex.what(), b + op_len);
        }
        if (clause.wildcard && (clause.version.pre || clause.version.post || clause.version.dev))
            throw SpecifierParseError("wildcard applies to release segments only", b);
        if (clause.op == Op::Compatible && clause.version.release.size() < 2)
            throw SpecifierParseError("~= needs at least two release segments", b);
        clause.raw = lower(ver);
        set.clauses.push_back(std::move(clause));

        if (comma == std::string::npos) break;
        pos = comma + 1;
        if (pos == text.size()) throw SpecifierParseError("trailing comma", comma);
    }
    return set;
}

std::string to_string(const SpecifierSet& s) {
    std::string out;
    for (std::size_t i = 0; i < s.clauses.size(); ++i) {
        const Clause& c = s.clauses[i];
        if (i) out += ',';
        out += op_text(c.op);
        if (c.op == Op::ArbitraryEq)
            out += c.raw;
        else if (c.wildcard)
            out += release_to_string(c.version.release) + ".*";
        else
            out += to_string(c.version);
    }
    return out;
}

bool clause_matches(const VersionId& v, const Clause& c) {
    if (c.wildcard) {
        bool prefix = release_prefix_match(v, c.version.release);
        return c.op == Op::Eq ? prefix : !prefix;
    }
    switch (c.op) {
        case Op::Eq: return compare(v, c.version) == 0;
        case Op::Ne: return compare(v, c.version) != 0;
        case Op::Le: return compare(v, c.version) <= 0;
        case Op::Ge: return compare(v, c.version) >= 0;
        case Op::Lt: return compare(v, c.version) < 0;
        case Op::Gt: return compare(v, c.version) > 0;
        case Op::Compatible: {
            std::vector<int> prefix = c.version.release;
            prefix.pop_back();
            return compare(v, c.version) >= 0 && release_prefix_match(v, prefix);
        }
        case Op::ArbitraryEq: return to_string(v) == c.raw;
    }
    return false;
}

bool version_matches(const VersionId& v, const SpecifierSet& s) {
    return std::all_of(s.clauses.begin(), s.clauses.end(),
                       [&](const Clause& c) { return clause_matches(v, c); });
}

ReleaseCalendar ReleaseCalendar::from_csv(const std::string& csv_text) {
    ReleaseCalendar cal;
    std::istringstream in(csv_text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw Error("calendar line " + std::to_string(line_no) + ": expected version,date");
        std::string ver = line.substr(0, comma);
        std::string date = line.substr(comma + 1);
        if (ver.size() > 1 && (ver[0] == 'v' || ver[0] == 'V') &&
            std::isdigit(static_cast<unsigned char>(ver[1])))
            ver.erase(0, 1); // tag-style "v3.0.0"
        if (ver.empty() || !std::isdigit(static_cast<unsigned char>(ver[0])))
            continue; // header row
        CalendarEntry entry{parse_version(ver), parse_civil_date(date)};
        for (const CalendarEntry& seen : cal.entries)
            if (same_version(seen.version, entry.version))
                throw Error("duplicate calendar version " + ver);
        cal.entries.push_back(std::move(entry));
    }
    if (cal.entries.empty()) throw Error("release calendar is empty");
    return cal;
}

const ReleaseCalendar& ReleaseCalendar::builtin() {
    static const ReleaseCalendar cal = from_csv(data::python_release_calendar_csv);
    return cal;
}

VersionId select_interpreter(const SpecifierSet& s, const ReleaseCalendar& cal, Instant commit) {
    CivilDate commit_date = civil_from_instant(commit);
    const CalendarEntry* best = nullptr;
    for (const CalendarEntry& entry : cal.entries) {
        if (entry.date > commit_date) continue;
        if (!version_matches(entry.version, s)) continue;
        if (!best || compare(entry.version, best->version) > 0) best = &entry;
    }
    if (!best)
        throw NoMatchingRelease("no interpreter release on or before " +
                                format_civil_date(commit_date) + " satisfies \"" + to_string(s) +
                                "\"");
    return best->version;
}

VersionId fallback_interpreter(const ReleaseCalendar& cal, Instant commit) {
    CivilDate commit_date = civil_from_instant(commit);
    CivilDate horizon = subtract_years(commit_date, 1);

    // A minor series is dated by its X.Y.0 release.
    struct Series {
        int major;
        int minor;
        CivilDate first_release;
    };
    std::optional<Series> chosen;
    for (const CalendarEntry& entry : cal.entries) {
        const std::vector<int>& r = entry.version.release;
        bool is_series_first = r.size() == 2 || (r.size() >= 3 && r[2] == 0);
        if (!is_series_first || r.size() < 2 || entry.version.pre || entry.version.dev) continue;
        if (entry.date > horizon) continue;
        if (!chosen || entry.date > chosen->first_release ||
            (entry.date == chosen->first_release &&
             std::pair{r[0], r[1]} > std::pair{chosen->major, chosen->minor}))
            chosen = Series{r[0], r[1], entry.date};
    }
    if (!chosen)
        throw TooOldInterpreter("no interpreter series released by " +
                                format_civil_date(horizon));
    if (std::pair{chosen->major, chosen->minor} < std::pair{3, 6})
        throw TooOldInterpreter("fallback selects " + std::to_string(chosen->major) + "." +
                                std::to_string(chosen->minor) + ", earlier than 3.6");

    const CalendarEntry* best = nullptr;
    for (const CalendarEntry& entry : cal.entries) {
        const std::vector<int>& r = entry.version.release;
        if (r.size() < 2 || r[0] != chosen->major || r[1] != chosen->minor) continue;
        if (entry.date > commit_date) continue;
        if (!best || compare(entry.version, best->version) > 0) best = &entry;
    }
    // The series' first release qualifies by construction.
    return best->version;
}

namespace {

std::optional<std::string> regex_capture(const std::string& text, const std::regex& re) {
    std::smatch m;
    if (std::regex_search(text, m, re) && m.size() > 1) return m[1].str();
    return std::nullopt;
}

// Translates a poetry-style caret/tilde constraint into standard clauses;
// passes standard specifier text through unchanged.
std::string poetry_to_specifier(const std::string& raw) {
    std::string t = raw;
    if (t.empty()) return t;
    if (t[0] == '^' || t[0] == '~') {
        char mode = t[0];
        std::string ver = t.substr(1);
        VersionId v = parse_version(ver);
        std::vector<int> upper = v.release;
        if (mode == '^') {
            // Bump the leftmost nonzero segment; ^0.0.3 bumps the last one.
            std::size_t i = 0;
            while (i + 1 < upper.size() && upper[i] == 0) ++i;
            upper[i] += 1;
            upper.resize(i + 1);
        } else {
            // ~X.Y[.Z] bumps the second segment; ~X bumps the first.
            std::size_t i = upper.size() >= 2 ? 1 : 0;
            upper[i] += 1;
            upper.resize(i + 1);
        }
        return ">=" + ver + ",<" + release_to_string(upper);
    }
    return t;
}

} // namespace

std::optional<std::string> RuleBasedExtractor::extract_python_requirement(const std::string& kind,
                                                                          const std::string& text) {
    if (kind == "pyproject") {
        static const std::regex req_py(R"(requires-python\s*=\s*["']([^"']+)["'])");
        if (auto hit = regex_capture(text, req_py)) return hit;
        // Poetry keeps the interpreter constraint as a dependency entry.
        static const std::regex poetry_py(R"(\n\s*python\s*=\s*["']([^"']+)["'])");
        if (auto hit = regex_capture(text, poetry_py)) {
            try {
                return poetry_to_specifier(*hit);
            } catch (const VersionParseError&) {
                return std::nullopt;
            }
        }
        return std::nullopt;
    }
    if (kind == "setup") {
        static const std::regex req(R"(python_requires\s*=\s*["']([^"']+)["'])");
        return regex_capture(text, req);
    }
    if (kind == "readme") {
        static const std::regex with_op(R"([Pp]ython\s*(>=|<=|==|>|<)\s*([0-9][0-9.]*[0-9]|[0-9]))");
        std::smatch m;
        if (std::regex_search(text, m, with_op)) return m[1].str() + m[2].str();
        static const std::regex plus(R"([Pp]ython\s+([0-9]+\.[0-9]+)\s*\+)");
        if (auto hit = regex_capture(text, plus)) return ">=" + *hit;
        static const std::regex badge(R"(badge/[Pp]ython-([0-9]+\.[0-9]+))");
        if (auto hit = regex_capture(text, badge)) return ">=" + *hit;
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<std::string> RuleBasedExtractor::derive_setup_commands(const std::string& kind,
                                                                     const std::string& text) {
    (void)text;
    if (kind == "pyproject" || kind == "setup") return std::string("pip install .");
    return std::nullopt;
}

VersionId detect_interpreter(const std::string& repo_root, ExtractorPort& extractor,
                             const ReleaseCalendar& cal, Instant commit) {
    namespace fs = std::filesystem;
    struct Source {
        const char* kind;
        std::vector<const char*> names;
    };
    static const std::vector<Source> sources{
        {"pyproject", {"pyproject.toml"}},
        {"setup", {"setup.py"}},
        {"readme", {"README.md", "README.rst", "README.txt", "README"}},
    };

    for (const Source& src : sources) {
        for (const char* name : src.names) {
            fs::path p = fs::path(repo_root) / name;
            if (!fs::exists(p)) continue;
            std::optional<std::string> spec_text;
            try {
                spec_text = extractor.extract_python_requirement(src.kind, read_text_file(p));
            } catch (const Error&) {
                spec_text = std::nullopt;
            }
            if (!spec_text) continue;
            try {
                return select_interpreter(parse_specifier_set(*spec_text), cal, commit);
            } catch (const SpecifierParseError&) {
                // Extraction produced garbage; keep walking the file order.
            } catch (const NoMatchingRelease&) {
            }
        }
    }
    return fallback_interpreter(cal, commit);
}

namespace {

struct DepRewrite {
    bool changed = false;
    bool parse_failed = false;
    std::string text;
};

// Rewrites one dependency string ("name[extras]>=1,<2 ; marker # note"),
// dropping pin and upper-bound clauses. Leaves anything unparseable alone.
DepRewrite unpin_dependency(const std::string& line) {
    DepRewrite out;
    out.text = line;

    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t head_end = i;
    if (i >= line.size()) return out;

    char c0 = line[i];
    if (c0 == '#' || c0 == '-' || c0 == '.' || c0 == '/') return out; // comment/option/path

    auto is_name_char = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    };
    std::size_t name_start = i;
    while (i < line.size() && is_name_char(line[i])) ++i;
    if (i == name_start) {
        out.parse_failed = true;
        return out;
    }
    if (i < line.size() && line[i] == '[') { // extras, preserved verbatim
        std::size_t close = line.find(']', i);
        if (close == std::string::npos) {
            out.parse_failed = true;
            return out;
        }
        i = close + 1;
    }
    std::size_t token_end = i;

    // Everything from the marker or comment onward is preserved verbatim.
    std::size_t rest_start = line.size();
    for (std::size_t j = i; j < line.size(); ++j) {
        if (line[j] == ';' || line[j] == '#') {
            rest_start = j;
            break;
        }
    }
    std::string spec_region = line.substr(i, rest_start - i);
    if (spec_region.find('@') != std::string::npos) return out; // direct URL reference

    std::size_t core_end = spec_region.size();
    while (core_end > 0 && std::isspace(static_cast<unsigned char>(spec_region[core_end - 1])))
        --core_end;
    std::string core = spec_region.substr(0, core_end);
    std::string trailing_ws = spec_region.substr(core_end);
    if (core.empty()) return out; // nothing pinned

    // Strip optional parentheses around the clause list ("name (==1.0)"),
    // keeping any whitespace before the opening one.
    std::string inner = core;
    std::string open_wrap, close_wrap;
    std::size_t lead = 0;
    while (lead < inner.size() && std::isspace(static_cast<unsigned char>(inner[lead]))) ++lead;
    if (inner.size() >= lead + 2 && inner[lead] == '(' && inner.back() == ')') {
        open_wrap = inner.substr(0, lead + 1);
        close_wrap = ")";
        inner = inner.substr(lead + 1, inner.size() - lead - 2);
    }

    SpecifierSet parsed;
    try {
        parsed = parse_specifier_set(inner);
    } catch (const SpecifierParseError&) {
        out.parse_failed = true;
        return out;
    }

    SpecifierSet kept;
    for (const Clause& c : parsed.clauses)
        if (c.op == Op::Ge || c.op == Op::Gt) kept.clauses.push_back(c);

    std::string rebuilt = to_string(kept);
    if (!rebuilt.empty()) rebuilt = open_wrap + rebuilt + close_wrap;
    out.text = line.substr(0, head_end) + line.substr(name_start, token_end - name_start) +
               rebuilt + trailing_ws + line.substr(rest_start);
    out.changed = out.text != line;
    return out;
}

// Widens a poetry constraint value; bare pins become "*" (anything).
std::string unpin_poetry_value(const std::string& raw, bool& failed) {
    failed = false;
    if (raw.empty() || raw == "*") return raw;
    std::string spec_text;
    try {
        spec_text = poetry_to_specifier(raw);
    } catch (const VersionParseError&) {
        failed = true;
        return raw;
    }
    // A bare version is an exact pin in this dialect.
    bool bare = spec_text.find_first_of("<>=!~") == std::string::npos;
    SpecifierSet parsed;
    try {
        parsed = bare ? SpecifierSet{} : parse_specifier_set(spec_text);
    } catch (const SpecifierParseError&) {
        failed = true;
        return raw;
    }
    if (bare) {
        try {
            parse_version(spec_text);
        } catch (const VersionParseError&) {
            failed = true;
            return raw;
        }
        return "*";
    }
    SpecifierSet kept;
    for (const Clause& c : parsed.clauses)
        if (c.op == Op::Ge || c.op == Op::Gt) kept.clauses.push_back(c);
    return kept.clauses.empty() ? "*" : to_string(kept);
}

std::string section_of(const std::string& line) {
    static const std::regex header(R"(^\s*\[([^\]]+)\]\s*(#.*)?$)");
    std::smatch m;
    if (std::regex_match(line, m, header)) return m[1].str();
    return "";
}

bool is_dependency_array_section(const std::string& section) {
    return section == "project" || section == "project.optional-dependencies" ||
           section == "dependency-groups";
}

bool is_poetry_dependency_section(const std::string& section) {
    if (section == "tool.poetry.dependencies" || section == "tool.poetry.dev-dependencies")
        return true;
    static const std::regex group(R"(^tool\.poetry\.group\.[^.]+\.dependencies$)");
    return std::regex_match(section, group);
}

// Counts bracket depth changes outside quoted strings.
int bracket_delta(const std::string& line) {
    int delta = 0;
    char quote = '\0';
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quote) {
            if (c == quote) quote = '\0';
            continue;
        }
        if (c == '"' || c == '\'')
            quote = c;
        else if (c == '#')
            break;
        else if (c == '[')
            ++delta;
        else if (c == ']')
            --delta;
    }
    return delta;
}

std::string rewrite_quoted_deps(const std::string& line, std::vector<std::string>& warnings) {
    static const std::regex quoted(R"re(("([^"]*)")|('([^']*)'))re");
    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), quoted);
         it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        std::string content = m[2].matched ? m[2].str() : m[4].str();
        char q = m[2].matched ? '"' : '\'';
        DepRewrite r = unpin_dependency(content);
        if (r.parse_failed) warnings.push_back(content);
        out += line.substr(last, static_cast<std::size_t>(m.position()) - last);
        out += q + r.text + q;
        last = static_cast<std::size_t>(m.position() + m.length());
    }
    out += line.substr(last);
    return out;
}

std::string rewrite_poetry_line(const std::string& line, std::vector<std::string>& warnings) {
    static const std::regex assign(R"(^(\s*[A-Za-z0-9._-]+\s*=\s*)(.*?)(\s*(#.*)?)$)");
    std::smatch m;
    if (!std::regex_match(line, m, assign)) return line;
    std::string value = m[2].str();

    auto rewrite_scalar = [&](const std::string& quoted_value) -> std::optional<std::string> {
        if (quoted_value.size() < 2) return std::nullopt;
        char q = quoted_value.front();
        if ((q != '"' && q != '\'') || quoted_value.back() != q) return std::nullopt;
        std::string content = quoted_value.substr(1, quoted_value.size() - 2);
        bool failed = false;
        std::string widened = unpin_poetry_value(content, failed);
        if (failed) {
            warnings.push_back(content);
            return std::nullopt;
        }
        return q + widened + q;
    };

    if (!value.empty() && (value[0] == '"' || value[0] == '\'')) {
        if (auto rewritten = rewrite_scalar(value))
            return m[1].str() + *rewritten + m[3].str();
        return line;
    }
    if (!value.empty() && value[0] == '{') {
        // Inline table: rewrite only the version field.
        static const std::regex version_field(R"re((version\s*=\s*)("([^"]*)"|'([^']*)'))re");
        std::smatch vm;
        if (std::regex_search(value, vm, version_field)) {
            if (auto rewritten = rewrite_scalar(vm[2].str())) {
                std::string patched = value.substr(0, static_cast<std::size_t>(vm.position())) +
                                      vm[1].str() + *rewritten +
                                      value.substr(static_cast<std::size_t>(vm.position() +
                                                                            vm.length()));
                return m[1].str() + patched + m[3].str();
            }
        }
        return line;
    }
    return line;
}

// Applies `rewrite` to every line, reassembling CR/LF terminators untouched.
std::string map_lines(const std::string& text,
                      const std::function<std::string(const std::string&)>& rewrite) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::size_t end = nl == std::string::npos ? text.size() : nl;
        std::string line = text.substr(pos, end - pos);
        bool had_cr = !line.empty() && line.back() == '\r';
        if (had_cr) line.pop_back();

        out += rewrite(line);
        if (had_cr) out += '\r';
        if (nl == std::string::npos) break;
        out += '\n';
        pos = nl + 1;
    }
    return out;
}

UnpinResult unpin_requirements(const std::string& text) {
    UnpinResult out;
    out.text = map_lines(text, [&](const std::string& line) {
        DepRewrite r = unpin_dependency(line);
        if (r.parse_failed) out.warnings.push_back(line);
        return r.text;
    });
    return out;
}

UnpinResult unpin_pyproject(const std::string& text) {
    UnpinResult out;
    std::string section;
    int array_depth = 0; // >0 while inside a dependency array

    out.text = map_lines(text, [&](const std::string& line) -> std::string {
        std::string header = section_of(line);
        if (!header.empty() && array_depth == 0) {
            section = header;
            return line;
        }
        if (array_depth > 0) {
            std::string rewritten = rewrite_quoted_deps(line, out.warnings);
            array_depth = std::max(0, array_depth + bracket_delta(line));
            return rewritten;
        }
        if (is_dependency_array_section(section)) {
            static const std::regex opens_array(R"(^\s*[A-Za-z0-9._"'-]+\s*=\s*\[)");
            static const std::regex deps_key(R"(^\s*dependencies\s*=\s*\[)");
            bool opens = section == "project" ? std::regex_search(line, deps_key)
                                              : std::regex_search(line, opens_array);
            if (opens) {
                std::string rewritten = rewrite_quoted_deps(line, out.warnings);
                array_depth = std::max(0, bracket_delta(line));
                return rewritten;
            }
            return line;
        }
        if (is_poetry_dependency_section(section)) return rewrite_poetry_line(line, out.warnings);
        return line;
    });
    return out;
}

} // namespace

UnpinResult unpin_specifiers(const std::string& config_text, ConfigKind kind) {
    return kind == ConfigKind::Requirements ? unpin_requirements(config_text)
                                            : unpin_pyproject(config_text);
}

} // namespace timegate::verspec
