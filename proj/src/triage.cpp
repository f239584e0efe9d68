#include "timegate/triage.hpp"

#include <regex>

namespace timegate::triage {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::size_t end = nl == std::string::npos ? text.size() : nl;
        std::string line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    if (!lines.empty() && lines.back().empty() && !text.empty() && text.back() == '\n')
        lines.pop_back();
    return lines;
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos;
}

bool is_traceback_header(const std::string& line) {
    static const std::regex header(R"(^\s*Traceback \(most recent call last\):\s*$)");
    return std::regex_match(line, header);
}

bool is_chain_marker(const std::string& line) {
    return line == "The above exception was the direct cause of the following exception:" ||
           line == "During handling of the above exception, another exception occurred:";
}

const std::regex& py_frame_re() {
    static const std::regex re(R"re(^\s*File "([^"]+)", line (\d+)(?:, in (.*))?\s*$)re");
    return re;
}

const std::regex& pytest_frame_re() {
    static const std::regex re(R"(^([^\s:][^:]*):(\d+): in (.+)$)");
    return re;
}

void parse_exception_line(const std::string& line, ParsedFailure& failure) {
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) {
        failure.exception_type = line;
        return;
    }
    failure.exception_type = line.substr(0, colon);
    std::size_t msg = line.find_first_not_of(' ', colon + 1);
    failure.message = msg == std::string::npos ? "" : line.substr(msg);
}

// Parses one interpreter traceback block starting at `i` (the header line).
// Returns the index past the block; frames/exception land in `failure`.
std::size_t parse_py_block(const std::vector<std::string>& lines, std::size_t i,
                           ParsedFailure& failure) {
    ++i; // past the header
    std::smatch m;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (std::regex_match(line, m, py_frame_re())) {
            TracebackFrame frame;
            frame.file_path = m[1].str();
            frame.line_no = std::max(1, std::stoi(m[2].str()));
            frame.function = m[3].matched ? m[3].str() : "";
            failure.frames.push_back(std::move(frame));
            ++i;
            continue;
        }
        if (is_traceback_header(line)) break; // malformed: a fresh block begins
        if (!line.empty() && (line[0] == ' ' || line[0] == '\t')) {
            ++i; // source echo, caret markers, "..." elision
            continue;
        }
        if (is_blank(line)) break;
        parse_exception_line(line, failure);
        ++i;
        break;
    }
    return i;
}

// Consumes a full (possibly chained) traceback report starting at the header
// index. The returned failure carries the first block — the direct cause.
std::size_t parse_py_failure(const std::vector<std::string>& lines, std::size_t i,
                             ParsedFailure& failure) {
    i = parse_py_block(lines, i, failure);
    while (true) {
        std::size_t j = i;
        while (j < lines.size() && is_blank(lines[j])) ++j;
        if (j >= lines.size() || !is_chain_marker(lines[j])) break;
        ++j;
        while (j < lines.size() && is_blank(lines[j])) ++j;
        if (j >= lines.size() || !is_traceback_header(lines[j])) {
            i = j;
            break;
        }
        ParsedFailure outer; // printed later in the chain; not the direct cause
        i = parse_py_block(lines, j, outer);
    }
    return i;
}

std::size_t parse_pytest_section(const std::vector<std::string>& lines, std::size_t i,
                                 ParsedFailure& failure, bool& complete) {
    std::smatch m;
    bool saw_error_line = false;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (!saw_error_line && std::regex_match(line, m, pytest_frame_re())) {
            failure.frames.push_back(
                TracebackFrame{m[1].str(), std::max(1, std::stoi(m[2].str())), m[3].str()});
            ++i;
            continue;
        }
        if (line.size() >= 2 && line[0] == 'E' && (line[1] == ' ' || line[1] == '\t')) {
            std::size_t b = line.find_first_not_of(" \t", 1);
            std::string body = b == std::string::npos ? "" : line.substr(b);
            if (!saw_error_line) {
                static const std::regex typed(R"(^([A-Za-z_][A-Za-z0-9_.]*(?:Error|Exception|Exit|Interrupt|Warning))\b:?\s*(.*)$)");
                std::smatch em;
                if (std::regex_match(body, em, typed)) {
                    failure.exception_type = em[1].str();
                    failure.message = em[2].str();
                } else {
                    failure.exception_type = "AssertionError";
                    failure.message = body;
                }
                saw_error_line = true;
            }
            ++i;
            continue;
        }
        if (!line.empty() && (line[0] == ' ' || line[0] == '\t')) {
            ++i; // echoed source between frames
            continue;
        }
        break;
    }
    complete = saw_error_line && !failure.frames.empty();
    return i;
}

} // namespace

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::UserCode: return "user-code";
        case Verdict::ThirdParty: return "third-party";
        case Verdict::Timeout: return "timeout";
        case Verdict::Unparseable: return "unparseable";
    }
    return "unparseable";
}

std::vector<ParsedFailure> parse_failures(const std::string& log) {
    std::vector<ParsedFailure> failures;
    std::vector<std::string> lines = split_lines(log);
    std::size_t i = 0;
    while (i < lines.size()) {
        if (is_traceback_header(lines[i])) {
            ParsedFailure failure;
            i = parse_py_failure(lines, i, failure);
            if (!failure.frames.empty()) failures.push_back(std::move(failure));
            continue;
        }
        std::smatch m;
        if (std::regex_match(lines[i], m, pytest_frame_re())) {
            ParsedFailure failure;
            bool complete = false;
            std::size_t next = parse_pytest_section(lines, i, failure, complete);
            if (complete) {
                failures.push_back(std::move(failure));
                i = next;
                continue;
            }
            i = next > i ? next : i + 1;
            continue;
        }
        ++i;
    }
    return failures;
}

const TracebackFrame& root_cause_frame(const ParsedFailure& f) { return f.frames.back(); }

FrameOrigin classify_frame(const TracebackFrame& frame) {
    std::string path = frame.file_path;
    for (char& c : path)
        if (c == '\\') c = '/';

    bool in_site_packages = false;
    std::string basename;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        std::size_t slash = path.find('/', pos);
        std::size_t end = slash == std::string::npos ? path.size() : slash;
        std::string segment = path.substr(pos, end - pos);
        if (segment == "site-packages" && slash != std::string::npos) in_site_packages = true;
        if (slash == std::string::npos) {
            basename = segment;
            break;
        }
        pos = slash + 1;
    }
    if (in_site_packages && basename != "__init__.py") return FrameOrigin::ThirdParty;
    return FrameOrigin::UserCode;
}

Verdict triage_verdict(bool timed_out, const std::string& log) {
    if (timed_out) return Verdict::Timeout;
    std::vector<ParsedFailure> failures = parse_failures(log);
    if (failures.empty()) return Verdict::Unparseable;
    for (const ParsedFailure& f : failures)
        if (classify_frame(root_cause_frame(f)) == FrameOrigin::UserCode) return Verdict::UserCode;
    return Verdict::ThirdParty;
}

} // namespace timegate::triage
