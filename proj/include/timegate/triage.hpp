#pragma once

#include <string>
#include <vector>

namespace timegate::triage {

struct TracebackFrame {
    std::string file_path;
    int line_no = 1; // ≥ 1
    std::string function;
};

struct ParsedFailure {
    std::vector<TracebackFrame> frames; // outermost first; last is the raise site
    std::string exception_type;
    std::string message;
};

enum class Verdict { UserCode, ThirdParty, Timeout, Unparseable };

const char* to_string(Verdict v);

// Scans a test log for interpreter traceback blocks and the condensed pytest
// failure format. Chained-exception output yields one failure whose frames
// come from the direct (innermost) cause block. Never throws; unrecognized
// logs yield an empty list.
std::vector<ParsedFailure> parse_failures(const std::string& log);

// The deepest frame — where the exception was raised.
const TracebackFrame& root_cause_frame(const ParsedFailure& f);

enum class FrameOrigin { UserCode, ThirdParty };

// ThirdParty iff the path contains a `site-packages` segment and the basename
// is not `__init__.py`; relocated-module init files count as user-fixable.
FrameOrigin classify_frame(const TracebackFrame& frame);

// Full verdict for a failing run: timeouts dominate, then the parsed
// failures' root causes decide (any user-code root cause keeps the task).
Verdict triage_verdict(bool timed_out, const std::string& log);

} // namespace timegate::triage
