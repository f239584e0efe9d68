#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "timegate/chrono.hpp"
#include "timegate/error.hpp"

namespace timegate::verspec {

class VersionParseError : public Error {
public:
    using Error::Error;
};

class SpecifierParseError : public Error {
public:
    SpecifierParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
    std::size_t offset;
};

class NoMatchingRelease : public Error {
public:
    using Error::Error;
};

class TooOldInterpreter : public Error {
public:
    using Error::Error;
};

enum class PreKind { Alpha, Beta, ReleaseCandidate };

// A parsed version identifier: dotted release segments plus optional
// pre-release, post-release and developmental-release markers. Epochs and
// local version labels are out of scope.
struct VersionId {
    std::vector<int> release; // at least one segment
    std::optional<std::pair<PreKind, int>> pre;
    std::optional<int> post;
    std::optional<int> dev;
};

VersionId parse_version(const std::string& text);
std::string to_string(const VersionId& v);

// Three-way ordering consistent with the packaging standard on the supported
// subset: trailing zero release segments are insignificant; dev < pre < final
// < post at the same release.
int compare(const VersionId& a, const VersionId& b);
bool same_version(const VersionId& a, const VersionId& b); // compare(a,b) == 0

enum class Op { Eq, Ne, Le, Ge, Lt, Gt, Compatible, ArbitraryEq };

struct Clause {
    Op op = Op::Eq;
    VersionId version;      // for wildcard clauses, the release prefix
    bool wildcard = false;  // "== X.Y.*" / "!= X.Y.*"
    std::string raw;        // version text as written (drives ArbitraryEq)
};

struct SpecifierSet {
    std::vector<Clause> clauses; // empty set matches every version
};

// Parses a comma-separated, whitespace-insensitive clause list such as
// ">=3.8, <3.11". Throws SpecifierParseError with the byte offset of the
// offending clause.
SpecifierSet parse_specifier_set(const std::string& text);
std::string to_string(const SpecifierSet& s);

bool clause_matches(const VersionId& v, const Clause& c);
// Conjunction over all clauses; an empty set matches everything.
bool version_matches(const VersionId& v, const SpecifierSet& s);

// One interpreter release: its version and the civil date it shipped.
struct CalendarEntry {
    VersionId version;
    CivilDate date;
};

// The interpreter release history, loaded from a CSV data file
// (version,release-date per line). An embedded copy ships with the library.
struct ReleaseCalendar {
    std::vector<CalendarEntry> entries;

    static ReleaseCalendar from_csv(const std::string& csv_text);
    static const ReleaseCalendar& builtin(); // compiled-in copy of the data file
};

// Latest version released on or before the commit date that satisfies the
// specifier set. Throws NoMatchingRelease when nothing qualifies.
VersionId select_interpreter(const SpecifierSet& s, const ReleaseCalendar& cal, Instant commit);

// Used when no usable specifier exists: pick the minor series whose first
// release (X.Y.0) is the latest at or before (commit date − 1 year), then the
// latest patch of that series released on or before the commit date. Throws
// TooOldInterpreter when the chosen series predates 3.6 or none qualifies.
VersionId fallback_interpreter(const ReleaseCalendar& cal, Instant commit);

// Port for pulling an interpreter-version specifier out of a config file's
// text, and for deriving setup commands from a manifest or setup script.
// Implementations may be rule-based (the default) or model-backed.
class ExtractorPort {
public:
    virtual ~ExtractorPort() = default;
    // kind ∈ {"pyproject", "setup", "readme"}; returns specifier text or none.
    virtual std::optional<std::string> extract_python_requirement(const std::string& kind,
                                                                  const std::string& text) = 0;
    // kind ∈ {"pyproject", "setup"}; returns shell commands or none.
    virtual std::optional<std::string> derive_setup_commands(const std::string& kind,
                                                             const std::string& text) = 0;
};

// Deterministic default: regex over requires-python / python_requires= /
// README version phrases; `pip install .` for manifest- or script-built repos.
class RuleBasedExtractor : public ExtractorPort {
public:
    std::optional<std::string> extract_python_requirement(const std::string& kind,
                                                          const std::string& text) override;
    std::optional<std::string> derive_setup_commands(const std::string& kind,
                                                     const std::string& text) override;
};

// Inspects the repo's pyproject manifest, then its setup script, then its
// README, in that order; the first specifier that selects a release wins;
// otherwise falls back to fallback_interpreter.
VersionId detect_interpreter(const std::string& repo_root, ExtractorPort& extractor,
                             const ReleaseCalendar& cal, Instant commit);

struct UnpinResult {
    std::string text;
    std::vector<std::string> warnings; // dependency lines left untouched
};

enum class ConfigKind { Requirements, Pyproject };

// Widens dependency constraints: drops ==, ===, <=, <, ~= and != clauses,
// keeps >= and >, and preserves extras, markers, comments and unrelated text
// byte for byte. Lines that do not parse are left untouched and reported.
UnpinResult unpin_specifiers(const std::string& config_text, ConfigKind kind);

} // namespace timegate::verspec
