#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "timegate/error.hpp"

namespace timegate::diff {

class DiffParseError : public Error {
public:
    DiffParseError(const std::string& what, int line_no)
        : Error(what + " (diff line " + std::to_string(line_no) + ")"), line_no(line_no) {}
    int line_no;
};

enum class EditKind { Replacement, Deletion, Addition };

// One grouped edit inside a hunk: a maximal run of `-` lines immediately
// followed by `+` lines is a Replacement; a bare `-` run a Deletion; a bare
// `+` run an Addition anchored at the next pre-edit line.
struct EditOp {
    EditKind kind = EditKind::Replacement;
    std::string file;
    std::vector<int> minus_lines;       // pre-edit lines (Replacement/Deletion)
    int anchor_line = 0;                // pre-edit anchor (Addition)
    std::vector<std::string> plus_text; // inserted lines (Replacement/Addition)
};

// Pre-edit line numbers touched per file; the common currency of the
// precision metric (model edits M and gold annotation H alike).
using ModifiedLineSet = std::map<std::string, std::set<int>>;

std::vector<EditOp> parse_unified_diff(const std::string& text);

ModifiedLineSet modified_lines(const std::vector<EditOp>& ops);

// Line-based Myers diff in unified format with 3 context lines; returns the
// empty string when the sides are identical.
std::string generate_unified_diff(const std::string& old_text, const std::string& new_text,
                                  const std::string& path, int context = 3);

// Applies a single-file unified diff; context and minus lines are verified
// against the input. Throws DiffParseError on mismatch.
std::string apply_unified_diff(const std::string& old_text, const std::string& diff_text);

} // namespace timegate::diff
