#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "timegate/error.hpp"

namespace timegate {

class TimeParseError : public Error {
public:
    using Error::Error;
};

// A UTC instant with second resolution. All release timestamps, cutoffs and
// commit dates flow through this type so comparisons are total and exact.
struct Instant {
    std::int64_t seconds = 0; // seconds since the Unix epoch, UTC

    friend auto operator<=>(const Instant&, const Instant&) = default;
};

// A civil calendar date (no time-of-day), used for commit dates and for
// date-only cutoff inputs before they are widened to end-of-day.
struct CivilDate {
    int year = 1970;
    unsigned month = 1; // 1..12
    unsigned day = 1;   // 1..31

    friend auto operator<=>(const CivilDate&, const CivilDate&) = default;
};

// Parses "YYYY-MM-DD". Throws TimeParseError on malformed or impossible dates.
CivilDate parse_civil_date(const std::string& text);

// Parses an RFC 3339 timestamp such as "2024-03-01T12:30:00Z" or
// "2024-03-01T12:30:00+02:00". Fractional seconds are accepted and truncated.
// Throws TimeParseError on malformed input.
Instant parse_rfc3339(const std::string& text);

// Accepts either a full RFC 3339 timestamp or a bare date. A bare date is
// interpreted inclusively as the end of that day: 23:59:59 UTC.
Instant parse_cutoff(const std::string& text);

// Formats an instant as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_rfc3339(Instant t);

// Formats a civil date as "YYYY-MM-DD".
std::string format_civil_date(CivilDate d);

Instant instant_from_civil(CivilDate d, unsigned hour, unsigned minute, unsigned second);
CivilDate civil_from_instant(Instant t);

// Steps a date back by whole years, clamping Feb 29 to Feb 28 when the target
// year is not a leap year.
CivilDate subtract_years(CivilDate d, int years);

bool is_valid_civil_date(CivilDate d);

} // namespace timegate
