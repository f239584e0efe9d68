#include "timegate/chrono.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

namespace timegate {

namespace {

namespace chr = std::chrono;

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

int to_int(std::string_view s) {
    int value = 0;
    std::from_chars(s.data(), s.data() + s.size(), value);
    return value;
}

[[noreturn]] void bad(const std::string& text, const char* why) {
    throw TimeParseError("cannot parse time \"" + text + "\": " + why);
}

} // namespace

bool is_valid_civil_date(CivilDate d) {
    chr::year_month_day ymd{chr::year{d.year}, chr::month{d.month}, chr::day{d.day}};
    return ymd.ok();
}

CivilDate parse_civil_date(const std::string& text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') bad(text, "expected YYYY-MM-DD");
    std::string_view s = text;
    if (!all_digits(s.substr(0, 4)) || !all_digits(s.substr(5, 2)) || !all_digits(s.substr(8, 2)))
        bad(text, "expected YYYY-MM-DD");
    CivilDate d;
    d.year = to_int(s.substr(0, 4));
    d.month = static_cast<unsigned>(to_int(s.substr(5, 2)));
    d.day = static_cast<unsigned>(to_int(s.substr(8, 2)));
    if (!is_valid_civil_date(d)) bad(text, "no such calendar day");
    return d;
}

Instant instant_from_civil(CivilDate d, unsigned hour, unsigned minute, unsigned second) {
    chr::year_month_day ymd{chr::year{d.year}, chr::month{d.month}, chr::day{d.day}};
    chr::sys_days days{ymd};
    std::int64_t secs = chr::duration_cast<chr::seconds>(days.time_since_epoch()).count();
    secs += static_cast<std::int64_t>(hour) * 3600 + minute * 60 + second;
    return Instant{secs};
}

CivilDate civil_from_instant(Instant t) {
    std::int64_t day_count = t.seconds / 86400;
    if (t.seconds % 86400 < 0) --day_count; // floor toward earlier days for pre-epoch times
    chr::sys_days days{chr::days{day_count}};
    chr::year_month_day ymd{days};
    return CivilDate{int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day())};
}

Instant parse_rfc3339(const std::string& text) {
    // Layout: YYYY-MM-DD 'T' HH:MM:SS [.frac] ( 'Z' | ±HH:MM )
    if (text.size() < 20) bad(text, "too short");
    if (text[10] != 'T' && text[10] != 't' && text[10] != ' ') bad(text, "expected 'T' separator");

    CivilDate date = parse_civil_date(text.substr(0, 10));

    std::string_view s = text;
    std::string_view clock = s.substr(11);
    if (clock.size() < 8 || clock[2] != ':' || clock[5] != ':') bad(text, "expected HH:MM:SS");
    if (!all_digits(clock.substr(0, 2)) || !all_digits(clock.substr(3, 2)) ||
        !all_digits(clock.substr(6, 2)))
        bad(text, "expected HH:MM:SS");
    unsigned hour = static_cast<unsigned>(to_int(clock.substr(0, 2)));
    unsigned minute = static_cast<unsigned>(to_int(clock.substr(3, 2)));
    unsigned second = static_cast<unsigned>(to_int(clock.substr(6, 2)));
    if (hour > 23 || minute > 59 || second > 60) bad(text, "clock field out of range");
    if (second == 60) second = 59; // fold leap seconds; ordering is all we need

    std::size_t pos = 11 + 8;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == start) bad(text, "empty fractional seconds");
    }
    if (pos >= s.size()) bad(text, "missing UTC offset");

    std::int64_t offset_seconds = 0;
    char tz = s[pos];
    if (tz == 'Z' || tz == 'z') {
        ++pos;
    } else if (tz == '+' || tz == '-') {
        std::string_view off = s.substr(pos + 1);
        if (off.size() < 5 || off[2] != ':' || !all_digits(off.substr(0, 2)) ||
            !all_digits(off.substr(3, 2)))
            bad(text, "expected ±HH:MM offset");
        int oh = to_int(off.substr(0, 2));
        int om = to_int(off.substr(3, 2));
        if (oh > 23 || om > 59) bad(text, "offset out of range");
        offset_seconds = static_cast<std::int64_t>(oh) * 3600 + om * 60;
        if (tz == '-') offset_seconds = -offset_seconds;
        pos += 6;
    } else {
        bad(text, "expected 'Z' or ±HH:MM offset");
    }
    if (pos != s.size()) bad(text, "trailing characters");

    Instant local = instant_from_civil(date, hour, minute, second);
    return Instant{local.seconds - offset_seconds};
}

Instant parse_cutoff(const std::string& text) {
    if (text.size() == 10 && text[4] == '-' && text[7] == '-')
        return instant_from_civil(parse_civil_date(text), 23, 59, 59);
    return parse_rfc3339(text);
}

std::string format_rfc3339(Instant t) {
    CivilDate d = civil_from_instant(t);
    std::int64_t day_secs = t.seconds - instant_from_civil(d, 0, 0, 0).seconds;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", d.year, d.month, d.day,
                  static_cast<long long>(day_secs / 3600),
                  static_cast<long long>(day_secs / 60 % 60),
                  static_cast<long long>(day_secs % 60));
    return buf;
}

std::string format_civil_date(CivilDate d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", d.year, d.month, d.day);
    return buf;
}

CivilDate subtract_years(CivilDate d, int years) {
    CivilDate out{d.year - years, d.month, d.day};
    if (!is_valid_civil_date(out)) out.day = 28; // only Feb 29 can go invalid this way
    return out;
}

} // namespace timegate
