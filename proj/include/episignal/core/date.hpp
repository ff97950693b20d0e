#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace episignal {

/// A UTC calendar day.
using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DD`. Throws ParseError on malformed or out-of-range input.
Date parse_date(std::string_view text);
/// Returns false instead of throwing.
bool try_parse_date(std::string_view text, Date& out);

std::string format_date(Date d);

/// UTC day containing the given unix timestamp (seconds).
Date day_of_utc(std::int64_t seconds);
std::int64_t utc_midnight(Date d);

inline Date add_days(Date d, long n) { return d + std::chrono::days{n}; }
inline long days_between(Date from, Date to) { return (to - from).count(); }

struct DateRange {
    Date start;
    Date end;  // inclusive

    long length() const { return days_between(start, end) + 1; }
    bool contains(Date d) const { return d >= start && d <= end; }
};

}  // namespace episignal
