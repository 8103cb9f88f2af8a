#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>

#include "fedvol/errors.hpp"

namespace fedvol {

/// Proleptic Gregorian calendar date. Comparisons follow chronological order.
struct Date {
    int year = 1970;
    int month = 1; // 1..12
    int day = 1;   // 1..31

    auto operator<=>(const Date&) const = default;
};

namespace detail {

// Days-from-civil / civil-from-days (Howard Hinnant's algorithms).
constexpr std::int64_t days_from_civil(int y, int m, int d) noexcept {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr Date civil_from_days(std::int64_t z) noexcept {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

} // namespace detail

/// Serial day number (days since 1970-01-01).
constexpr std::int64_t to_serial(const Date& d) noexcept {
    return detail::days_from_civil(d.year, d.month, d.day);
}

constexpr Date from_serial(std::int64_t serial) noexcept { return detail::civil_from_days(serial); }

/// Day of week with Monday = 0 .. Sunday = 6.
constexpr int day_of_week(const Date& d) noexcept {
    const std::int64_t s = to_serial(d); // 1970-01-01 was a Thursday
    return static_cast<int>(((s % 7) + 7 + 3) % 7);
}

constexpr bool is_weekend(const Date& d) noexcept { return day_of_week(d) >= 5; }

/// Calendar quarter in 0..3 (Jan-Mar = 0, ..., Oct-Dec = 3).
constexpr int quarter_of(const Date& d) noexcept { return (d.month - 1) / 3; }

constexpr bool is_valid(const Date& d) noexcept {
    if (d.month < 1 || d.month > 12 || d.day < 1) return false;
    return from_serial(to_serial(d)) == d;
}

inline Date next_business_day(Date d) {
    std::int64_t s = to_serial(d) + 1;
    while (is_weekend(from_serial(s))) ++s;
    return from_serial(s);
}

/// Parses strict ISO-8601 `YYYY-MM-DD`.
inline Date parse_date(const std::string& text) {
    int y = 0, m = 0, dd = 0;
    char tail = '\0';
    if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2d-%2d%c", &y, &m, &dd, &tail) != 3)
        throw ValidationError("unparseable date '" + text + "' (expected YYYY-MM-DD)");
    Date d{y, m, dd};
    if (!is_valid(d)) throw ValidationError("invalid calendar date '" + text + "'");
    return d;
}

inline std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

} // namespace fedvol
