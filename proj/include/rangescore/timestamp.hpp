#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rangescore {

/// UTC instant with millisecond resolution.
using timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

namespace detail {

inline int read_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) throw std::invalid_argument("truncated timestamp");
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + count, value);
    if (ec != std::errc{} || ptr != s.data() + pos + count)
        throw std::invalid_argument("expected digits in timestamp");
    return value;
}

inline void expect_char(std::string_view s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c)
        throw std::invalid_argument(std::string("expected '") + c + "' in timestamp");
}

} // namespace detail

/// Parses an RFC 3339 date-time (`2024-05-01T10:00:00Z`, optional fraction,
/// `Z` or `+hh:mm` offset) and normalizes it to UTC. Fractions beyond
/// milliseconds are truncated. Throws std::invalid_argument.
inline timestamp parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    int y = detail::read_digits(s, 0, 4);
    detail::expect_char(s, 4, '-');
    int mo = detail::read_digits(s, 5, 2);
    detail::expect_char(s, 7, '-');
    int d = detail::read_digits(s, 8, 2);
    if (s.size() <= 10 || (s[10] != 'T' && s[10] != 't' && s[10] != ' '))
        throw std::invalid_argument("expected 'T' in timestamp");
    int h = detail::read_digits(s, 11, 2);
    detail::expect_char(s, 13, ':');
    int mi = detail::read_digits(s, 14, 2);
    detail::expect_char(s, 16, ':');
    int sec = detail::read_digits(s, 17, 2);

    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60)
        throw std::invalid_argument("timestamp field out of range");

    std::size_t pos = 19;
    long millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) throw std::invalid_argument("empty fraction in timestamp");
        for (; digits < 3; ++digits) millis *= 10;
    }

    minutes offset{0};
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        int sign = s[pos] == '-' ? -1 : 1;
        int oh = detail::read_digits(s, pos + 1, 2);
        detail::expect_char(s, pos + 3, ':');
        int om = detail::read_digits(s, pos + 4, 2);
        if (oh > 23 || om > 59) throw std::invalid_argument("offset out of range");
        offset = minutes{sign * (oh * 60 + om)};
        pos += 6;
    } else {
        throw std::invalid_argument("timestamp lacks a UTC offset");
    }
    if (pos != s.size()) throw std::invalid_argument("trailing characters in timestamp");

    auto local = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{millis};
    return time_point_cast<milliseconds>(local - offset);
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`, adding `.mmm` only when non-zero.
inline std::string format_rfc3339(timestamp t) {
    using namespace std::chrono;
    auto day_point = floor<days>(t);
    year_month_day ymd{day_point};
    hh_mm_ss<milliseconds> tod{t - day_point};
    char buf[40];
    int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld",
                          static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                          static_cast<unsigned>(ymd.day()), static_cast<long>(tod.hours().count()),
                          static_cast<long>(tod.minutes().count()),
                          static_cast<long>(tod.seconds().count()));
    std::string out(buf, static_cast<std::size_t>(n));
    if (auto ms = tod.subseconds().count(); ms != 0) {
        std::snprintf(buf, sizeof buf, ".%03ld", static_cast<long>(ms));
        out += buf;
    }
    out += 'Z';
    return out;
}

} // namespace rangescore
