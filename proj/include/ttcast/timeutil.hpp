#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "ttcast/errors.hpp"

namespace ttcast {

// All timestamps are UTC unix seconds. ISO-8601 parsing/formatting is done
// with the civil-date algorithms, so no dependence on the process time zone.

namespace detail {

// days since 1970-01-01 for a proleptic Gregorian date
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);            // [0, 399]
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1; // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;           // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yi = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yi + (m <= 2));
}

} // namespace detail

// Accepts "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z'.
inline std::int64_t parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int n = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &se, &n) == 6 ||
        std::sscanf(s.c_str(), "%d-%d-%d%n", &y, &mo, &d, &n) == 3) {
        const std::string rest = s.substr(static_cast<std::size_t>(n));
        if (!rest.empty() && rest != "Z")
            throw config_error("unparsable ISO-8601 timestamp: " + s);
        if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
            throw config_error("out-of-range ISO-8601 timestamp: " + s);
        return detail::days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
    }
    throw config_error("unparsable ISO-8601 timestamp: " + s);
}

inline std::string format_iso8601(std::int64_t t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y, m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

} // namespace ttcast
