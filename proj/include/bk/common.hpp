#pragma once

#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bk {

// Base class for all harness errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text (spec files, JSON documents, timestamps).
// Carries a 1-based line number when one is known, 0 otherwise.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& msg)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// A precondition or invariant violated by otherwise well-formed input.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Timestamps. All wall-clock values are UTC microseconds since the Unix
// epoch; the textual form is RFC 3339 with a 'Z' suffix.
// ---------------------------------------------------------------------------

inline int64_t now_utc_micros() {
    struct timespec ts{};
    clock_gettime(CLOCK_REALTIME, &ts);
    return static_cast<int64_t>(ts.tv_sec) * 1000000 + ts.tv_nsec / 1000;
}

// yyyy-mm-ddThh:mm:ss.ffffffZ; the fractional part is always emitted with
// six digits so equal-precision strings sort chronologically.
inline std::string format_rfc3339(int64_t micros) {
    time_t secs = static_cast<time_t>(micros >= 0 ? micros / 1000000
                                                  : (micros - 999999) / 1000000);
    int64_t frac = micros - static_cast<int64_t>(secs) * 1000000;
    struct tm tm{};
    gmtime_r(&secs, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06" PRId64 "Z",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min,
                  tm.tm_sec, frac);
    return buf;
}

// yyyymmddThhmmssZ, used for run-directory names.
inline std::string format_compact_utc(int64_t micros) {
    time_t secs = static_cast<time_t>(micros / 1000000);
    struct tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// Accepts "yyyy-mm-ddThh:mm:ssZ" with an optional fractional-second part of
// up to six digits. Anything else, including numeric offsets, is rejected.
inline int64_t parse_rfc3339(const std::string& text) {
    struct tm tm{};
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon,
                    &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed) != 6 ||
        consumed != 19) {
        throw ValidationError("invalid RFC 3339 timestamp: '" + text + "'");
    }
    size_t pos = 19;
    int64_t frac = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        size_t digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 6) frac = frac * 10 + (text[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) throw ValidationError("invalid RFC 3339 timestamp: '" + text + "'");
        for (; digits < 6; ++digits) frac *= 10;
    }
    if (pos + 1 != text.size() || text[pos] != 'Z') {
        throw ValidationError("timestamp must be UTC with 'Z' suffix: '" + text + "'");
    }
    if (tm.tm_mon < 1 || tm.tm_mon > 12 || tm.tm_mday < 1 || tm.tm_mday > 31 ||
        tm.tm_hour > 23 || tm.tm_min > 59 || tm.tm_sec > 60) {
        throw ValidationError("timestamp field out of range: '" + text + "'");
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    time_t secs = timegm(&tm);
    return static_cast<int64_t>(secs) * 1000000 + frac;
}

// ---------------------------------------------------------------------------
// Decimal formatting. Reports and records carry at most six fractional
// digits; trailing zeros are trimmed for human-facing output.
// ---------------------------------------------------------------------------

inline std::string format_fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string format_decimal(double v) {
    std::string s = format_fixed6(v);
    size_t last = s.find_last_not_of('0');
    if (last != std::string::npos && s[last] == '.') --last;
    return s.substr(0, last + 1);
}

// Six significant digits, scientific when needed; for residual-sized values.
inline std::string format_general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Nearest value with at most six fractional digits, for JSON payloads.
inline double round6(double v) {
    if (!std::isfinite(v)) return v;
    return std::round(v * 1e6) / 1e6;
}

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write: " + path);
}

}  // namespace bk
