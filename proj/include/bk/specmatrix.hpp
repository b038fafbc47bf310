#pragma once

// Benchmark specification files and their expansion into the run matrix.
//
// The file format is line oriented. '#' starts a comment outside quoted
// strings, blank lines are ignored:
//
//   benchmark "<name>"
//   param <name> = <v1>, <v2>, ...
//   exclude <name>=<value> [&& <name>=<value> ...]
//   command = "<template with {param} placeholders>"
//   metric <name> from elapsed | exitstatus | file:<relpath>:<dot.path>
//   estimate_seconds = <positive int>
//   timeout_factor = <decimal > 1, default 1.5>
//   workdir_root = <path, default ./bk-runs>
//
// Values are tokens matching [A-Za-z0-9._-]+, names match
// [A-Za-z_][A-Za-z0-9_]*. Unknown keys are a hard error.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bk/common.hpp"

namespace bk::specmatrix {

inline bool is_name(std::string_view s) {
    if (s.empty()) return false;
    auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto tail = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    if (!head(s[0])) return false;
    return std::all_of(s.begin() + 1, s.end(), tail);
}

inline bool is_value_token(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    });
}

// Exact rational with a power-of-ten denominator, so timeout arithmetic
// never suffers from binary rounding (10 * 1.2 must give 12, not 13).
struct Rational {
    int64_t num = 3;
    int64_t den = 2;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    static Rational parse(const std::string& text, int line) {
        std::string t = trim(text);
        size_t dot = t.find('.');
        std::string digits = dot == std::string::npos ? t : t.substr(0, dot) + t.substr(dot + 1);
        size_t frac_len = dot == std::string::npos ? 0 : t.size() - dot - 1;
        if (digits.empty() || frac_len > 9 ||
            !std::all_of(digits.begin(), digits.end(),
                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw ParseError(line, "expected a decimal number, got '" + t + "'");
        }
        Rational r;
        try {
            r.num = std::stoll(digits);
        } catch (const std::exception&) {
            throw ParseError(line, "decimal number out of range: '" + t + "'");
        }
        r.den = 1;
        for (size_t i = 0; i < frac_len; ++i) r.den *= 10;
        int64_t g = std::gcd(r.num, r.den);
        if (g > 1) {
            r.num /= g;
            r.den /= g;
        }
        return r;
    }

    // Exact decimal rendering; den always divides a power of ten here.
    std::string to_decimal() const {
        int64_t d = den;
        int64_t scale = 1;
        while (d % 10 == 0) d /= 10;
        while (d % 5 == 0) { d /= 5; scale *= 2; }
        while (d % 2 == 0) { d /= 2; scale *= 5; }
        int64_t n = num * scale;
        int64_t full_den = den * scale;
        std::string s = std::to_string(n);
        int64_t frac_digits = 0;
        for (int64_t x = full_den; x > 1; x /= 10) ++frac_digits;
        if (frac_digits == 0) return s;
        while (static_cast<int64_t>(s.size()) <= frac_digits) s.insert(s.begin(), '0');
        s.insert(s.size() - frac_digits, ".");
        return s;
    }

    bool operator==(const Rational& o) const { return num * o.den == o.num * den; }
};

struct MetricSource {
    enum class Kind { elapsed, exit_status, file };

    std::string name;
    Kind kind = Kind::elapsed;
    std::string file_path;  // kind == file only
    std::string json_path;  // dot-separated keys into the JSON document

    bool operator==(const MetricSource&) const = default;
};

struct ExclusionRule {
    // A configuration is excluded iff every conjunct matches.
    std::vector<std::pair<std::string, std::string>> conjuncts;

    bool operator==(const ExclusionRule&) const = default;
};

struct Param {
    std::string name;
    std::vector<std::string> values;

    bool operator==(const Param&) const = default;
};

struct BenchmarkSpec {
    std::string name;
    std::vector<Param> params;
    std::vector<ExclusionRule> excludes;
    std::string command_template;
    std::vector<MetricSource> metrics;
    int64_t estimate_seconds = 0;
    Rational timeout_factor{3, 2};
    std::string workdir_root = "./bk-runs";

    const Param* find_param(std::string_view pname) const {
        for (const auto& p : params)
            if (p.name == pname) return &p;
        return nullptr;
    }

    // ceil(estimate_seconds * timeout_factor), computed in integers.
    int64_t timeout_seconds() const {
        return (estimate_seconds * timeout_factor.num + timeout_factor.den - 1) /
               timeout_factor.den;
    }

    bool operator==(const BenchmarkSpec&) const = default;
};

struct Configuration {
    std::map<std::string, std::string> assignment;
    size_t index = 0;

    bool operator==(const Configuration&) const = default;
};

namespace detail {

// Strips the comment part of a line; '#' inside double quotes does not count.
inline std::string strip_comment(const std::string& line) {
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quotes = !in_quotes;
        else if (line[i] == '#' && !in_quotes) return line.substr(0, i);
    }
    return line;
}

inline std::string unquote(const std::string& s, int line, const char* what) {
    std::string t = trim(s);
    if (t.size() < 2 || t.front() != '"' || t.back() != '"')
        throw ParseError(line, std::string(what) + " must be enclosed in double quotes");
    return t.substr(1, t.size() - 2);
}

// Calls fn(name) for every {name} placeholder. Only braces wrapping a
// valid identifier count as placeholders; everything else (JSON snippets,
// shell constructs) passes through as literal text.
template <typename Fn>
void scan_placeholders(const std::string& tmpl, Fn&& fn) {
    for (size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '{') continue;
        size_t close = tmpl.find('}', i + 1);
        if (close == std::string::npos) break;
        std::string inner = tmpl.substr(i + 1, close - i - 1);
        if (!is_name(inner)) continue;  // literal brace, keep scanning from the next char
        fn(inner, i, close);
        i = close;
    }
}

}  // namespace detail

inline BenchmarkSpec parse_spec(const std::string& text) {
    BenchmarkSpec spec;
    bool saw_name = false, saw_command = false, saw_estimate = false;
    bool saw_factor = false, saw_workdir = false;
    int command_line = 0;

    std::vector<std::string> lines = split(text, '\n');
    for (size_t li = 0; li < lines.size(); ++li) {
        int lineno = static_cast<int>(li) + 1;
        std::string line = trim(detail::strip_comment(lines[li]));
        if (line.empty()) continue;

        size_t sp = line.find_first_of(" \t=");
        std::string key = line.substr(0, sp == std::string::npos ? line.size() : sp);
        std::string rest = sp == std::string::npos ? "" : trim(line.substr(sp));

        if (key == "benchmark") {
            if (saw_name) throw ParseError(lineno, "duplicate 'benchmark' line");
            spec.name = detail::unquote(rest, lineno, "benchmark name");
            if (!is_name(spec.name))
                throw ParseError(lineno, "benchmark name '" + spec.name + "' is not an identifier");
            saw_name = true;
        } else if (key == "param") {
            size_t eq = rest.find('=');
            if (eq == std::string::npos) throw ParseError(lineno, "param line needs '='");
            std::string pname = trim(rest.substr(0, eq));
            if (!is_name(pname))
                throw ParseError(lineno, "invalid param name '" + pname + "'");
            if (spec.find_param(pname))
                throw ParseError(lineno, "duplicate param '" + pname + "'");
            Param p;
            p.name = pname;
            for (const std::string& raw : split(rest.substr(eq + 1), ',')) {
                std::string v = trim(raw);
                if (!is_value_token(v))
                    throw ParseError(lineno, "invalid value token '" + v + "' for param '" +
                                                 pname + "'");
                if (std::find(p.values.begin(), p.values.end(), v) != p.values.end())
                    throw ParseError(lineno, "duplicate value '" + v + "' for param '" + pname +
                                                 "'");
                p.values.push_back(v);
            }
            if (p.values.empty())
                throw ParseError(lineno, "param '" + pname + "' has an empty value list");
            spec.params.push_back(std::move(p));
        } else if (key == "exclude") {
            ExclusionRule rule;
            for (const std::string& raw : [&] {
                     std::vector<std::string> parts;
                     size_t start = 0;
                     for (size_t pos; (pos = rest.find("&&", start)) != std::string::npos;
                          start = pos + 2)
                         parts.push_back(rest.substr(start, pos - start));
                     parts.push_back(rest.substr(start));
                     return parts;
                 }()) {
                std::string term = trim(raw);
                size_t eq = term.find('=');
                if (eq == std::string::npos)
                    throw ParseError(lineno, "exclude term '" + term + "' needs '='");
                std::string pname = trim(term.substr(0, eq));
                std::string value = trim(term.substr(eq + 1));
                const Param* p = spec.find_param(pname);
                if (!p)
                    throw ParseError(lineno, "exclude names undeclared param '" + pname + "'");
                if (std::find(p->values.begin(), p->values.end(), value) == p->values.end())
                    throw ParseError(lineno, "exclude names undeclared value '" + pname + "=" +
                                                 value + "'");
                rule.conjuncts.emplace_back(pname, value);
            }
            spec.excludes.push_back(std::move(rule));
        } else if (key == "command") {
            if (saw_command) throw ParseError(lineno, "duplicate 'command' line");
            size_t eq = rest.find('=');
            if (eq != 0) throw ParseError(lineno, "command line needs '='");
            spec.command_template = detail::unquote(rest.substr(1), lineno, "command template");
            saw_command = true;
            command_line = lineno;
        } else if (key == "metric") {
            size_t from = rest.find(" from ");
            if (from == std::string::npos)
                throw ParseError(lineno, "metric line needs '<name> from <source>'");
            MetricSource m;
            m.name = trim(rest.substr(0, from));
            if (!is_name(m.name))
                throw ParseError(lineno, "invalid metric name '" + m.name + "'");
            for (const auto& existing : spec.metrics)
                if (existing.name == m.name)
                    throw ParseError(lineno, "duplicate metric '" + m.name + "'");
            std::string src = trim(rest.substr(from + 6));
            if (src == "elapsed") {
                m.kind = MetricSource::Kind::elapsed;
            } else if (src == "exitstatus") {
                m.kind = MetricSource::Kind::exit_status;
            } else if (src.rfind("file:", 0) == 0) {
                m.kind = MetricSource::Kind::file;
                std::string spec_part = src.substr(5);
                size_t colon = spec_part.find(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == spec_part.size())
                    throw ParseError(lineno, "file metric needs 'file:<relpath>:<dot.path>'");
                m.file_path = spec_part.substr(0, colon);
                m.json_path = spec_part.substr(colon + 1);
            } else {
                throw ParseError(lineno, "unknown metric source '" + src + "'");
            }
            spec.metrics.push_back(std::move(m));
        } else if (key == "estimate_seconds") {
            if (saw_estimate) throw ParseError(lineno, "duplicate 'estimate_seconds' line");
            size_t eq = rest.find('=');
            if (eq != 0) throw ParseError(lineno, "estimate_seconds line needs '='");
            std::string v = trim(rest.substr(1));
            if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) {
                    return std::isdigit(static_cast<unsigned char>(c));
                }))
                throw ParseError(lineno, "estimate_seconds must be a positive integer");
            try {
                spec.estimate_seconds = std::stoll(v);
            } catch (const std::exception&) {
                throw ParseError(lineno, "estimate_seconds out of range");
            }
            if (spec.estimate_seconds <= 0)
                throw ParseError(lineno, "estimate_seconds must be a positive integer");
            saw_estimate = true;
        } else if (key == "timeout_factor") {
            if (saw_factor) throw ParseError(lineno, "duplicate 'timeout_factor' line");
            size_t eq = rest.find('=');
            if (eq != 0) throw ParseError(lineno, "timeout_factor line needs '='");
            spec.timeout_factor = Rational::parse(rest.substr(1), lineno);
            if (spec.timeout_factor.num <= spec.timeout_factor.den)
                throw ParseError(lineno, "timeout_factor must be greater than 1");
            saw_factor = true;
        } else if (key == "workdir_root") {
            if (saw_workdir) throw ParseError(lineno, "duplicate 'workdir_root' line");
            size_t eq = rest.find('=');
            if (eq != 0) throw ParseError(lineno, "workdir_root line needs '='");
            spec.workdir_root = trim(rest.substr(1));
            if (spec.workdir_root.empty())
                throw ParseError(lineno, "workdir_root must not be empty");
            saw_workdir = true;
        } else {
            throw ParseError(lineno, "unknown key '" + key + "'");
        }
    }

    if (!saw_name) throw ParseError(0, "missing 'benchmark' line");
    if (!saw_command) throw ParseError(0, "missing 'command' line");
    if (!saw_estimate) throw ParseError(0, "missing 'estimate_seconds' line");

    detail::scan_placeholders(spec.command_template,
                              [&](const std::string& pname, size_t, size_t) {
                                  if (!spec.find_param(pname))
                                      throw ParseError(command_line,
                                                       "command template references undeclared "
                                                       "param '" +
                                                           pname + "'");
                              });
    return spec;
}

inline bool matches_rule(const ExclusionRule& rule,
                         const std::map<std::string, std::string>& assignment) {
    return std::all_of(rule.conjuncts.begin(), rule.conjuncts.end(), [&](const auto& term) {
        auto it = assignment.find(term.first);
        return it != assignment.end() && it->second == term.second;
    });
}

inline bool is_excluded(const BenchmarkSpec& spec,
                        const std::map<std::string, std::string>& assignment) {
    return std::any_of(spec.excludes.begin(), spec.excludes.end(),
                       [&](const ExclusionRule& r) { return matches_rule(r, assignment); });
}

// Cartesian product in declaration order with the last param varying
// fastest, minus excluded combinations. Indices are assigned after
// filtering and are contiguous. Empty params yield the single empty
// assignment.
inline std::vector<Configuration> expand(const BenchmarkSpec& spec) {
    std::vector<Configuration> out;
    std::vector<size_t> odometer(spec.params.size(), 0);
    while (true) {
        std::map<std::string, std::string> assignment;
        for (size_t i = 0; i < spec.params.size(); ++i)
            assignment[spec.params[i].name] = spec.params[i].values[odometer[i]];
        if (!is_excluded(spec, assignment)) {
            Configuration c;
            c.assignment = std::move(assignment);
            c.index = out.size();
            out.push_back(std::move(c));
        }
        // advance, last param fastest
        size_t i = spec.params.size();
        while (i > 0) {
            --i;
            if (++odometer[i] < spec.params[i].values.size()) break;
            odometer[i] = 0;
            if (i == 0) return out;
        }
        if (spec.params.empty()) return out;
    }
}

inline std::string render_command(const BenchmarkSpec& spec, const Configuration& config) {
    std::string out;
    size_t last = 0;
    detail::scan_placeholders(spec.command_template,
                              [&](const std::string& pname, size_t open, size_t close) {
                                  out.append(spec.command_template, last, open - last);
                                  auto it = config.assignment.find(pname);
                                  if (it == config.assignment.end())
                                      throw ValidationError("configuration lacks param '" +
                                                            pname + "'");
                                  out.append(it->second);
                                  last = close + 1;
                              });
    out.append(spec.command_template, last, std::string::npos);
    return out;
}

// Canonical text form; parse(serialize(s)) == s.
inline std::string serialize_spec(const BenchmarkSpec& spec) {
    std::string out;
    out += "benchmark \"" + spec.name + "\"\n";
    for (const auto& p : spec.params) {
        out += "param " + p.name + " = ";
        for (size_t i = 0; i < p.values.size(); ++i)
            out += (i ? ", " : "") + p.values[i];
        out += "\n";
    }
    for (const auto& rule : spec.excludes) {
        out += "exclude ";
        for (size_t i = 0; i < rule.conjuncts.size(); ++i) {
            if (i) out += " && ";
            out += rule.conjuncts[i].first + "=" + rule.conjuncts[i].second;
        }
        out += "\n";
    }
    out += "command = \"" + spec.command_template + "\"\n";
    for (const auto& m : spec.metrics) {
        out += "metric " + m.name + " from ";
        switch (m.kind) {
            case MetricSource::Kind::elapsed: out += "elapsed"; break;
            case MetricSource::Kind::exit_status: out += "exitstatus"; break;
            case MetricSource::Kind::file:
                out += "file:" + m.file_path + ":" + m.json_path;
                break;
        }
        out += "\n";
    }
    out += "estimate_seconds = " + std::to_string(spec.estimate_seconds) + "\n";
    out += "timeout_factor = " + spec.timeout_factor.to_decimal() + "\n";
    out += "workdir_root = " + spec.workdir_root + "\n";
    return out;
}

}  // namespace bk::specmatrix
