#pragma once

// Self-contained numerical benchmark kernel: dense complex matrices, an
// LU-based inverse, a Hermitian Cholesky factorization used as the
// positive-definiteness test, the unit-circle convergence precondition on
// (S1, S2), and the fixed-point iteration X <- (A1 - A2 X A2^H)^-1.
//
// Everything is deterministic for a fixed seed; sizes stay at desk scale.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bk/common.hpp"
#include "bk/prng.hpp"

namespace bk::workload {

using Complex = std::complex<double>;

struct ComplexMatrix {
    size_t n = 0;
    std::vector<Complex> entries;  // row-major, n*n

    ComplexMatrix() = default;
    explicit ComplexMatrix(size_t dim) : n(dim), entries(dim * dim, Complex(0, 0)) {}

    static ComplexMatrix identity(size_t dim) {
        ComplexMatrix m(dim);
        for (size_t i = 0; i < dim; ++i) m(i, i) = Complex(1, 0);
        return m;
    }

    Complex& operator()(size_t i, size_t j) { return entries[i * n + j]; }
    const Complex& operator()(size_t i, size_t j) const { return entries[i * n + j]; }

    bool all_finite() const {
        for (const Complex& c : entries)
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
        return true;
    }

    bool operator==(const ComplexMatrix&) const = default;
};

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b,
                             const char* what) {
    if (a.n != b.n)
        throw ValidationError(std::string("dimension mismatch in ") + what + ": " +
                              std::to_string(a.n) + " vs " + std::to_string(b.n));
}

inline ComplexMatrix adjoint(const ComplexMatrix& m) {
    ComplexMatrix out(m.n);
    for (size_t i = 0; i < m.n; ++i)
        for (size_t j = 0; j < m.n; ++j) out(j, i) = std::conj(m(i, j));
    return out;
}

inline ComplexMatrix multiply(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_same_dim(a, b, "multiply");
    ComplexMatrix out(a.n);
    for (size_t i = 0; i < a.n; ++i)
        for (size_t k = 0; k < a.n; ++k) {
            Complex aik = a(i, k);
            if (aik == Complex(0, 0)) continue;
            for (size_t j = 0; j < a.n; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_same_dim(a, b, "add");
    ComplexMatrix out = a;
    for (size_t i = 0; i < out.entries.size(); ++i) out.entries[i] += b.entries[i];
    return out;
}

inline ComplexMatrix subtract(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_same_dim(a, b, "subtract");
    ComplexMatrix out = a;
    for (size_t i = 0; i < out.entries.size(); ++i) out.entries[i] -= b.entries[i];
    return out;
}

inline ComplexMatrix scale(Complex factor, const ComplexMatrix& m) {
    ComplexMatrix out = m;
    for (Complex& c : out.entries) c *= factor;
    return out;
}

inline double frobenius_norm(const ComplexMatrix& m) {
    double sum = 0;
    for (const Complex& c : m.entries) sum += std::norm(c);
    return std::sqrt(sum);
}

// A = alpha * S + H, entry-wise.
inline ComplexMatrix build_A(Complex alpha, const ComplexMatrix& S, const ComplexMatrix& H) {
    require_same_dim(S, H, "build_A");
    ComplexMatrix out = H;
    for (size_t i = 0; i < out.entries.size(); ++i) out.entries[i] += alpha * S.entries[i];
    return out;
}

// ---------------------------------------------------------------------------
// LU inverse (Gauss-Jordan with partial pivoting).
// ---------------------------------------------------------------------------

class SingularMatrixError : public Error {
public:
    SingularMatrixError(size_t column, double pivot_magnitude)
        : Error("singular matrix: pivot magnitude " + format_general(pivot_magnitude) +
                " at column " + std::to_string(column)),
          column_(column) {}
    size_t column() const { return column_; }

private:
    size_t column_;
};

inline ComplexMatrix invert(const ComplexMatrix& a) {
    size_t n = a.n;
    ComplexMatrix work = a;
    ComplexMatrix inv = ComplexMatrix::identity(n);
    double max_abs = 0;
    for (const Complex& c : a.entries) max_abs = std::max(max_abs, std::abs(c));
    double pivot_tol = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * max_abs;

    for (size_t col = 0; col < n; ++col) {
        size_t pivot_row = col;
        double best = std::abs(work(col, col));
        for (size_t r = col + 1; r < n; ++r) {
            double mag = std::abs(work(r, col));
            if (mag > best) {
                best = mag;
                pivot_row = r;
            }
        }
        if (best <= pivot_tol) throw SingularMatrixError(col, best);
        if (pivot_row != col) {
            for (size_t j = 0; j < n; ++j) {
                std::swap(work(col, j), work(pivot_row, j));
                std::swap(inv(col, j), inv(pivot_row, j));
            }
        }
        Complex pivot = work(col, col);
        for (size_t j = 0; j < n; ++j) {
            work(col, j) /= pivot;
            inv(col, j) /= pivot;
        }
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            Complex factor = work(r, col);
            if (factor == Complex(0, 0)) continue;
            for (size_t j = 0; j < n; ++j) {
                work(r, j) -= factor * work(col, j);
                inv(r, j) -= factor * inv(col, j);
            }
        }
    }
    return inv;
}

// ---------------------------------------------------------------------------
// Hermitian Cholesky as the positive-definiteness test.
// ---------------------------------------------------------------------------

struct CholeskyOutcome {
    enum class Verdict { ok, not_hermitian, not_positive_definite };

    Verdict verdict = Verdict::ok;
    ComplexMatrix factor;            // lower triangular L with M = L L^H, when ok
    size_t index = 0;                // offending row (hermiticity) or pivot index
    double pivot = 0.0;              // offending pivot value
    double hermiticity_defect = 0.0; // ||M - M^H||_F / ||M||_F (0 when ||M||_F = 0)

    bool ok() const { return verdict == Verdict::ok; }
};

inline const char* to_string(CholeskyOutcome::Verdict v) {
    switch (v) {
        case CholeskyOutcome::Verdict::ok: return "ok";
        case CholeskyOutcome::Verdict::not_hermitian: return "not-hermitian";
        case CholeskyOutcome::Verdict::not_positive_definite: return "not-positive-definite";
    }
    return "?";
}

// Verifies ||M - M^H||_F <= tol_h * ||M||_F, then factors. Every pivot must
// exceed tol_h times the largest diagonal magnitude; the first offending
// pivot (or the most asymmetric row) is reported in the outcome.
// scale_hint raises the pivot floor when the caller knows the natural scale
// of the problem; without it a matrix that is analytically singular but
// rounds to a tiny positive diagonal would pass.
inline CholeskyOutcome cholesky_hpd(const ComplexMatrix& m, double tol_h = 1e-12,
                                    double scale_hint = 0.0) {
    size_t n = m.n;
    CholeskyOutcome out;

    double norm_m = frobenius_norm(m);
    double defect_sq = 0;
    size_t worst_row = 0;
    double worst = -1;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double d = std::abs(m(i, j) - std::conj(m(j, i)));
            defect_sq += d * d;
            if (d > worst) {
                worst = d;
                worst_row = i;
            }
        }
    double defect = std::sqrt(defect_sq);
    out.hermiticity_defect = norm_m > 0 ? defect / norm_m : 0.0;
    if (defect > tol_h * norm_m) {
        out.verdict = CholeskyOutcome::Verdict::not_hermitian;
        out.index = worst_row;
        return out;
    }

    double max_diag = 0;
    for (size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
    double pivot_floor = tol_h * std::max(max_diag, scale_hint);

    ComplexMatrix lower(n);
    for (size_t j = 0; j < n; ++j) {
        double diag = m(j, j).real();
        for (size_t k = 0; k < j; ++k) diag -= std::norm(lower(j, k));
        if (!(diag > pivot_floor)) {
            out.verdict = CholeskyOutcome::Verdict::not_positive_definite;
            out.index = j;
            out.pivot = diag;
            return out;
        }
        lower(j, j) = Complex(std::sqrt(diag), 0);
        for (size_t i = j + 1; i < n; ++i) {
            Complex sum = m(i, j);
            for (size_t k = 0; k < j; ++k) sum -= lower(i, k) * std::conj(lower(j, k));
            lower(i, j) = sum / lower(j, j).real();
        }
    }
    out.factor = std::move(lower);
    return out;
}

// ---------------------------------------------------------------------------
// Convergence precondition: M(theta) = e^{i theta} S2 + S1 + e^{-i theta} S2^H
// must be HPD for all theta. Sampling a grid is a necessary-condition check,
// not a proof over the whole unit circle.
// ---------------------------------------------------------------------------

struct PreconditionOutcome {
    bool holds = false;
    size_t sample_index = 0;  // first violating theta index, when !holds
    double theta = 0.0;
    CholeskyOutcome evidence;
};

inline PreconditionOutcome check_convergence_precondition(const ComplexMatrix& s1,
                                                          const ComplexMatrix& s2,
                                                          size_t n_theta) {
    require_same_dim(s1, s2, "check_convergence_precondition");
    if (n_theta < 1) throw ValidationError("n_theta must be at least 1");
    ComplexMatrix s2h = adjoint(s2);
    // The pivot floor is anchored to the scale of the inputs, so a sampled
    // M(theta) that is singular up to rounding counts as a violation.
    double scale_hint = frobenius_norm(s1) + 2.0 * frobenius_norm(s2);
    for (size_t j = 0; j < n_theta; ++j) {
        double theta = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n_theta);
        Complex z = std::polar(1.0, theta);
        ComplexMatrix m = add(add(scale(z, s2), s1), scale(std::conj(z), s2h));
        CholeskyOutcome chol = cholesky_hpd(m, 1e-12, scale_hint);
        if (!chol.ok()) {
            PreconditionOutcome out;
            out.holds = false;
            out.sample_index = j;
            out.theta = theta;
            out.evidence = std::move(chol);
            return out;
        }
    }
    PreconditionOutcome out;
    out.holds = true;
    return out;
}

// ---------------------------------------------------------------------------
// Fixed-point iteration.
// ---------------------------------------------------------------------------

struct WorkloadResult {
    int64_t iterations = 0;  // update steps actually performed
    bool converged = false;
    double residual = 0.0;   // final relative update norm
    ComplexMatrix solution;
    double elapsed_seconds = 0.0;
};

// X0 = A1^-1, X_{k+1} = (A1 - A2 X_k A2^H)^-1, stopping when the relative
// update ||X_{k+1} - X_k||_F <= tol * ||X_k||_F. The iteration count and
// final residual are always part of the result.
inline WorkloadResult fixed_point_solve(const ComplexMatrix& a1, const ComplexMatrix& a2,
                                        double tol, int64_t max_iter) {
    require_same_dim(a1, a2, "fixed_point_solve");
    if (tol <= 0) throw ValidationError("tol must be positive");
    if (max_iter < 1) throw ValidationError("max_iter must be at least 1");

    auto t0 = std::chrono::steady_clock::now();
    WorkloadResult result;
    ComplexMatrix a2h = adjoint(a2);
    ComplexMatrix x;
    try {
        x = invert(a1);
    } catch (const SingularMatrixError& e) {
        throw ValidationError(std::string(e.what()) + " while forming the initial iterate");
    }

    for (int64_t k = 1; k <= max_iter; ++k) {
        ComplexMatrix next;
        try {
            next = invert(subtract(a1, multiply(multiply(a2, x), a2h)));
        } catch (const SingularMatrixError& e) {
            throw ValidationError(std::string(e.what()) + " at iteration " +
                                  std::to_string(k));
        }
        double denom = frobenius_norm(x);
        double update = frobenius_norm(subtract(next, x));
        double rel = denom > 0 ? update / denom : update;
        x = std::move(next);
        result.iterations = k;
        result.residual = rel;
        if (rel <= tol) {
            result.converged = true;
            break;
        }
    }
    result.solution = std::move(x);
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// Input generation and JSON I/O.
// ---------------------------------------------------------------------------

enum class GenMode { random, guaranteed_convergent };

inline GenMode gen_mode_from_string(const std::string& s) {
    if (s == "random") return GenMode::random;
    if (s == "guaranteed-convergent") return GenMode::guaranteed_convergent;
    throw ValidationError("unknown generator mode '" + s + "'");
}

struct WorkloadInput {
    ComplexMatrix s1, h1, s2, h2;
    Complex alpha1{0, 0};
    Complex alpha2{0, 0};
    double tol = 1e-10;
    int64_t max_iter = 1000;
    int64_t hpd_samples = 64;
    std::optional<int64_t> seed;

    void validate() const {
        if (s1.n < 1) throw ValidationError("matrices must have dimension >= 1");
        if (s1.n != h1.n || s1.n != s2.n || s1.n != h2.n)
            throw ValidationError("S1, H1, S2, H2 must share one dimension");
        for (const ComplexMatrix* m : {&s1, &h1, &s2, &h2})
            if (!m->all_finite()) throw ValidationError("matrix entries must be finite");
        if (!std::isfinite(alpha1.real()) || !std::isfinite(alpha1.imag()) ||
            !std::isfinite(alpha2.real()) || !std::isfinite(alpha2.imag()))
            throw ValidationError("alpha scalars must be finite");
        if (tol <= 0) throw ValidationError("tol must be positive");
        if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
        if (hpd_samples < 1) throw ValidationError("hpd_samples must be at least 1");
    }
};

namespace detail {

inline ComplexMatrix draw_matrix(Xorshift64Star& rng, size_t n) {
    ComplexMatrix m(n);
    for (Complex& c : m.entries) {
        double re = rng.next_symmetric();
        double im = rng.next_symmetric();
        c = Complex(re, im);
    }
    return m;
}

}  // namespace detail

// Deterministic for fixed (seed, n, mode). Random mode draws every entry of
// S1, H1, S2, H2 (in that order, row-major, re before im) i.i.d. from
// [-1, 1). Guaranteed-convergent mode builds S1 = c I + B + B^H with
// c = ||B + B^H||_F + 1 and rescales S2 to Frobenius norm 0.05, which keeps
// lambda_min(S1) >= 1 > 2 ||S2||_F and therefore M(theta) positive definite
// for every theta; it sets alpha = 1 and H = 0 so the solver runs on A = S.
inline WorkloadInput generate_inputs(uint64_t seed, size_t n, GenMode mode) {
    if (n < 1) throw ValidationError("n must be at least 1");
    Xorshift64Star rng(seed);
    WorkloadInput input;
    input.seed = static_cast<int64_t>(seed);
    if (mode == GenMode::random) {
        input.s1 = detail::draw_matrix(rng, n);
        input.h1 = detail::draw_matrix(rng, n);
        input.s2 = detail::draw_matrix(rng, n);
        input.h2 = detail::draw_matrix(rng, n);
        input.alpha1 = Complex(0, 0);
        input.alpha2 = Complex(0, 0);
    } else {
        ComplexMatrix b = detail::draw_matrix(rng, n);
        ComplexMatrix sym = add(b, adjoint(b));
        double c = frobenius_norm(sym) + 1.0;
        input.s1 = add(scale(Complex(c, 0), ComplexMatrix::identity(n)), sym);
        ComplexMatrix raw = detail::draw_matrix(rng, n);
        double raw_norm = frobenius_norm(raw);
        input.s2 = raw_norm > 0 ? scale(Complex(0.05 / raw_norm, 0), raw) : ComplexMatrix(n);
        input.h1 = ComplexMatrix(n);
        input.h2 = ComplexMatrix(n);
        input.alpha1 = Complex(1, 0);
        input.alpha2 = Complex(1, 0);
    }
    return input;
}

// Complex numbers serialize as [re, im]; matrices as row-major arrays of
// arrays of those pairs.
inline nlohmann::json complex_to_json(Complex c) {
    return nlohmann::json::array({c.real(), c.imag()});
}

inline Complex complex_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ValidationError("complex number must be a two-element array [re, im]");
    return Complex(j[0].get<double>(), j[1].get<double>());
}

inline nlohmann::json matrix_to_json(const ComplexMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < m.n; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t j = 0; j < m.n; ++j) row.push_back(complex_to_json(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline ComplexMatrix matrix_from_json(const nlohmann::json& j, const char* name) {
    if (!j.is_array() || j.empty())
        throw ValidationError(std::string(name) + " must be a non-empty array of rows");
    size_t n = j.size();
    ComplexMatrix m(n);
    for (size_t i = 0; i < n; ++i) {
        if (!j[i].is_array() || j[i].size() != n)
            throw ValidationError(std::string(name) + " must be square (row " +
                                  std::to_string(i) + ")");
        for (size_t k = 0; k < n; ++k) m(i, k) = complex_from_json(j[i][k]);
    }
    return m;
}

inline nlohmann::json workload_input_to_json(const WorkloadInput& input) {
    nlohmann::json j;
    j["S1"] = matrix_to_json(input.s1);
    j["H1"] = matrix_to_json(input.h1);
    j["S2"] = matrix_to_json(input.s2);
    j["H2"] = matrix_to_json(input.h2);
    j["alpha1"] = complex_to_json(input.alpha1);
    j["alpha2"] = complex_to_json(input.alpha2);
    j["tol"] = input.tol;
    j["max_iter"] = input.max_iter;
    j["hpd_samples"] = input.hpd_samples;
    if (input.seed) j["seed"] = *input.seed;
    return j;
}

inline WorkloadInput workload_input_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("workload input must be a JSON object");
    static const std::set<std::string> kKnown = {"S1",     "H1",       "S2",
                                                 "H2",     "alpha1",   "alpha2",
                                                 "tol",    "max_iter", "hpd_samples",
                                                 "seed"};
    for (const auto& [key, _] : j.items())
        if (!kKnown.count(key)) throw ValidationError("unknown workload input key '" + key + "'");
    for (const char* required : {"S1", "H1", "S2", "H2"})
        if (!j.contains(required))
            throw ValidationError(std::string("workload input lacks '") + required + "'");
    WorkloadInput input;
    try {
        input.s1 = matrix_from_json(j.at("S1"), "S1");
        input.h1 = matrix_from_json(j.at("H1"), "H1");
        input.s2 = matrix_from_json(j.at("S2"), "S2");
        input.h2 = matrix_from_json(j.at("H2"), "H2");
        if (j.contains("alpha1")) input.alpha1 = complex_from_json(j.at("alpha1"));
        if (j.contains("alpha2")) input.alpha2 = complex_from_json(j.at("alpha2"));
        if (j.contains("tol")) input.tol = j.at("tol").get<double>();
        if (j.contains("max_iter")) input.max_iter = j.at("max_iter").get<int64_t>();
        if (j.contains("hpd_samples")) input.hpd_samples = j.at("hpd_samples").get<int64_t>();
        if (j.contains("seed")) input.seed = j.at("seed").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed workload input: ") + e.what());
    }
    input.validate();
    return input;
}

// ---------------------------------------------------------------------------
// End-to-end run: precondition check, then solve. Exit codes: 0 success,
// 2 usage or input error (mapped by the caller), 3 precondition violated
// (before any solve), 4 the solve failed to produce a solution (maximum
// iteration count exceeded, or a singular linear system).
// ---------------------------------------------------------------------------

struct WorkloadRunOutcome {
    int exit_code = 0;
    std::string diagnostic;  // one line, empty on success
    std::optional<WorkloadResult> result;
};

inline WorkloadRunOutcome run_workload(const WorkloadInput& input) {
    input.validate();
    WorkloadRunOutcome out;

    PreconditionOutcome pre =
        check_convergence_precondition(input.s1, input.s2,
                                       static_cast<size_t>(input.hpd_samples));
    if (!pre.holds) {
        out.exit_code = 3;
        out.diagnostic = "convergence precondition violated at theta index " +
                         std::to_string(pre.sample_index) + " (theta=" +
                         format_decimal(pre.theta) + "): " + to_string(pre.evidence.verdict);
        if (pre.evidence.verdict == CholeskyOutcome::Verdict::not_positive_definite)
            out.diagnostic += " pivot " + format_general(pre.evidence.pivot) + " at index " +
                              std::to_string(pre.evidence.index);
        return out;
    }

    ComplexMatrix a1 = build_A(input.alpha1, input.s1, input.h1);
    ComplexMatrix a2 = build_A(input.alpha2, input.s2, input.h2);
    WorkloadResult result;
    try {
        result = fixed_point_solve(a1, a2, input.tol, input.max_iter);
    } catch (const ValidationError& e) {
        out.exit_code = 4;
        out.diagnostic = std::string("solve failed: ") + e.what();
        return out;
    }
    if (!result.converged) {
        out.exit_code = 4;
        out.diagnostic = "maximum iteration count " + std::to_string(input.max_iter) +
                         " exceeded (residual " + format_general(result.residual) + ")";
        out.result = std::move(result);
        return out;
    }
    out.exit_code = 0;
    out.result = std::move(result);
    return out;
}

inline nlohmann::json metrics_json(const WorkloadResult& result, size_t n) {
    nlohmann::json j;
    j["iterations"] = result.iterations;
    j["residual"] = result.residual;
    j["elapsed_seconds"] = round6(result.elapsed_seconds);
    j["n"] = n;
    return j;
}

}  // namespace bk::workload
