#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsr/csv.hpp"
#include "tsr/errors.hpp"
#include "tsr/nnet.hpp"

namespace tsr {

enum class FitModel { exponential, poly5 };
enum class FitStatus { success, non_convergence, non_positive_decay, non_finite, too_few_points };

inline const char* fit_model_name(FitModel m) {
    return m == FitModel::exponential ? "exp" : "poly5";
}
inline const char* fit_status_name(FitStatus s) {
    switch (s) {
        case FitStatus::success: return "success";
        case FitStatus::non_convergence: return "non_convergence";
        case FitStatus::non_positive_decay: return "non_positive_decay";
        case FitStatus::non_finite: return "non_finite";
        case FitStatus::too_few_points: return "too_few_points";
    }
    return "?";
}

/// Result of a curve fit: parameters (a,b,c) for the exponential model or
/// c0..c5 for the polynomial, or a typed failure.
struct FitOutcome {
    FitModel model = FitModel::exponential;
    FitStatus status = FitStatus::non_convergence;
    std::vector<double> params;
    double residual_sse = 0.0;

    bool ok() const { return status == FitStatus::success; }

    static FitOutcome failure(FitModel m, FitStatus s) { return FitOutcome{m, s, {}, 0.0}; }
};

struct SimilarityScore {
    double value = 0.0;
};

namespace detail {

// Gaussian elimination with partial pivoting; returns false when singular.
template <std::size_t N>
inline bool solve_linear(std::array<std::array<double, N>, N> a, std::array<double, N>& b) {
    for (std::size_t col = 0; col < N; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < N; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (a[pivot][col] == 0.0) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < N; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t col = N; col-- > 0;) {
        for (std::size_t c = col + 1; c < N; ++c) b[col] -= a[col][c] * b[c];
        b[col] /= a[col][col];
        if (!std::isfinite(b[col])) return false;
    }
    return true;
}

inline double exp_model_sse(std::span<const double> y, double a, double b, double c) {
    double sse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = static_cast<double>(i + 1);
        const double r = a * std::exp(-b * x) + c - y[i];
        sse += r * r;
    }
    return sse;
}

}  // namespace detail

/// Fits y = a*exp(-b*x) + c to the curve (x = 1..n) by damped Gauss-Newton
/// (Levenberg-Marquardt). Damping only ever accepts steps that reduce the
/// SSE. Success needs convergence, finite parameters, b > 0, and an amplitude
/// that is not negligible against the data scale (a near-constant curve makes
/// b unidentifiable).
inline FitOutcome fit_exponential(std::span<const double> y) {
    const std::size_t n = y.size();
    if (n < 4) return FitOutcome::failure(FitModel::exponential, FitStatus::too_few_points);
    double ymin = y[0], ymax = y[0], yabs = 0.0;
    for (double v : y) {
        if (!std::isfinite(v)) return FitOutcome::failure(FitModel::exponential, FitStatus::non_finite);
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
        yabs = std::max(yabs, std::abs(v));
    }

    // Starting point: c from the curve floor, a from the first point, b from
    // a log-linear regression of log(y - c0 + eps) on x.
    const double c0 = ymin;
    const double a_floor = std::max(1e-8 * std::max(yabs, 1.0), 1e-12);
    const double a0 = std::max(y[0] - c0, a_floor);
    const double eps = std::max(1e-6 * (ymax - ymin), 1e-12);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i + 1);
        const double ly = std::log(std::max(y[i] - c0 + eps, 1e-300));
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    double b0 = denom != 0.0 ? -((static_cast<double>(n) * sxy - sx * sy) / denom) : 0.1;
    if (!std::isfinite(b0)) b0 = 0.1;

    double a = a0, b = b0, c = c0;
    double sse = detail::exp_model_sse(y, a, b, c);
    double lambda = 1e-3;
    bool converged = false;

    for (std::size_t iter = 0; iter < 200 && !converged; ++iter) {
        // J^T J and J^T r for residuals r_i = model(x_i) - y_i,
        // J_i = [e^{-bx}, -a x e^{-bx}, 1].
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (std::size_t i = 0; i < n; ++i) {
            const double x = static_cast<double>(i + 1);
            const double e = std::exp(-b * x);
            const double r = a * e + c - y[i];
            const std::array<double, 3> j{e, -a * x * e, 1.0};
            for (std::size_t p = 0; p < 3; ++p) {
                for (std::size_t q = 0; q < 3; ++q) jtj[p][q] += j[p] * j[q];
                jtr[p] += j[p] * r;
            }
        }
        if (!std::isfinite(jtj[0][0]) || !std::isfinite(jtr[0]) || !std::isfinite(jtr[1])) {
            return FitOutcome::failure(FitModel::exponential, FitStatus::non_finite);
        }

        bool accepted = false;
        while (lambda < 1e15) {
            std::array<std::array<double, 3>, 3> damped = jtj;
            for (std::size_t p = 0; p < 3; ++p) {
                damped[p][p] += lambda * std::max(jtj[p][p], 1e-12);
            }
            std::array<double, 3> step{-jtr[0], -jtr[1], -jtr[2]};
            if (!detail::solve_linear<3>(damped, step)) {
                lambda *= 10.0;
                continue;
            }
            // Trust region on the decay rate: when a is small the b-column of
            // the Jacobian nearly vanishes and an undamped step can jump onto
            // the flat e^{-bx} ~ 0 plateau, where every gradient is zero.
            const double b_cap = std::max(1.0, 0.5 * std::abs(b));
            if (std::abs(step[1]) > b_cap) {
                const double scale = b_cap / std::abs(step[1]);
                for (double& s : step) s *= scale;
            }
            const double step_norm =
                std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
            if (step_norm < 1e-10) {
                converged = true;
                break;
            }
            const double sse_cand = detail::exp_model_sse(y, a + step[0], b + step[1], c + step[2]);
            if (std::isfinite(sse_cand) && sse_cand <= sse) {
                a += step[0];
                b += step[1];
                c += step[2];
                const double rel_drop = (sse - sse_cand) / std::max(sse, 1e-300);
                sse = sse_cand;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel_drop < 1e-10) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted && !converged) converged = true;  // damping exhausted: no descent direction left
    }

    if (!converged) return FitOutcome::failure(FitModel::exponential, FitStatus::non_convergence);
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || !std::isfinite(sse)) {
        return FitOutcome::failure(FitModel::exponential, FitStatus::non_finite);
    }
    if (std::abs(a) < 1e-6 * std::max(yabs, 1e-30)) {
        return FitOutcome::failure(FitModel::exponential, FitStatus::non_convergence);
    }
    if (b <= 0.0) return FitOutcome::failure(FitModel::exponential, FitStatus::non_positive_decay);
    return FitOutcome{FitModel::exponential, FitStatus::success, {a, b, c}, sse};
}

/// Least-squares degree-5 polynomial over the epoch axis min-max normalized
/// to [0,1], solved by Householder QR. Six points interpolate exactly.
inline FitOutcome fit_poly5(std::span<const double> y) {
    constexpr std::size_t kCoeffs = 6;
    const std::size_t n = y.size();
    if (n < kCoeffs) return FitOutcome::failure(FitModel::poly5, FitStatus::too_few_points);
    for (double v : y) {
        if (!std::isfinite(v)) return FitOutcome::failure(FitModel::poly5, FitStatus::non_finite);
    }

    // Vandermonde in t = (x-1)/(n-1).
    std::vector<double> a(n * kCoeffs);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        double p = 1.0;
        for (std::size_t j = 0; j < kCoeffs; ++j) {
            a[i * kCoeffs + j] = p;
            p *= t;
        }
    }
    std::vector<double> rhs(y.begin(), y.end());

    // Householder QR, applied column by column to A and the right-hand side.
    std::vector<double> v(n);
    for (std::size_t col = 0; col < kCoeffs; ++col) {
        double norm = 0.0;
        for (std::size_t i = col; i < n; ++i) norm += a[i * kCoeffs + col] * a[i * kCoeffs + col];
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = a[col * kCoeffs + col] > 0.0 ? -norm : norm;
        double vnorm2 = 0.0;
        for (std::size_t i = col; i < n; ++i) {
            v[i] = a[i * kCoeffs + col] - (i == col ? alpha : 0.0);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 == 0.0) continue;
        for (std::size_t j = col; j < kCoeffs; ++j) {
            double dot = 0.0;
            for (std::size_t i = col; i < n; ++i) dot += v[i] * a[i * kCoeffs + j];
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = col; i < n; ++i) a[i * kCoeffs + j] -= f * v[i];
        }
        double dot = 0.0;
        for (std::size_t i = col; i < n; ++i) dot += v[i] * rhs[i];
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t i = col; i < n; ++i) rhs[i] -= f * v[i];
    }

    std::vector<double> coeffs(kCoeffs, 0.0);
    for (std::size_t col = kCoeffs; col-- > 0;) {
        double s = rhs[col];
        for (std::size_t j = col + 1; j < kCoeffs; ++j) s -= a[col * kCoeffs + j] * coeffs[j];
        const double diag = a[col * kCoeffs + col];
        if (diag == 0.0) return FitOutcome::failure(FitModel::poly5, FitStatus::non_finite);
        coeffs[col] = s / diag;
        if (!std::isfinite(coeffs[col])) {
            return FitOutcome::failure(FitModel::poly5, FitStatus::non_finite);
        }
    }

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        double fit = 0.0, p = 1.0;
        for (std::size_t j = 0; j < kCoeffs; ++j) {
            fit += coeffs[j] * p;
            p *= t;
        }
        const double r = fit - y[i];
        sse += r * r;
    }
    return FitOutcome{FitModel::poly5, FitStatus::success, std::move(coeffs), sse};
}

/// Mean squared error between the fitted parameter vectors; empty when either
/// fit failed (rendered "---" downstream).
inline std::optional<SimilarityScore> similarity(const FitOutcome& reference,
                                                 const FitOutcome& candidate) {
    if (reference.model != candidate.model) {
        throw ModelFamilyMismatch("cannot compare exponential and polynomial fits");
    }
    if (!reference.ok() || !candidate.ok()) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < reference.params.size(); ++i) {
        const double d = reference.params[i] - candidate.params[i];
        sum += d * d;
    }
    return SimilarityScore{sum / static_cast<double>(reference.params.size())};
}

inline LossCurve mean_curve(std::span<const LossCurve> curves) {
    if (curves.empty()) throw LengthMismatch("mean of zero curves");
    const std::size_t epochs = curves.front().epochs();
    for (const LossCurve& c : curves) {
        if (c.epochs() != epochs || c.val_loss.size() != epochs) {
            throw LengthMismatch("curves differ in epoch count");
        }
    }
    LossCurve mean;
    mean.train_loss.assign(epochs, 0.0);
    mean.val_loss.assign(epochs, 0.0);
    for (const LossCurve& c : curves) {
        for (std::size_t e = 0; e < epochs; ++e) {
            mean.train_loss[e] += c.train_loss[e];
            mean.val_loss[e] += c.val_loss[e];
        }
    }
    const double k = static_cast<double>(curves.size());
    for (std::size_t e = 0; e < epochs; ++e) {
        mean.train_loss[e] /= k;
        mean.val_loss[e] /= k;
    }
    return mean;
}

/// Fit export: `model,status,p0..p5,residual_sse`; unused parameter slots stay
/// empty for the exponential model.
inline void write_fit_csv(const FitOutcome& fit, const std::string& path) {
    std::string out = "model,status,p0,p1,p2,p3,p4,p5,residual_sse\n";
    out += std::string(fit_model_name(fit.model)) + "," + fit_status_name(fit.status);
    for (std::size_t i = 0; i < 6; ++i) {
        out += ",";
        if (fit.ok() && i < fit.params.size()) out += csv::format_double(fit.params[i]);
    }
    out += ",";
    if (fit.ok()) out += csv::format_double(fit.residual_sse);
    out += "\n";
    csv::write_file(path, out);
}

inline FitOutcome read_fit_csv(const std::string& path) {
    const std::vector<std::string> lines = csv::read_lines(path);
    if (lines.size() < 2) throw FormatError("fit file needs a header and one row: " + path);
    const auto cells = csv::split_line(lines[1]);
    if (cells.size() != 9) throw FormatError("fit row needs 9 cells", 2);

    FitOutcome fit;
    if (cells[0] == "exp") {
        fit.model = FitModel::exponential;
    } else if (cells[0] == "poly5") {
        fit.model = FitModel::poly5;
    } else {
        throw FormatError("unknown fit model '" + cells[0] + "'", 2);
    }
    bool known = false;
    for (FitStatus s : {FitStatus::success, FitStatus::non_convergence, FitStatus::non_positive_decay,
                        FitStatus::non_finite, FitStatus::too_few_points}) {
        if (cells[1] == fit_status_name(s)) {
            fit.status = s;
            known = true;
        }
    }
    if (!known) throw FormatError("unknown fit status '" + cells[1] + "'", 2);
    if (fit.ok()) {
        const std::size_t count = fit.model == FitModel::exponential ? 3 : 6;
        for (std::size_t i = 0; i < count; ++i) {
            double v = 0.0;
            if (!csv::try_parse_double(cells[2 + i], v)) throw FormatError("bad fit parameter", 2);
            fit.params.push_back(v);
        }
        if (!csv::try_parse_double(cells[8], fit.residual_sse)) {
            throw FormatError("bad residual_sse", 2);
        }
    }
    return fit;
}

}  // namespace tsr
