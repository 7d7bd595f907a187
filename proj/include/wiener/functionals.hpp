#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wiener/errors.hpp"
#include "wiener/gaussian_calc.hpp"
#include "wiener/rng.hpp"

namespace wiener {

inline constexpr int kMaxSpaceDegree = 8;
inline constexpr int kDefaultQuadOrder = 20;

// State-independent kernel f(t, x) = p(t).
struct DeterministicPoly {
    Polynomial time_poly;
    double horizon = 1.0;
};

// Markovian kernel f(t, x) = sum_k a_k(t) x^k with polynomial-in-t
// coefficients, k <= 8.
struct SpacePoly {
    std::vector<Polynomial> coeffs_t;  // coeffs_t[k] multiplies x^k
    double horizon = 1.0;
};

// Black-box kernel; f_x may be empty, in which case operations that need the
// spatial derivative refuse the kernel.
struct CallbackKernel {
    std::function<double(double, double)> f;
    std::function<double(double, double)> f_x;
    double horizon = 1.0;
    QuadratureRule rule;
};

using DriftKernel = std::variant<DeterministicPoly, SpacePoly, CallbackKernel>;

inline DriftKernel deterministic_kernel(Polynomial time_poly, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("deterministic_kernel: bad horizon");
    return DeterministicPoly{std::move(time_poly), horizon};
}

inline DriftKernel space_poly_kernel(std::vector<Polynomial> coeffs_t, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("space_poly_kernel: bad horizon");
    if (static_cast<int>(coeffs_t.size()) > kMaxSpaceDegree + 1)
        throw std::invalid_argument("space_poly_kernel: x-degree cap exceeded");
    return SpacePoly{std::move(coeffs_t), horizon};
}

inline DriftKernel callback_kernel(std::function<double(double, double)> f,
                                   std::function<double(double, double)> f_x, double horizon,
                                   int quad_order = kDefaultQuadOrder) {
    if (!f) throw std::invalid_argument("callback_kernel: f required");
    if (!(horizon > 0.0)) throw std::invalid_argument("callback_kernel: bad horizon");
    return CallbackKernel{std::move(f), std::move(f_x), horizon, gauss_hermite(quad_order)};
}

inline double kernel_horizon(const DriftKernel& kernel) {
    return std::visit([](const auto& k) { return k.horizon; }, kernel);
}

namespace detail {

inline double checked_time(const DriftKernel& kernel, double t) {
    const double horizon = kernel_horizon(kernel);
    const double slack = 16.0 * 2.220446049250313e-16 * std::max(1.0, horizon);
    if (t < -slack || t > horizon + slack)
        throw std::invalid_argument("kernel: time outside [0, T]");
    return std::clamp(t, 0.0, horizon);
}

// Scalar-coefficient polynomial in x at a fixed time.
inline Polynomial space_poly_at(const SpacePoly& sp, double t) {
    std::vector<double> coeffs(sp.coeffs_t.size(), 0.0);
    for (std::size_t k = 0; k < sp.coeffs_t.size(); ++k) coeffs[k] = sp.coeffs_t[k](t);
    return Polynomial(std::move(coeffs));
}

inline Polynomial space_poly_time_derivative_at(const SpacePoly& sp, double t) {
    std::vector<double> coeffs(sp.coeffs_t.size(), 0.0);
    for (std::size_t k = 0; k < sp.coeffs_t.size(); ++k) coeffs[k] = sp.coeffs_t[k].derivative()(t);
    return Polynomial(std::move(coeffs));
}

}  // namespace detail

inline double kernel_eval(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (const auto* d = std::get_if<DeterministicPoly>(&kernel)) return d->time_poly(tc);
    if (const auto* s = std::get_if<SpacePoly>(&kernel)) return detail::space_poly_at(*s, tc)(x);
    const auto& c = std::get<CallbackKernel>(kernel);
    return c.f(tc, x);
}

inline double kernel_eval_dx(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (std::get_if<DeterministicPoly>(&kernel)) return 0.0;
    if (const auto* s = std::get_if<SpacePoly>(&kernel))
        return detail::space_poly_at(*s, tc).derivative()(x);
    const auto& c = std::get<CallbackKernel>(kernel);
    if (!c.f_x) throw UnsupportedKernel("kernel: spatial derivative not supplied");
    return c.f_x(tc, x);
}

// m(t, x) = E[f(t, N)] with N ~ Normal(x, t): Brownian marginals collapse
// every path expectation here to a one-dimensional Gaussian one.
inline double kernel_mean(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (const auto* d = std::get_if<DeterministicPoly>(&kernel)) return d->time_poly(tc);
    if (const auto* s = std::get_if<SpacePoly>(&kernel))
        return expect_polynomial(detail::space_poly_at(*s, tc), x, tc);
    const auto& c = std::get<CallbackKernel>(kernel);
    return expect_function([&](double y) { return c.f(tc, y); }, x, tc, c.rule);
}

// E[f^2(t, N)], N ~ Normal(x, t).
inline double kernel_sq_mean(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (const auto* d = std::get_if<DeterministicPoly>(&kernel)) {
        const double v = d->time_poly(tc);
        return v * v;
    }
    if (const auto* s = std::get_if<SpacePoly>(&kernel)) {
        const Polynomial p = detail::space_poly_at(*s, tc);
        return expect_polynomial(p * p, x, tc);
    }
    const auto& c = std::get<CallbackKernel>(kernel);
    return expect_function(
        [&](double y) {
            const double v = c.f(tc, y);
            return v * v;
        },
        x, tc, c.rule);
}

// E[f(t, N) f_x(t, N)], N ~ Normal(x, t); equals half the x-derivative of
// kernel_sq_mean by Gaussian integration by parts.
inline double kernel_ffx_mean(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (std::get_if<DeterministicPoly>(&kernel)) return 0.0;
    if (const auto* s = std::get_if<SpacePoly>(&kernel)) {
        const Polynomial p = detail::space_poly_at(*s, tc);
        return expect_polynomial(p * p.derivative(), x, tc);
    }
    const auto& c = std::get<CallbackKernel>(kernel);
    if (!c.f_x) throw UnsupportedKernel("kernel_ffx_mean: spatial derivative not supplied");
    return expect_function([&](double y) { return c.f(tc, y) * c.f_x(tc, y); }, x, tc, c.rule);
}

// Total time derivative of m(t, x) in the first slot. Analytic for
// polynomial kernels (E[f_t] + E[f_xx]/2 by the heat identity), one-sided
// second-order differences for callbacks near the ends of [0, T].
inline double kernel_mean_dt(const DriftKernel& kernel, double t, double x) {
    const double tc = detail::checked_time(kernel, t);
    if (const auto* d = std::get_if<DeterministicPoly>(&kernel))
        return d->time_poly.derivative()(tc);
    if (const auto* s = std::get_if<SpacePoly>(&kernel)) {
        const Polynomial pt = detail::space_poly_time_derivative_at(*s, tc);
        const Polynomial pxx = detail::space_poly_at(*s, tc).derivative().derivative();
        return expect_polynomial(pt, x, tc) + 0.5 * expect_polynomial(pxx, x, tc);
    }
    const double horizon = kernel_horizon(kernel);
    double h = std::max(1e-5, 1e-5 * horizon);
    h = std::min(h, horizon / 4.0);
    const auto m = [&](double s) { return kernel_mean(kernel, s, x); };
    if (tc - h >= 0.0 && tc + h <= horizon) return (m(tc + h) - m(tc - h)) / (2.0 * h);
    if (tc - h < 0.0) return (-3.0 * m(tc) + 4.0 * m(tc + h) - m(tc + 2.0 * h)) / (2.0 * h);
    return (3.0 * m(tc) - 4.0 * m(tc - h) + m(tc - 2.0 * h)) / (2.0 * h);
}

namespace detail {

// L(t, q, qd) = qd^2 - 2 qd m(t,q) + E[f^2](t,q); an expectation of a
// square, clamped at zero against roundoff.
inline double lagrangian_value(const DriftKernel& kernel, double t, double q, double qd) {
    const double m = kernel_mean(kernel, t, q);
    const double s = kernel_sq_mean(kernel, t, q);
    return std::max(0.0, qd * qd - 2.0 * qd * m + s);
}

}  // namespace detail

// Cost functional in Ito form, C = C0 - int f dB.
struct ItoForm {
    double c0 = 0.0;
    DriftKernel kernel;
};

// Cost functional C = int_0^T g(B(t)) dt + G(B(T)).
struct IntegralTerminal {
    Polynomial g;
    Polynomial G;
    double horizon = 1.0;
};

using CostFunctional = std::variant<ItoForm, IntegralTerminal>;

struct AuditBox {
    double t_min = 0.0, t_max = 1.0;
    double x_min = -2.0, x_max = 2.0;
    double qd_min = -3.0, qd_max = 3.0;
};

// Heuristic desk-scale evidence for the variational hypotheses; sampled
// scans, never a proof.
struct AuditReport {
    bool coercivity_ok = false;
    double alpha = 0.0;
    double beta = 0.0;
    bool joint_convexity_ok = false;
    double min_hessian_eigenvalue = 0.0;
    double lipschitz_g = 0.0;
    double lipschitz_G = 0.0;
    bool bounded_below_ok = false;
    std::optional<double> entropy_sample;
    bool entropy_divergence_suspected = false;
    std::string notes;
};

inline AuditReport audit_hypotheses(const DriftKernel& kernel, const AuditBox& box, int samples,
                                    std::uint64_t seed = 0xA0D17) {
    if (samples < 100) throw std::invalid_argument("audit_hypotheses: need at least 100 samples");
    if (!(box.t_max >= box.t_min) || !(box.x_max >= box.x_min) || !(box.qd_max >= box.qd_min))
        throw std::invalid_argument("audit_hypotheses: malformed box");
    const double horizon = kernel_horizon(kernel);
    const double t_lo = std::clamp(box.t_min, 0.0, horizon);
    const double t_hi = std::clamp(box.t_max, 0.0, horizon);

    AuditReport report;
    report.alpha = 0.5;
    const double scale = std::max({1.0, std::fabs(box.x_min), std::fabs(box.x_max),
                                   std::fabs(box.qd_min), std::fabs(box.qd_max)});
    const double h = 1e-3 * scale;

    RandomStream stream(seed, kAuditLane, 0);
    double beta = 0.0;
    double min_eig = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        const double t = t_lo + (t_hi - t_lo) * stream.next_uniform();
        const double q = box.x_min + (box.x_max - box.x_min) * stream.next_uniform();
        const double qd = box.qd_min + (box.qd_max - box.qd_min) * stream.next_uniform();
        const auto L = [&](double qq, double qqd) {
            return detail::lagrangian_value(kernel, t, qq, qqd);
        };
        const double center = L(q, qd);
        beta = std::max(beta, report.alpha * qd * qd - center);

        const double l_pp = L(q + h, qd);
        const double l_mm = L(q - h, qd);
        const double l_dp = L(q, qd + h);
        const double l_dm = L(q, qd - h);
        const double h11 = (l_pp - 2.0 * center + l_mm) / (h * h);
        const double h22 = (l_dp - 2.0 * center + l_dm) / (h * h);
        const double h12 = (L(q + h, qd + h) - L(q + h, qd - h) - L(q - h, qd + h) +
                            L(q - h, qd - h)) /
                           (4.0 * h * h);
        const double mid = 0.5 * (h11 + h22);
        const double rad = std::sqrt(0.25 * (h11 - h22) * (h11 - h22) + h12 * h12);
        min_eig = std::min(min_eig, mid - rad);
    }
    report.beta = std::max(0.0, beta);
    report.coercivity_ok = std::isfinite(report.beta);
    report.min_hessian_eigenvalue = min_eig;
    report.joint_convexity_ok = min_eig >= -1e-8;
    report.bounded_below_ok = true;  // L is a clamped expectation of a square

    // Novikov sample-mean probe: E[exp(int f^2(s, B(s)) ds)] on a small
    // internal ensemble. Logged only; finiteness of the true expectation is
    // not decided here.
    const int paths = std::min(samples, 2000);
    const int probe_n = 64;
    const double dt = horizon / probe_n;
    const double sqrt_dt = std::sqrt(dt);
    double novikov_total = 0.0;
    double novikov_largest = 0.0;
    bool novikov_finite = true;
    for (int j = 0; j < paths && novikov_finite; ++j) {
        RandomStream path_stream(seed, kAuditLane, static_cast<std::uint64_t>(j) + 1);
        double b = 0.0;
        double exponent = 0.0;
        for (int i = 0; i < probe_n; ++i) {
            const double f = kernel_eval(kernel, i * dt, b);
            exponent += f * f * dt;
            b += sqrt_dt * path_stream.next_normal();
        }
        const double w = std::exp(exponent);
        if (!std::isfinite(w)) {
            novikov_finite = false;
            break;
        }
        novikov_total += w;
        novikov_largest = std::max(novikov_largest, w);
    }
    const bool novikov_heavy =
        !novikov_finite || novikov_largest > 0.25 * novikov_total;

    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "sampled box scan (%d points): alpha=%.3g beta=%.6g min_eig=%.3g; "
                  "novikov probe %s (mean %.4g%s); heuristic evidence, not a proof",
                  samples, report.alpha, report.beta, min_eig,
                  novikov_finite ? "finite" : "overflowed",
                  novikov_finite ? novikov_total / paths : 0.0,
                  novikov_heavy ? ", heavy tail suspected" : "");
    report.notes = buf;
    return report;
}

namespace detail {

inline bool polynomial_bounded_below(const Polynomial& p) {
    if (p.is_zero() || p.degree() == 0) return true;
    return p.degree() % 2 == 0 && p.coefficient(p.degree()) > 0.0;
}

}  // namespace detail

inline AuditReport audit_hypotheses(const IntegralTerminal& cost, double x_min, double x_max,
                                    int samples, std::uint64_t seed = 0xA0D17);

// Dispatch over the two cost representations: the Ito form audits the
// Lagrangian built from its kernel, the integral+terminal form audits g, G.
inline AuditReport audit_hypotheses(const CostFunctional& cost, const AuditBox& box, int samples,
                                    std::uint64_t seed = 0xA0D17) {
    if (const auto* ito = std::get_if<ItoForm>(&cost))
        return audit_hypotheses(ito->kernel, box, samples, seed);
    return audit_hypotheses(std::get<IntegralTerminal>(cost), box.x_min, box.x_max, samples,
                            seed);
}

// Audit of an integral+terminal cost: Lipschitz slopes of g and G over the
// x-range, polynomial boundedness below, and a sampled finite-entropy probe
// E[e^{-C} |C|] with a heavy-tail suspicion flag.
inline AuditReport audit_hypotheses(const IntegralTerminal& cost, double x_min, double x_max,
                                    int samples, std::uint64_t seed) {
    if (samples < 100) throw std::invalid_argument("audit_hypotheses: need at least 100 samples");
    if (!(x_max >= x_min)) throw std::invalid_argument("audit_hypotheses: malformed range");
    AuditReport report;
    const Polynomial gp = cost.g.derivative();
    const Polynomial Gp = cost.G.derivative();
    for (int s = 0; s < samples; ++s) {
        const double x = x_min + (x_max - x_min) * (static_cast<double>(s) / (samples - 1));
        report.lipschitz_g = std::max(report.lipschitz_g, std::fabs(gp(x)));
        report.lipschitz_G = std::max(report.lipschitz_G, std::fabs(Gp(x)));
    }
    report.bounded_below_ok =
        detail::polynomial_bounded_below(cost.g) && detail::polynomial_bounded_below(cost.G);

    // finite-entropy probe on a small internal Brownian ensemble
    const int paths = std::min(samples, 4000);
    const int n = 64;
    const double dt = cost.horizon / n;
    const double sqrt_dt = std::sqrt(dt);
    double total = 0.0;
    double largest = 0.0;
    bool finite = true;
    for (int j = 0; j < paths; ++j) {
        RandomStream stream(seed, kAuditLane, static_cast<std::uint64_t>(j) + 1);
        double b = 0.0;
        double integral = 0.5 * cost.g(0.0) * dt;
        for (int i = 1; i <= n; ++i) {
            b += sqrt_dt * stream.next_normal();
            integral += (i == n ? 0.5 : 1.0) * cost.g(b) * dt;
        }
        const double c = integral + cost.G(b);
        const double w = std::exp(-c) * std::fabs(c);
        if (!std::isfinite(w)) {
            finite = false;
            break;
        }
        total += w;
        largest = std::max(largest, w);
    }
    if (finite) {
        report.entropy_sample = total / paths;
        report.entropy_divergence_suspected = largest > 0.25 * total;
    } else {
        report.entropy_divergence_suspected = true;
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "g,G slope scan on [%.3g, %.3g]; entropy probe %s%s; sampled evidence only, "
                  "integrability undecided",
                  x_min, x_max, finite ? "finite" : "overflowed",
                  report.entropy_divergence_suspected ? " (heavy tail suspected)" : "");
    report.notes = buf;
    return report;
}

}  // namespace wiener
