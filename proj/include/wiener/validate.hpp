#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "wiener/clark_ocone.hpp"
#include "wiener/functionals.hpp"
#include "wiener/grid_paths.hpp"
#include "wiener/stochastic_lab.hpp"
#include "wiener/variational.hpp"

namespace wiener {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = true;
    std::string detail;
};

struct ValidateOptions {
    int corrupt_id = 0;  // test hook: forces the named criterion's tolerances shut
};

namespace detail {

class CriterionChecker {
public:
    CriterionChecker(int id, std::string name, int corrupt_id)
        : id_(id), name_(std::move(name)), corrupted_(id == corrupt_id) {}

    // measured <= tolerance, with the corrupt hook collapsing the tolerance
    void check_le(const char* label, double measured, double tolerance) {
        const double effective =
            corrupted_ ? (tolerance > 0.0 ? tolerance * 1e-12 : -1.0) : tolerance;
        const bool ok = measured <= effective;
        append(label, measured, effective, ok);
    }

    void check_ge(const char* label, double measured, double bound) {
        const double effective = corrupted_ ? std::fabs(bound) * 1e12 + 1.0 : bound;
        const bool ok = measured >= effective;
        append(label, measured, effective, ok);
    }

    void check_true(const char* label, bool ok) {
        if (corrupted_) ok = false;
        if (!detail_.empty()) detail_ += "; ";
        detail_ += std::string(label) + (ok ? " ok" : " FAILED");
        pass_ = pass_ && ok;
    }

    CriterionResult result() const {
        std::string detail = detail_;
        if (corrupted_) detail += " [tolerances corrupted by test hook]";
        return CriterionResult{id_, name_, pass_, detail};
    }

private:
    void append(const char* label, double measured, double tolerance, bool ok) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s%s = %.3g (%s %.3g)%s", detail_.empty() ? "" : "; ",
                      label, measured, ok ? "within" : "VIOLATES", tolerance,
                      ok ? "" : " FAILED");
        detail_ += buf;
        pass_ = pass_ && ok;
    }

    int id_;
    std::string name_;
    bool corrupted_;
    bool pass_ = true;
    std::string detail_;
};

inline DriftKernel validate_identity_kernel(double horizon) {
    return space_poly_kernel({Polynomial(), Polynomial({1.0})}, horizon);
}

inline DriftKernel validate_square_kernel(double horizon) {
    return space_poly_kernel({Polynomial(), Polynomial(), Polynomial({1.0})}, horizon);
}

inline double sup_abs(const DiscretePath& path) {
    double m = 0.0;
    for (double v : path.values()) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace detail

// 1. Identity-kernel free-endpoint solve collapses to the zero shift.
inline CriterionResult criterion_identity_solve(int corrupt_id) {
    detail::CriterionChecker check(1, "identity-kernel EL solve: q = 0, action = 1/4",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 1000);
    const LagrangianModel model = make_model(detail::validate_identity_kernel(1.0));
    const ElSolution solution = shoot(model, grid, FreeEndpoint{});
    check.check_le("sup|q|", detail::sup_abs(solution.path), 1e-6);
    check.check_le("|action - 0.25|", std::fabs(solution.action - 0.25), 1e-6);
    return check.result();
}

// 2. Deterministic kernels recover their drift exactly.
inline CriterionResult criterion_deterministic_recovery(int corrupt_id) {
    detail::CriterionChecker check(2, "deterministic drift recovery (f = 1 and f = sin t)",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 1000);
    {
        const LagrangianModel model = make_model(deterministic_kernel(Polynomial({1.0}), 1.0));
        const ElSolution solution = shoot(model, grid, FreeEndpoint{});
        double sup = 0.0;
        for (int i = 0; i <= grid.steps(); ++i)
            sup = std::max(sup, std::fabs(solution.path[i] - grid.node(i)));
        check.check_le("sup|q - t|", sup, 1e-8);
    }
    {
        const LagrangianModel model = make_model(callback_kernel(
            [](double t, double) { return std::sin(t); }, [](double, double) { return 0.0; },
            1.0));
        const ElSolution solution = shoot(model, grid, FreeEndpoint{});
        double sup = 0.0;
        for (int i = 0; i <= grid.steps(); ++i)
            sup = std::max(sup,
                           std::fabs(solution.path[i] - (1.0 - std::cos(grid.node(i)))));
        check.check_le("sup|q - (1 - cos t)|", sup, 1e-6);
    }
    return check.result();
}

// 3. Square-kernel solve satisfies its Euler-Lagrange equation and the
//    natural boundary condition; the terminal scan agrees.
inline CriterionResult criterion_square_kernel_consistency(int corrupt_id) {
    detail::CriterionChecker check(3, "square-kernel EL consistency and terminal scan",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 2000);
    const LagrangianModel model = make_model(detail::validate_square_kernel(1.0));
    const ElSolution solution = shoot(model, grid, FreeEndpoint{});
    check.check_le("el_residual_max", solution.el_residual_max, 1e-4);
    check.check_le("|natural_bc_residual|", std::fabs(solution.natural_bc_residual), 1e-8);
    const TerminalScan scan =
        scan_terminal(model, grid, solution.path[grid.steps()] + 0.37, 1.0, 21, 3);
    check.check_le("|scan terminal - free terminal|",
                   std::fabs(scan.best_terminal - solution.path[grid.steps()]), 1e-3);
    return check.result();
}

// 4. Clark-Ocone closed forms, residual decay, and the misprinted cubic
//    kernel failing the same test.
inline CriterionResult criterion_clark_ocone(int corrupt_id) {
    detail::CriterionChecker check(4, "Ito kernel closed forms and residual decay", corrupt_id);
    const double horizon = 1.0;
    const Polynomial x({0.0, 1.0});
    const Polynomial x2({0.0, 0.0, 1.0});
    const Polynomial x3({0.0, 0.0, 0.0, 1.0});

    const auto coeff_gap = [](const Polynomial& actual, const std::vector<double>& expected) {
        double gap = 0.0;
        for (std::size_t k = 0; k < expected.size(); ++k)
            gap = std::max(gap,
                           std::fabs(actual.coefficient(static_cast<int>(k)) - expected[k]));
        for (int k = static_cast<int>(expected.size()); k <= actual.degree(); ++k)
            gap = std::max(gap, std::fabs(actual.coefficient(k)));
        return gap;
    };

    const ItoKernelResult linear = ito_kernel(x, Polynomial(), horizon);
    check.check_le("g=x coeff gap", coeff_gap(linear.kernel.coeffs_t[0], {1.0, -1.0}), 1e-12);
    const ItoKernelResult quadratic = ito_kernel(x2, Polynomial(), horizon);
    check.check_le("g=x^2 coeff gap", coeff_gap(quadratic.kernel.coeffs_t[1], {2.0, -2.0}),
                   1e-12);
    const ItoKernelResult cubic = ito_kernel(x3, Polynomial(), horizon);
    double cubic_gap = coeff_gap(cubic.kernel.coeffs_t[0], {1.5, -3.0, 1.5});
    cubic_gap = std::max(cubic_gap, coeff_gap(cubic.kernel.coeffs_t[2], {3.0, -3.0}));
    check.check_le("g=x^3 coeff gap", cubic_gap, 1e-12);

    const IntegralTerminal cost{x3, Polynomial(), horizon};
    const std::size_t paths = 10'000;
    double exact_rms[3];
    double printed_rms[3];
    const Polynomial tau({horizon, -1.0});
    const SpacePoly printed{{tau * tau * tau, 3.0 * tau}, horizon};
    const int levels[3] = {250, 500, 1000};
    for (int level = 0; level < 3; ++level) {
        const BrownianEnsemble ensemble = sample_ensemble(
            uniform_grid(horizon, levels[level]), paths, 4242 + static_cast<std::uint64_t>(level));
        exact_rms[level] = ito_residual(cost, cubic, ensemble).residual_rms;
        printed_rms[level] =
            ito_residual(cost, printed, cubic.mean_c, ensemble).residual_rms;
    }
    check.check_le("derived kernel rms ratio (n 250->500)", exact_rms[1] / exact_rms[0], 0.8);
    check.check_le("derived kernel rms ratio (n 500->1000)", exact_rms[2] / exact_rms[1], 0.8);
    check.check_ge("printed kernel rms ratio (n 250->500)", printed_rms[1] / printed_rms[0],
                   0.95);
    check.check_ge("printed kernel rms ratio (n 500->1000)", printed_rms[2] / printed_rms[1],
                   0.95);
    check.check_ge("printed/derived rms at n=1000", printed_rms[2] / exact_rms[2], 10.0);
    return check.result();
}

// 5. KL identities between the closed form, the shift formula, and the
//    Monte Carlo estimator.
inline CriterionResult criterion_kl_identities(int corrupt_id) {
    detail::CriterionChecker check(5, "KL identities (shift formula vs MC estimator)",
                                   corrupt_id);
    {
        // dyadic grid so the ramp slope is exact
        const TimeGrid grid = uniform_grid(1.0, 1024);
        const DiscretePath ramp = path_from_function(grid, [](double t) { return t; });
        check.check_le("|kl_shift(t,0) - 0.5|", std::fabs(kl_shift(ramp, zero_path(grid)) - 0.5),
                       1e-15);
    }
    {
        const TimeGrid grid = uniform_grid(1.0, 128);
        const BrownianEnsemble ensemble = sample_ensemble(grid, 256, 99);
        const Polynomial slope({1.0, 0.5});
        const DriftKernel kernel = deterministic_kernel(slope, 1.0);
        std::vector<double> values(static_cast<std::size_t>(grid.steps()) + 1, 0.0);
        for (int i = 0; i < grid.steps(); ++i)
            values[static_cast<std::size_t>(i) + 1] =
                values[static_cast<std::size_t>(i)] + slope(grid.node(i)) * grid.dt();
        const DiscretePath target(grid, values);
        const DiscretePath z =
            path_from_function(grid, [](double t) { return t * t - 0.3 * t; });
        const McEstimate estimate = kl_estimate(z, kernel, ensemble);
        check.check_le("|kl_estimate - kl_shift| (deterministic kernel)",
                       std::fabs(estimate.value - kl_shift(z, target)), 1e-12);
    }
    {
        const TimeGrid grid = uniform_grid(1.0, 250);
        const BrownianEnsemble ensemble = sample_ensemble(grid, 100'000, 77);
        const McEstimate estimate =
            kl_estimate(zero_path(grid), detail::validate_identity_kernel(1.0), ensemble);
        check.check_le("|kl_estimate(0; f=x) - 0.25|", std::fabs(estimate.value - 0.25),
                       4.0 * estimate.std_err);
    }
    return check.result();
}

// 6. State-independence penalty: zero on deterministic drifts, the analytic
//    variance on mixtures.
inline CriterionResult criterion_penalty(int corrupt_id) {
    detail::CriterionChecker check(6, "state-independence penalty on drift families",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 100);
    const BrownianEnsemble ensemble = sample_ensemble(grid, 10'000, 4711);
    const DiscretePath ramp = path_from_function(grid, [](double t) { return t; });

    check.check_le("deterministic penalty",
                   penalty_D(DriftProcessSpec{DeterministicDrift{ramp}}, ensemble).value, 0.0);
    const McEstimate two =
        penalty_D(mixture_drift({ramp, scale(ramp, -1.0)}, {0.5, 0.5}), ensemble);
    check.check_le("mixture(+-t) relative error", std::fabs(two.value - 0.5) / 0.5, 0.05);
    const McEstimate three = penalty_D(
        mixture_drift({zero_path(grid), ramp, scale(ramp, 2.0)},
                      {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}),
        ensemble);
    check.check_le("three-component relative error",
                   std::fabs(three.value - 1.0 / 3.0) / (1.0 / 3.0), 0.05);
    return check.result();
}

// 7. Portmanteau cross-route: the MC minimizer and the shooting solver find
//    the same shift and the same optimal value.
inline CriterionResult criterion_cross_route(int corrupt_id) {
    detail::CriterionChecker check(7, "cross-route agreement (MC minimizer vs shooting)",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 200);
    const BrownianEnsemble ensemble = sample_ensemble(grid, 10'000, 42);
    const char* names[3] = {"f=x", "f=1", "f=x^2"};
    const DriftKernel kernels[3] = {detail::validate_identity_kernel(1.0),
                                    deterministic_kernel(Polynomial({1.0}), 1.0),
                                    detail::validate_square_kernel(1.0)};
    for (int k = 0; k < 3; ++k) {
        const LagrangianModel model = make_model(kernels[k]);
        const ElSolution solved = shoot(model, grid, FreeEndpoint{});
        const MinimizeReport minimized =
            minimize_action_mc(kernels[k], grid, ensemble, zero_path(grid), 1500, 0.1);
        char label[64];
        std::snprintf(label, sizeof(label), "%s path gap", names[k]);
        check.check_le(label, sup_distance(minimized.path, solved.path), 0.05);
        std::snprintf(label, sizeof(label), "%s |objective - action|", names[k]);
        check.check_le(label, std::fabs(minimized.objective_trace.back() - solved.action),
                       4.0 * minimized.mc_std_err + 1e-8);
    }
    return check.result();
}

// 8. Frozen-sample analytic gradient against centered finite differences.
inline CriterionResult criterion_gradient(int corrupt_id) {
    detail::CriterionChecker check(8, "frozen-sample gradient vs finite differences",
                                   corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 100);
    const BrownianEnsemble ensemble = sample_ensemble(grid, 2000, 31337);
    const char* names[3] = {"f=x", "f=1", "f=x^2"};
    const DriftKernel kernels[3] = {detail::validate_identity_kernel(1.0),
                                    deterministic_kernel(Polynomial({1.0}), 1.0),
                                    detail::validate_square_kernel(1.0)};
    for (int k = 0; k < 3; ++k) {
        const detail::FrozenObjective objective(kernels[k], grid, ensemble, true);
        RandomStream stream(808 + static_cast<std::uint64_t>(k), kAuditLane, 0);
        double worst = 0.0;
        std::vector<double> z(static_cast<std::size_t>(grid.steps()) + 1, 0.0);
        std::vector<double> grad(z.size(), 0.0);
        for (int pair = 0; pair < 20; ++pair) {
            const double a = stream.next_normal();
            const double b = stream.next_normal();
            for (int i = 1; i <= grid.steps(); ++i) {
                const double t = grid.node(i);
                z[static_cast<std::size_t>(i)] =
                    0.4 * a * t + 0.2 * b * std::sin(3.0 * t) + 0.02 * stream.next_normal();
            }
            objective.gradient(z, grad);
            const int node = 1 + static_cast<int>(stream.next_u64() %
                                                  static_cast<std::uint64_t>(grid.steps()));
            const double h = 1e-5;
            std::vector<double> plus(z), minus(z);
            plus[static_cast<std::size_t>(node)] += h;
            minus[static_cast<std::size_t>(node)] -= h;
            const double fd =
                (objective.objective(plus) - objective.objective(minus)) / (2.0 * h);
            const double rel = std::fabs(grad[static_cast<std::size_t>(node)] - fd) /
                               std::max(std::fabs(fd), 1e-10);
            worst = std::max(worst, rel);
        }
        char label[64];
        std::snprintf(label, sizeof(label), "%s worst relative error", names[k]);
        check.check_le(label, worst, 1e-4);
    }
    return check.result();
}

// 9. Girsanov density sanity: martingale mean one, sign-flip symmetry.
inline CriterionResult criterion_girsanov(int corrupt_id) {
    detail::CriterionChecker check(9, "Girsanov density sanity", corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 100);
    const BrownianEnsemble ensemble = sample_ensemble(grid, 100'000, 271828);
    const DiscretePath ramp = path_from_function(grid, [](double t) { return t; });
    const McEstimate up = mean_exp_logdensity(DriftProcessSpec{DeterministicDrift{ramp}}, ensemble);
    check.check_le("|E[dmu/dmu0] - 1| (F = t)", std::fabs(up.value - 1.0), 4.0 * up.std_err);
    const McEstimate down =
        mean_exp_logdensity(DriftProcessSpec{DeterministicDrift{scale(ramp, -1.0)}}, ensemble);
    const double se = std::sqrt(up.std_err * up.std_err + down.std_err * down.std_err);
    check.check_le("|mean(F) - mean(-F)|", std::fabs(up.value - down.value), 4.0 * se);
    return check.result();
}

// 10. Determinism: identical seeds reproduce ensembles, optimizer traces,
//     and estimator values bit for bit.
inline CriterionResult criterion_reproducibility(int corrupt_id) {
    detail::CriterionChecker check(10, "bitwise reproducibility at fixed seeds", corrupt_id);
    const TimeGrid grid = uniform_grid(1.0, 100);
    {
        const BrownianEnsemble a = sample_ensemble(grid, 64, 2025);
        const BrownianEnsemble b = sample_ensemble(grid, 64, 2025);
        std::vector<double> pa(101), pb(101);
        bool same = true;
        for (std::size_t j = 0; j < 10; ++j) {
            a.fill_path(j, pa);
            b.fill_path(j, pb);
            same = same && pa == pb;
        }
        check.check_true("ensemble paths bitwise equal", same);
    }
    {
        const TimeGrid small = uniform_grid(1.0, 50);
        const BrownianEnsemble ensemble = sample_ensemble(small, 500, 5150);
        const DiscretePath init =
            path_from_function(small, [](double t) { return 0.2 * t; });
        const MinimizeReport a = minimize_action_mc(detail::validate_identity_kernel(1.0), small,
                                                    ensemble, init, 30, 0.1);
        const MinimizeReport b = minimize_action_mc(detail::validate_identity_kernel(1.0), small,
                                                    ensemble, init, 30, 0.1);
        check.check_true("optimizer traces bitwise equal",
                         a.objective_trace == b.objective_trace &&
                             a.path.values() == b.path.values());
    }
    {
        const BrownianEnsemble ensemble = sample_ensemble(grid, 10'000, 616);
        const McEstimate a =
            kl_estimate(zero_path(grid), detail::validate_identity_kernel(1.0), ensemble);
        const McEstimate b =
            kl_estimate(zero_path(grid), detail::validate_identity_kernel(1.0), ensemble);
        check.check_true("kl_estimate bitwise equal",
                         a.value == b.value && a.std_err == b.std_err);
    }
    return check.result();
}

inline std::vector<CriterionResult> run_validation(const ValidateOptions& options = {}) {
    std::vector<CriterionResult> results;
    results.push_back(criterion_identity_solve(options.corrupt_id));
    results.push_back(criterion_deterministic_recovery(options.corrupt_id));
    results.push_back(criterion_square_kernel_consistency(options.corrupt_id));
    results.push_back(criterion_clark_ocone(options.corrupt_id));
    results.push_back(criterion_kl_identities(options.corrupt_id));
    results.push_back(criterion_penalty(options.corrupt_id));
    results.push_back(criterion_cross_route(options.corrupt_id));
    results.push_back(criterion_gradient(options.corrupt_id));
    results.push_back(criterion_girsanov(options.corrupt_id));
    results.push_back(criterion_reproducibility(options.corrupt_id));
    return results;
}

}  // namespace wiener
