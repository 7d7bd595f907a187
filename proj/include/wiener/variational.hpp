#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wiener/errors.hpp"
#include "wiener/functionals.hpp"
#include "wiener/grid_paths.hpp"

namespace wiener {

struct LagrangianModel {
    DriftKernel kernel;
    double horizon = 1.0;
};

inline LagrangianModel make_model(DriftKernel kernel) {
    const double horizon = kernel_horizon(kernel);
    return LagrangianModel{std::move(kernel), horizon};
}

// L(t, q, qd) = qd^2 - 2 qd m(t, q) + E[f^2](t, q). The 1/2 prefactor lives
// in the action, not here.
inline double lagrangian(const LagrangianModel& model, double t, double q, double qd) {
    return detail::lagrangian_value(model.kernel, t, q, qd);
}

// Explicit second-order reduction of the Euler-Lagrange equation:
// qdd = d/dt m(t, q) + E[f f_x](t, q). The qd terms cancel exactly, so the
// slope argument is unused but kept for the stated operation shape.
inline double el_rhs(const LagrangianModel& model, double t, double q, double /*qd*/ = 0.0) {
    return kernel_mean_dt(model.kernel, t, q) + kernel_ffx_mean(model.kernel, t, q);
}

inline constexpr double kStateBlowupLimit = 1e8;

namespace detail {

// RK4 stages visit t = T*s/(2n) for s = 0..2n. For polynomial kernels the EL
// right-hand side at a fixed time is one Gaussian-smoothed polynomial
// E[f_t + f_xx/2 + f f_x](N(q, t)), precomputed here per stage time.
class ElIntegrator {
public:
    ElIntegrator(const LagrangianModel& model, const TimeGrid& grid)
        : model_(&model), grid_(grid) {
        if (std::fabs(grid.horizon() - model.horizon) > 1e-12 * std::max(1.0, model.horizon))
            throw std::invalid_argument("integrate_el: grid horizon does not match model");
        const int stages = 2 * grid.steps();
        if (const auto* d = std::get_if<DeterministicPoly>(&model.kernel)) {
            branch_ = Branch::Deterministic;
            const Polynomial dp = d->time_poly.derivative();
            values_.resize(static_cast<std::size_t>(stages) + 1);
            for (int s = 0; s <= stages; ++s) values_[static_cast<std::size_t>(s)] = dp(stage_time(s));
        } else if (const auto* sp = std::get_if<SpacePoly>(&model.kernel)) {
            branch_ = Branch::Space;
            polys_.reserve(static_cast<std::size_t>(stages) + 1);
            for (int s = 0; s <= stages; ++s) {
                const double t = stage_time(s);
                const Polynomial p = space_poly_at(*sp, t);
                const Polynomial pt = space_poly_time_derivative_at(*sp, t);
                const Polynomial combined =
                    pt + 0.5 * p.derivative().derivative() + p * p.derivative();
                polys_.push_back(heat_smooth(combined, t));
            }
        } else {
            branch_ = Branch::Callback;
        }
    }

    double stage_time(int s) const noexcept {
        return grid_.horizon() * s / (2 * grid_.steps());
    }

    double rhs(int stage, double q) const {
        switch (branch_) {
            case Branch::Deterministic: return values_[static_cast<std::size_t>(stage)];
            case Branch::Space: return polys_[static_cast<std::size_t>(stage)](q);
            default: return el_rhs(*model_, stage_time(stage), q);
        }
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    const LagrangianModel& model() const noexcept { return *model_; }

private:
    enum class Branch { Deterministic, Space, Callback };
    const LagrangianModel* model_;
    TimeGrid grid_;
    Branch branch_ = Branch::Callback;
    std::vector<double> values_;
    std::vector<Polynomial> polys_;
};

struct IntegrateState {
    std::vector<double> q;
    std::vector<double> qd;
};

inline IntegrateState rk4_integrate(const ElIntegrator& integrator, double slope0) {
    const TimeGrid& grid = integrator.grid();
    const int n = grid.steps();
    const double dt = grid.dt();
    IntegrateState state;
    state.q.assign(static_cast<std::size_t>(n) + 1, 0.0);
    state.qd.assign(static_cast<std::size_t>(n) + 1, 0.0);
    state.qd[0] = slope0;
    double y0 = 0.0;
    double y1 = slope0;
    for (int i = 0; i < n; ++i) {
        const double a1 = y1;
        const double b1 = integrator.rhs(2 * i, y0);
        const double a2 = y1 + 0.5 * dt * b1;
        const double b2 = integrator.rhs(2 * i + 1, y0 + 0.5 * dt * a1);
        const double a3 = y1 + 0.5 * dt * b2;
        const double b3 = integrator.rhs(2 * i + 1, y0 + 0.5 * dt * a2);
        const double a4 = y1 + dt * b3;
        const double b4 = integrator.rhs(2 * i + 2, y0 + dt * a3);
        y0 += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        y1 += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if (!std::isfinite(y0) || !std::isfinite(y1) || std::fabs(y0) > kStateBlowupLimit) {
            char msg[96];
            std::snprintf(msg, sizeof(msg), "integrate_el: state blew up near t=%.6g",
                          grid.node(i + 1));
            throw IntegrationDiverged(grid.node(i + 1), msg);
        }
        state.q[static_cast<std::size_t>(i) + 1] = y0;
        state.qd[static_cast<std::size_t>(i) + 1] = y1;
    }
    return state;
}

}  // namespace detail

struct IntegrateResult {
    DiscretePath path;
    std::vector<double> slopes;  // qd at every node, from the RK4 state
    double terminal_slope = 0.0;
};

// Classical RK4 with fixed step dt on the order-2 system (q, qd).
inline IntegrateResult integrate_el(const LagrangianModel& model, double slope0,
                                    const TimeGrid& grid) {
    const detail::ElIntegrator integrator(model, grid);
    detail::IntegrateState state = detail::rk4_integrate(integrator, slope0);
    const double terminal = state.qd.back();
    return IntegrateResult{DiscretePath(grid, std::move(state.q)), std::move(state.qd), terminal};
}

// Action (1/2) int L dt by the midpoint rule: qd on interval midpoints from
// forward differences, q averaged to the midpoints.
inline double action(const LagrangianModel& model, const DiscretePath& path) {
    if (std::fabs(path.grid().horizon() - model.horizon) > 1e-12 * std::max(1.0, model.horizon))
        throw std::invalid_argument("action: path horizon does not match model");
    const int n = path.grid().steps();
    const double dt = path.grid().dt();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t_mid = path.grid().node(i) + 0.5 * dt;
        const double q_mid = 0.5 * (path[i] + path[i + 1]);
        const double qd = (path[i + 1] - path[i]) / dt;
        acc += lagrangian(model, t_mid, q_mid, qd);
    }
    return 0.5 * acc * dt;
}

struct FreeEndpoint {};
struct FixedEndpoint {
    double terminal = 0.0;
};
using BoundaryCondition = std::variant<FreeEndpoint, FixedEndpoint>;

struct ShootConfig {
    double bracket_limit = 50.0;  // slopes searched in [-limit, limit]
    double tolerance_scale = 1e-9;
    int max_iterations = 200;
};

struct ElSolution {
    DiscretePath path;
    std::vector<double> slopes;
    double slope0 = 0.0;
    double action = 0.0;
    double el_residual_max = 0.0;
    double natural_bc_residual = 0.0;
};

namespace detail {

struct ShotOutcome {
    bool diverged = false;
    double residual = 0.0;
    double terminal_q = 0.0;
    double terminal_qd = 0.0;
};

inline ShotOutcome evaluate_shot(const ElIntegrator& integrator, const BoundaryCondition& bc,
                                 double slope0) {
    ShotOutcome outcome;
    try {
        const IntegrateState state = rk4_integrate(integrator, slope0);
        outcome.terminal_q = state.q.back();
        outcome.terminal_qd = state.qd.back();
        if (std::holds_alternative<FreeEndpoint>(bc)) {
            // natural boundary condition L_qd(T) = 0, i.e. qd(T) = m(T, q(T))
            outcome.residual = outcome.terminal_qd -
                               kernel_mean(integrator.model().kernel,
                                           integrator.grid().horizon(), outcome.terminal_q);
        } else {
            outcome.residual = outcome.terminal_q - std::get<FixedEndpoint>(bc).terminal;
        }
    } catch (const IntegrationDiverged&) {
        outcome.diverged = true;
    }
    return outcome;
}

inline ElSolution shoot_impl(const ElIntegrator& integrator, const BoundaryCondition& bc,
                             const ShootConfig& config) {
    const auto residual_at = [&](double s) { return evaluate_shot(integrator, bc, s); };
    const auto accepted = [&](const ShotOutcome& o) {
        return !o.diverged &&
               std::fabs(o.residual) <= config.tolerance_scale * (1.0 + std::fabs(o.terminal_qd));
    };

    std::map<double, double> evaluated;  // slope -> residual, diverged probes excluded
    int diverged_count = 0;
    std::optional<double> root;

    const auto probe = [&](double s) -> bool {
        const ShotOutcome o = residual_at(s);
        if (o.diverged) {
            ++diverged_count;
            return false;
        }
        if (accepted(o)) {
            root = s;
            return true;
        }
        evaluated[s] = o.residual;
        return false;
    };

    std::pair<double, double> bracket{0.0, 0.0};
    bool have_bracket = false;
    const auto scan_bracket = [&]() {
        double prev_s = 0.0;
        double prev_r = 0.0;
        bool first = true;
        for (const auto& [s, r] : evaluated) {
            if (!first && prev_r * r < 0.0) {
                bracket = {prev_s, s};
                return true;
            }
            prev_s = s;
            prev_r = r;
            first = false;
        }
        return false;
    };

    if (!probe(0.0)) {
        for (double level = 1.0; !have_bracket && !root; level *= 2.0) {
            const bool last = level >= config.bracket_limit;
            const double s = std::min(level, config.bracket_limit);
            if (probe(s) || probe(-s)) break;
            have_bracket = scan_bracket();
            if (last) break;
        }
    }

    if (!root && !have_bracket) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "shoot: no sign change in residual over [%.3g, %.3g] "
                      "(%zu finite probes, %d diverged)",
                      -config.bracket_limit, config.bracket_limit, evaluated.size(),
                      diverged_count);
        throw ShootingFailed(msg);
    }

    if (!root) {
        double lo = bracket.first;
        double hi = bracket.second;
        double r_lo = evaluated[lo];
        double r_hi = evaluated[hi];
        for (int iter = 0; iter < config.max_iterations && !root; ++iter) {
            double candidate = hi - r_hi * (hi - lo) / (r_hi - r_lo);
            const double width = hi - lo;
            if (!std::isfinite(candidate) || candidate <= lo + 1e-3 * width ||
                candidate >= hi - 1e-3 * width)
                candidate = 0.5 * (lo + hi);
            const ShotOutcome o = residual_at(candidate);
            if (o.diverged)
                throw ShootingFailed("shoot: integration diverged inside the bracket");
            if (accepted(o)) {
                root = candidate;
                break;
            }
            if (o.residual * r_lo < 0.0) {
                hi = candidate;
                r_hi = o.residual;
            } else {
                lo = candidate;
                r_lo = o.residual;
            }
            if (hi - lo <= 8.0 * 2.220446049250313e-16 * (1.0 + std::fabs(lo) + std::fabs(hi))) {
                root = std::fabs(r_lo) <= std::fabs(r_hi) ? lo : hi;
                break;
            }
        }
        if (!root) throw ShootingFailed("shoot: residual refinement did not converge");
    }

    const TimeGrid& grid = integrator.grid();
    const LagrangianModel& model = integrator.model();
    const IntegrateState state = rk4_integrate(integrator, *root);
    DiscretePath path(grid, state.q);
    ElSolution solution{path, state.qd, *root, 0.0, 0.0, 0.0};
    solution.action = action(model, path);

    const int n = grid.steps();
    const double dt = grid.dt();
    double residual_max = 0.0;
    for (int i = 1; i < n; ++i) {
        const double second = (path[i + 1] - 2.0 * path[i] + path[i - 1]) / (dt * dt);
        residual_max = std::max(residual_max, std::fabs(second - integrator.rhs(2 * i, path[i])));
    }
    solution.el_residual_max = residual_max;
    if (std::holds_alternative<FreeEndpoint>(bc)) {
        solution.natural_bc_residual =
            state.qd.back() - kernel_mean(model.kernel, grid.horizon(), path[n]);
    } else {
        solution.natural_bc_residual = path[n] - std::get<FixedEndpoint>(bc).terminal;
    }
    return solution;
}

}  // namespace detail

// Shooting solve of the Euler-Lagrange boundary-value problem. The slope
// bracket expands geometrically from [-1, 1] up to the configured limit;
// secant steps accelerate the bisection once a sign change is found.
inline ElSolution shoot(const LagrangianModel& model, const TimeGrid& grid,
                        const BoundaryCondition& bc, const ShootConfig& config = {}) {
    const detail::ElIntegrator integrator(model, grid);
    return detail::shoot_impl(integrator, bc, config);
}

struct TerminalScan {
    double best_terminal = 0.0;
    double best_action = 0.0;
    int evaluations = 0;
};

// Validation route for the free endpoint: minimize the action over a coarse
// terminal-value grid (fixed-endpoint solves), refining around the best
// point and finishing with a parabolic fit.
inline TerminalScan scan_terminal(const LagrangianModel& model, const TimeGrid& grid,
                                  double center, double halfwidth = 1.0, int points = 21,
                                  int rounds = 3, const ShootConfig& config = {}) {
    if (points < 5 || points % 2 == 0)
        throw std::invalid_argument("scan_terminal: points must be odd and >= 5");
    const detail::ElIntegrator integrator(model, grid);
    TerminalScan scan;
    double best_a = center;
    double best_value = std::numeric_limits<double>::infinity();
    double lo = center - halfwidth;
    double hi = center + halfwidth;
    std::vector<double> values(static_cast<std::size_t>(points));
    std::vector<double> targets(static_cast<std::size_t>(points));
    for (int round = 0; round < rounds; ++round) {
        for (int k = 0; k < points; ++k) {
            const double a = lo + (hi - lo) * k / (points - 1);
            targets[static_cast<std::size_t>(k)] = a;
            double value = std::numeric_limits<double>::infinity();
            try {
                value = detail::shoot_impl(integrator, FixedEndpoint{a}, config).action;
                ++scan.evaluations;
            } catch (const ShootingFailed&) {
            } catch (const IntegrationDiverged&) {
            }
            values[static_cast<std::size_t>(k)] = value;
            if (value < best_value) {
                best_value = value;
                best_a = a;
            }
        }
        const double spacing = (hi - lo) / (points - 1);
        lo = best_a - 2.0 * spacing;
        hi = best_a + 2.0 * spacing;
    }
    if (!std::isfinite(best_value))
        throw ShootingFailed("scan_terminal: no terminal value admitted a solution");

    // parabolic refinement on the last grid around the best point
    int best_k = -1;
    for (int k = 0; k < points; ++k)
        if (values[static_cast<std::size_t>(k)] == best_value) best_k = k;
    if (best_k > 0 && best_k < points - 1) {
        const double f0 = values[static_cast<std::size_t>(best_k) - 1];
        const double f1 = values[static_cast<std::size_t>(best_k)];
        const double f2 = values[static_cast<std::size_t>(best_k) + 1];
        const double denom = f0 - 2.0 * f1 + f2;
        if (std::isfinite(f0) && std::isfinite(f2) && denom > 0.0) {
            const double spacing = targets[1] - targets[0];
            const double shift = 0.5 * (f0 - f2) / denom;
            const double a_ref = targets[static_cast<std::size_t>(best_k)] + shift * spacing;
            try {
                const double v_ref =
                    detail::shoot_impl(integrator, FixedEndpoint{a_ref}, config).action;
                ++scan.evaluations;
                if (v_ref <= best_value) {
                    best_value = v_ref;
                    best_a = a_ref;
                }
            } catch (const ShootingFailed&) {
            } catch (const IntegrationDiverged&) {
            }
        }
    }
    scan.best_terminal = best_a;
    scan.best_action = best_value;
    return scan;
}

// CSV schema for solutions: header "t,q,qdot".
inline void write_solution_csv(const ElSolution& solution, std::ostream& out) {
    out << "t,q,qdot\n";
    const TimeGrid& grid = solution.path.grid();
    for (int i = 0; i <= grid.steps(); ++i)
        out << detail::format_double(grid.node(i)) << ',' << detail::format_double(solution.path[i])
            << ',' << detail::format_double(solution.slopes[static_cast<std::size_t>(i)]) << '\n';
}

}  // namespace wiener
