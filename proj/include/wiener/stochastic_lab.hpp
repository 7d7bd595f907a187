#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "wiener/errors.hpp"
#include "wiener/functionals.hpp"
#include "wiener/grid_paths.hpp"
#include "wiener/rng.hpp"

namespace wiener {

struct McEstimate {
    double value = 0.0;
    double std_err = 0.0;
};

namespace detail {

inline constexpr std::size_t kSectionBlocks = 20;
inline constexpr std::size_t kReduceBlocks = 64;

// Standard error by sectioning the per-path values into contiguous blocks.
inline double sectioned_std_err(std::span<const double> values,
                                std::size_t blocks = kSectionBlocks) {
    const std::size_t m = values.size();
    blocks = std::min(blocks, m);
    if (blocks < 2) return 0.0;
    std::vector<double> means(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t lo = b * m / blocks;
        const std::size_t hi = (b + 1) * m / blocks;
        means[b] = pairwise_mean(values.subspan(lo, hi - lo));
    }
    const double grand = pairwise_mean(means);
    double acc = 0.0;
    for (double v : means) acc += (v - grand) * (v - grand);
    return std::sqrt(acc / static_cast<double>(blocks - 1) / static_cast<double>(blocks));
}

inline McEstimate mc_mean(std::span<const double> per_path_values) {
    return {pairwise_mean(per_path_values), sectioned_std_err(per_path_values)};
}

}  // namespace detail

// Seeded lazy handle for M discretized standard Brownian paths. Paths are
// regenerated on demand from (seed, path index) substreams and never stored,
// so access order and worker count cannot change the sample.
class BrownianEnsemble {
public:
    BrownianEnsemble(TimeGrid grid, std::size_t path_count, std::uint64_t seed)
        : grid_(grid), path_count_(path_count), seed_(seed) {
        if (path_count == 0) throw std::invalid_argument("BrownianEnsemble: need at least one path");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t path_count() const noexcept { return path_count_; }
    std::uint64_t seed() const noexcept { return seed_; }

    // increments dB_i ~ Normal(0, dt), i = 0..n-1
    void fill_increments(std::size_t j, std::span<double> out) const {
        const int n = grid_.steps();
        if (j >= path_count_) throw std::invalid_argument("fill_increments: path index out of range");
        if (out.size() != static_cast<std::size_t>(n))
            throw std::invalid_argument("fill_increments: bad span length");
        RandomStream stream(seed_, kBrownianLane, j);
        const double sqrt_dt = std::sqrt(grid_.dt());
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = sqrt_dt * stream.next_normal();
    }

    // nodes B_0 = 0, B_{i+1} = B_i + dB_i
    void fill_path(std::size_t j, std::span<double> out) const {
        const int n = grid_.steps();
        if (j >= path_count_) throw std::invalid_argument("fill_path: path index out of range");
        if (out.size() != static_cast<std::size_t>(n) + 1)
            throw std::invalid_argument("fill_path: bad span length");
        RandomStream stream(seed_, kBrownianLane, j);
        const double sqrt_dt = std::sqrt(grid_.dt());
        out[0] = 0.0;
        for (int i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i) + 1] =
                out[static_cast<std::size_t>(i)] + sqrt_dt * stream.next_normal();
    }

private:
    TimeGrid grid_;
    std::size_t path_count_;
    std::uint64_t seed_;
};

inline BrownianEnsemble sample_ensemble(const TimeGrid& grid, std::size_t path_count,
                                        std::uint64_t seed) {
    return BrownianEnsemble(grid, path_count, seed);
}

// Materialized path matrix, row j = path j; used where common random numbers
// must be swept many times (the frozen-sample optimizer).
inline std::vector<double> materialize_paths(const BrownianEnsemble& ensemble) {
    const std::size_t stride = static_cast<std::size_t>(ensemble.grid().steps()) + 1;
    std::vector<double> matrix(ensemble.path_count() * stride);
    detail::parallel_for_blocks(detail::kReduceBlocks, [&](std::size_t b) {
        const std::size_t lo = b * ensemble.path_count() / detail::kReduceBlocks;
        const std::size_t hi = (b + 1) * ensemble.path_count() / detail::kReduceBlocks;
        for (std::size_t j = lo; j < hi; ++j)
            ensemble.fill_path(j, std::span<double>(matrix.data() + j * stride, stride));
    });
    return matrix;
}

// Drift processes for Girsanov densities and the penalty functional.
struct DeterministicDrift {
    DiscretePath shift;  // F(t); the realized slope is its forward difference
};

struct StateDrift {
    DriftKernel kernel;  // slope f(t, B(t)) along the realized path
};

struct MixtureDrift {
    std::vector<DiscretePath> components;
    std::vector<double> probs;
};

using DriftProcessSpec = std::variant<DeterministicDrift, StateDrift, MixtureDrift>;

// Component draws come from a lane independent of the Brownian increments.
inline DriftProcessSpec mixture_drift(std::vector<DiscretePath> components,
                                      std::vector<double> probs) {
    if (components.size() < 2) throw std::invalid_argument("mixture_drift: need >= 2 components");
    if (components.size() != probs.size())
        throw std::invalid_argument("mixture_drift: component/prob count mismatch");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("mixture_drift: negative probability");
        total += p;
    }
    if (std::fabs(total - 1.0) > 1e-12)
        throw std::invalid_argument("mixture_drift: probabilities must sum to 1");
    for (const auto& c : components)
        if (!(c.grid() == components.front().grid()))
            throw std::invalid_argument("mixture_drift: component grid mismatch");
    return MixtureDrift{std::move(components), std::move(probs)};
}

namespace detail {

inline std::size_t mixture_component(const MixtureDrift& mix, std::uint64_t seed, std::size_t j) {
    RandomStream stream(seed, kMixtureLane, j);
    const double u = stream.next_uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < mix.probs.size(); ++k) {
        acc += mix.probs[k];
        if (u < acc) return k;
    }
    return mix.probs.size() - 1;
}

inline double logdensity_from_slopes(std::span<const double> slopes,
                                     std::span<const double> path, double dt) {
    double ito = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < slopes.size(); ++i) {
        ito += slopes[i] * (path[i + 1] - path[i]);
        sq += slopes[i] * slopes[i];
    }
    return ito - 0.5 * sq * dt;
}

inline void check_drift_grid(const DriftProcessSpec& spec, const TimeGrid& grid) {
    if (const auto* d = std::get_if<DeterministicDrift>(&spec)) {
        if (!(d->shift.grid() == grid))
            throw std::invalid_argument("drift: grid mismatch with ensemble");
    } else if (const auto* m = std::get_if<MixtureDrift>(&spec)) {
        if (!(m->components.front().grid() == grid))
            throw std::invalid_argument("drift: grid mismatch with ensemble");
    }
}

// Per-node kernel evaluations with the node-dependent polynomial (or value)
// precomputed once; the hot loops below only run Horner in x.
class NodeKernelCache {
public:
    NodeKernelCache(const DriftKernel& kernel, const TimeGrid& grid, bool need_dx)
        : grid_(grid) {
        const int n = grid.steps();
        if (std::fabs(kernel_horizon(kernel) - grid.horizon()) >
            1e-12 * std::max(1.0, grid.horizon()))
            throw std::invalid_argument("kernel horizon does not match grid");
        if (const auto* d = std::get_if<DeterministicPoly>(&kernel)) {
            branch_ = Branch::Deterministic;
            values_.resize(static_cast<std::size_t>(n) + 1);
            for (int i = 0; i <= n; ++i)
                values_[static_cast<std::size_t>(i)] = d->time_poly(grid.node(i));
        } else if (const auto* s = std::get_if<SpacePoly>(&kernel)) {
            branch_ = Branch::Space;
            polys_.reserve(static_cast<std::size_t>(n) + 1);
            dpolys_.reserve(static_cast<std::size_t>(n) + 1);
            for (int i = 0; i <= n; ++i) {
                polys_.push_back(space_poly_at(*s, grid.node(i)));
                dpolys_.push_back(polys_.back().derivative());
            }
        } else {
            branch_ = Branch::Callback;
            callback_ = &std::get<CallbackKernel>(kernel);
            if (need_dx && !callback_->f_x)
                throw UnsupportedKernel("kernel: spatial derivative not supplied");
        }
    }

    double eval(int i, double x) const {
        switch (branch_) {
            case Branch::Deterministic: return values_[static_cast<std::size_t>(i)];
            case Branch::Space: return polys_[static_cast<std::size_t>(i)](x);
            default: return callback_->f(grid_.node(i), x);
        }
    }

    double eval_dx(int i, double x) const {
        switch (branch_) {
            case Branch::Deterministic: return 0.0;
            case Branch::Space: return dpolys_[static_cast<std::size_t>(i)](x);
            default: return callback_->f_x(grid_.node(i), x);
        }
    }

private:
    enum class Branch { Deterministic, Space, Callback };
    TimeGrid grid_;
    Branch branch_ = Branch::Deterministic;
    std::vector<double> values_;
    std::vector<Polynomial> polys_;
    std::vector<Polynomial> dpolys_;
    const CallbackKernel* callback_ = nullptr;
};

// Per-node Gaussian-smoothed means m(t_i, x), exact for polynomial kernels.
class NodeMeanCache {
public:
    NodeMeanCache(const DriftKernel& kernel, const TimeGrid& grid) : grid_(grid) {
        const int n = grid.steps();
        if (const auto* d = std::get_if<DeterministicPoly>(&kernel)) {
            branch_ = Branch::Deterministic;
            values_.resize(static_cast<std::size_t>(n) + 1);
            for (int i = 0; i <= n; ++i)
                values_[static_cast<std::size_t>(i)] = d->time_poly(grid.node(i));
        } else if (const auto* s = std::get_if<SpacePoly>(&kernel)) {
            branch_ = Branch::Space;
            polys_.reserve(static_cast<std::size_t>(n) + 1);
            for (int i = 0; i <= n; ++i)
                polys_.push_back(heat_smooth(space_poly_at(*s, grid.node(i)), grid.node(i)));
        } else {
            branch_ = Branch::Callback;
            kernel_ = &kernel;
        }
    }

    double mean(int i, double x) const {
        switch (branch_) {
            case Branch::Deterministic: return values_[static_cast<std::size_t>(i)];
            case Branch::Space: return polys_[static_cast<std::size_t>(i)](x);
            default: return kernel_mean(*kernel_, grid_.node(i), x);
        }
    }

private:
    enum class Branch { Deterministic, Space, Callback };
    TimeGrid grid_;
    Branch branch_ = Branch::Deterministic;
    std::vector<double> values_;
    std::vector<Polynomial> polys_;
    const DriftKernel* kernel_ = nullptr;
};

}  // namespace detail

// Girsanov log density log(dmu/dmu0) along ensemble path j: left-point Ito
// sum of the slope minus half its squared time integral.
inline double girsanov_logdensity(const DriftProcessSpec& spec, const BrownianEnsemble& ensemble,
                                  std::size_t j) {
    detail::check_drift_grid(spec, ensemble.grid());
    const int n = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    std::vector<double> path(static_cast<std::size_t>(n) + 1);
    ensemble.fill_path(j, path);
    if (const auto* d = std::get_if<DeterministicDrift>(&spec)) {
        const PathDerivative slopes = finite_difference(d->shift);
        return detail::logdensity_from_slopes(slopes.slopes(), path, dt);
    }
    if (const auto* m = std::get_if<MixtureDrift>(&spec)) {
        const std::size_t k = detail::mixture_component(*m, ensemble.seed(), j);
        const PathDerivative slopes = finite_difference(m->components[k]);
        return detail::logdensity_from_slopes(slopes.slopes(), path, dt);
    }
    const auto& state = std::get<StateDrift>(spec);
    const detail::NodeKernelCache cache(state.kernel, ensemble.grid(), false);
    double ito = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double f = cache.eval(i, path[static_cast<std::size_t>(i)]);
        ito += f * (path[static_cast<std::size_t>(i) + 1] - path[static_cast<std::size_t>(i)]);
        sq += f * f;
    }
    return ito - 0.5 * sq * dt;
}

// Ensemble mean of exp(log density); equals 1 in expectation for drifts with
// integrable exponential martingale.
inline McEstimate mean_exp_logdensity(const DriftProcessSpec& spec,
                                      const BrownianEnsemble& ensemble) {
    detail::check_drift_grid(spec, ensemble.grid());
    const int n = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    const std::size_t m = ensemble.path_count();

    std::vector<std::vector<double>> component_slopes;
    std::optional<detail::NodeKernelCache> state_cache;
    if (const auto* d = std::get_if<DeterministicDrift>(&spec)) {
        component_slopes.push_back(finite_difference(d->shift).slopes());
    } else if (const auto* mix = std::get_if<MixtureDrift>(&spec)) {
        for (const auto& c : mix->components)
            component_slopes.push_back(finite_difference(c).slopes());
    } else {
        state_cache.emplace(std::get<StateDrift>(spec).kernel, ensemble.grid(), false);
    }

    std::vector<double> values(m);
    detail::parallel_for_blocks(detail::kReduceBlocks, [&](std::size_t b) {
        std::vector<double> path(static_cast<std::size_t>(n) + 1);
        const std::size_t lo = b * m / detail::kReduceBlocks;
        const std::size_t hi = (b + 1) * m / detail::kReduceBlocks;
        for (std::size_t j = lo; j < hi; ++j) {
            ensemble.fill_path(j, path);
            double logdensity = 0.0;
            if (state_cache) {
                double ito = 0.0;
                double sq = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double f = state_cache->eval(i, path[static_cast<std::size_t>(i)]);
                    ito += f * (path[static_cast<std::size_t>(i) + 1] -
                                path[static_cast<std::size_t>(i)]);
                    sq += f * f;
                }
                logdensity = ito - 0.5 * sq * dt;
            } else {
                std::size_t k = 0;
                if (const auto* mix = std::get_if<MixtureDrift>(&spec))
                    k = detail::mixture_component(*mix, ensemble.seed(), j);
                logdensity = detail::logdensity_from_slopes(component_slopes[k], path, dt);
            }
            values[j] = std::exp(logdensity);
        }
    });
    return detail::mc_mean(values);
}

// KL divergence between two shift measures: half the squared Sobolev norm of
// the shift difference.
inline double kl_shift(const DiscretePath& h1, const DiscretePath& h2) {
    return 0.5 * sobolev_norm_sq(subtract(h1, h2));
}

// Monte Carlo estimate of D_KL(mu_z || mu*) where mu* has Girsanov kernel f:
// per path, (1/2) sum_i (zdot_i - f(t_i, B_i + z_i))^2 dt, left-point
// evaluation throughout.
inline McEstimate kl_estimate(const DiscretePath& z, const DriftKernel& kernel,
                              const BrownianEnsemble& ensemble) {
    if (!(z.grid() == ensemble.grid()))
        throw std::invalid_argument("kl_estimate: grid mismatch");
    const int n = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    const PathDerivative zdot = finite_difference(z);
    const detail::NodeKernelCache cache(kernel, ensemble.grid(), false);
    const std::size_t m = ensemble.path_count();
    std::vector<double> values(m);
    detail::parallel_for_blocks(detail::kReduceBlocks, [&](std::size_t b) {
        std::vector<double> path(static_cast<std::size_t>(n) + 1);
        const std::size_t lo = b * m / detail::kReduceBlocks;
        const std::size_t hi = (b + 1) * m / detail::kReduceBlocks;
        for (std::size_t j = lo; j < hi; ++j) {
            ensemble.fill_path(j, path);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double r = zdot[i] - cache.eval(i, path[static_cast<std::size_t>(i)] + z[i]);
                acc += r * r;
            }
            values[j] = 0.5 * acc * dt;
        }
    });
    return detail::mc_mean(values);
}

namespace detail {

// Realized drift slope per node for one path of the process under mu,
// simulated through B = Btilde + F with Btilde the ensemble path.
template <class SlopeSink>
void realized_slopes(const DriftProcessSpec& spec, const BrownianEnsemble& ensemble,
                     const NodeKernelCache* state_cache, std::size_t j, std::vector<double>& incr,
                     SlopeSink&& sink) {
    const int n = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    if (const auto* d = std::get_if<DeterministicDrift>(&spec)) {
        const auto& q = d->shift.values();
        for (int i = 0; i < n; ++i)
            sink(i, (q[static_cast<std::size_t>(i) + 1] - q[static_cast<std::size_t>(i)]) / dt);
        sink(n, (q.back() - q[q.size() - 2]) / dt);  // pad terminal with last interval slope
        return;
    }
    if (const auto* m = std::get_if<MixtureDrift>(&spec)) {
        const std::size_t k = mixture_component(*m, ensemble.seed(), j);
        const auto& q = m->components[k].values();
        for (int i = 0; i < n; ++i)
            sink(i, (q[static_cast<std::size_t>(i) + 1] - q[static_cast<std::size_t>(i)]) / dt);
        sink(n, (q.back() - q[q.size() - 2]) / dt);
        return;
    }
    ensemble.fill_increments(j, incr);
    double x = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double f = state_cache->eval(i, x);
        sink(i, f);
        if (i < n) x += f * dt + incr[static_cast<std::size_t>(i)];
    }
}

struct Welford {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
};

}  // namespace detail

// State-independence penalty: half the time integral of the across-path
// variance of the realized drift slope. Zero exactly for deterministic
// drifts, positive for state-dependent ones.
inline McEstimate penalty_D(const DriftProcessSpec& spec, const BrownianEnsemble& ensemble) {
    detail::check_drift_grid(spec, ensemble.grid());
    const int n = ensemble.grid().steps();
    const std::size_t m = ensemble.path_count();
    const std::size_t blocks = std::min<std::size_t>(detail::kSectionBlocks, m);

    std::optional<detail::NodeKernelCache> state_cache;
    if (const auto* s = std::get_if<StateDrift>(&spec))
        state_cache.emplace(s->kernel, ensemble.grid(), false);

    std::vector<detail::Welford> global(static_cast<std::size_t>(n) + 1);
    std::vector<std::vector<detail::Welford>> per_block(
        blocks, std::vector<detail::Welford>(static_cast<std::size_t>(n) + 1));
    std::vector<double> incr(static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t b = j * blocks / m;
        detail::realized_slopes(spec, ensemble, state_cache ? &*state_cache : nullptr, j, incr,
                                [&](int i, double slope) {
                                    global[static_cast<std::size_t>(i)].add(slope);
                                    per_block[b][static_cast<std::size_t>(i)].add(slope);
                                });
    }

    const auto penalty_of = [&](const std::vector<detail::Welford>& acc) {
        std::vector<double> variance(acc.size());
        for (std::size_t i = 0; i < acc.size(); ++i) variance[i] = acc[i].variance();
        return 0.5 * trapezoid(variance, ensemble.grid());
    };

    McEstimate out;
    out.value = penalty_of(global);
    if (blocks >= 2) {
        std::vector<double> block_values(blocks);
        for (std::size_t b = 0; b < blocks; ++b) block_values[b] = penalty_of(per_block[b]);
        const double grand = pairwise_mean(block_values);
        double acc = 0.0;
        for (double v : block_values) acc += (v - grand) * (v - grand);
        out.std_err =
            std::sqrt(acc / static_cast<double>(blocks - 1) / static_cast<double>(blocks));
    }
    return out;
}

// Euler simulation of the tilted process: X(0) = 0,
// X_{i+1} = X_i + m(t_i, X_i) dt + dB_i. Superlinear kernels may explode on
// [0, T]; blow-ups are recorded per path, not fatal.
struct XtildeResult {
    TimeGrid grid;
    std::vector<std::vector<double>> kept_paths;  // first K paths, NaN after blow-up
    std::vector<double> blowup_time;              // per path, NaN when the path completed
    std::vector<double> terminal;                 // X(T) per path, NaN when blown up
    std::size_t diverged_count = 0;
};

inline XtildeResult simulate_xtilde(const DriftKernel& kernel, const BrownianEnsemble& ensemble,
                                    std::size_t keep_count = 0) {
    const int n = ensemble.grid().steps();
    const double dt = ensemble.grid().dt();
    const std::size_t m = ensemble.path_count();
    const detail::NodeMeanCache means(kernel, ensemble.grid());
    constexpr double kBlowupLimit = 1e8;

    XtildeResult result{ensemble.grid(),
                        {},
                        std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()),
                        std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()),
                        0};
    keep_count = std::min(keep_count, m);
    result.kept_paths.assign(keep_count,
                             std::vector<double>(static_cast<std::size_t>(n) + 1,
                                                 std::numeric_limits<double>::quiet_NaN()));

    std::vector<std::size_t> diverged_per_block(detail::kReduceBlocks, 0);
    detail::parallel_for_blocks(detail::kReduceBlocks, [&](std::size_t b) {
        std::vector<double> incr(static_cast<std::size_t>(n));
        const std::size_t lo = b * m / detail::kReduceBlocks;
        const std::size_t hi = (b + 1) * m / detail::kReduceBlocks;
        for (std::size_t j = lo; j < hi; ++j) {
            ensemble.fill_increments(j, incr);
            double x = 0.0;
            bool blown = false;
            if (j < keep_count) result.kept_paths[j][0] = 0.0;
            for (int i = 0; i < n; ++i) {
                x += means.mean(i, x) * dt + incr[static_cast<std::size_t>(i)];
                if (!std::isfinite(x) || std::fabs(x) > kBlowupLimit) {
                    result.blowup_time[j] = ensemble.grid().node(i + 1);
                    ++diverged_per_block[b];
                    blown = true;
                    break;
                }
                if (j < keep_count)
                    result.kept_paths[j][static_cast<std::size_t>(i) + 1] = x;
            }
            if (!blown) result.terminal[j] = x;
        }
    });
    for (std::size_t c : diverged_per_block) result.diverged_count += c;
    return result;
}

// Frozen-sample (common random numbers) minimizer of the Monte Carlo action
// over the interior node values of the shift path.
struct MinimizeReport {
    DiscretePath path;
    std::vector<double> objective_trace;
    double mc_std_err = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

class FrozenObjective {
public:
    FrozenObjective(const DriftKernel& kernel, const TimeGrid& grid,
                    const BrownianEnsemble& ensemble, bool need_dx)
        : grid_(grid),
          cache_(kernel, grid, need_dx),
          paths_(materialize_paths(ensemble)),
          m_(ensemble.path_count()),
          stride_(static_cast<std::size_t>(grid.steps()) + 1) {}

    // J(z) = mean_j (1/2) sum_i (zdot_i - f(t_i, B_i + z_i))^2 dt
    double objective(std::span<const double> z) const {
        const int n = grid_.steps();
        const double dt = grid_.dt();
        std::vector<double> partial(kReduceBlocks, 0.0);
        parallel_for_blocks(kReduceBlocks, [&](std::size_t b) {
            const std::size_t lo = b * m_ / kReduceBlocks;
            const std::size_t hi = (b + 1) * m_ / kReduceBlocks;
            double acc = 0.0;
            for (std::size_t j = lo; j < hi; ++j) {
                const double* bj = paths_.data() + j * stride_;
                double path_acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    const std::size_t ii = static_cast<std::size_t>(i);
                    const double zdot = (z[ii + 1] - z[ii]) / dt;
                    const double r = zdot - cache_.eval(i, bj[ii] + z[ii]);
                    path_acc += r * r;
                }
                acc += 0.5 * path_acc * dt;
            }
            partial[b] = acc;
        });
        return pairwise_sum(partial) / static_cast<double>(m_);
    }

    // Analytic gradient of the frozen-sample objective with respect to
    // z_1..z_n (z_0 is pinned at zero; slot 0 of the output stays zero).
    void gradient(std::span<const double> z, std::span<double> grad) const {
        const int n = grid_.steps();
        const double dt = grid_.dt();
        std::vector<std::vector<double>> partial(kReduceBlocks,
                                                 std::vector<double>(stride_, 0.0));
        parallel_for_blocks(kReduceBlocks, [&](std::size_t b) {
            auto& g = partial[b];
            const std::size_t lo = b * m_ / kReduceBlocks;
            const std::size_t hi = (b + 1) * m_ / kReduceBlocks;
            for (std::size_t j = lo; j < hi; ++j) {
                const double* bj = paths_.data() + j * stride_;
                for (int i = 0; i < n; ++i) {
                    const std::size_t ii = static_cast<std::size_t>(i);
                    const double zdot = (z[ii + 1] - z[ii]) / dt;
                    const double y = bj[ii] + z[ii];
                    const double r = zdot - cache_.eval(i, y);
                    g[ii + 1] += r;
                    if (i >= 1) g[ii] += -r - dt * cache_.eval_dx(i, y) * r;
                }
            }
        });
        // fixed-order tree reduction over blocks
        for (std::size_t gap = 1; gap < kReduceBlocks; gap *= 2)
            for (std::size_t b = 0; b + gap < kReduceBlocks; b += 2 * gap)
                for (std::size_t k = 0; k < stride_; ++k) partial[b][k] += partial[b + gap][k];
        for (std::size_t k = 0; k < stride_; ++k)
            grad[k] = partial[0][k] / static_cast<double>(m_);
        grad[0] = 0.0;
    }

    std::vector<double> per_path_values(std::span<const double> z) const {
        const int n = grid_.steps();
        const double dt = grid_.dt();
        std::vector<double> values(m_);
        parallel_for_blocks(kReduceBlocks, [&](std::size_t b) {
            const std::size_t lo = b * m_ / kReduceBlocks;
            const std::size_t hi = (b + 1) * m_ / kReduceBlocks;
            for (std::size_t j = lo; j < hi; ++j) {
                const double* bj = paths_.data() + j * stride_;
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    const std::size_t ii = static_cast<std::size_t>(i);
                    const double zdot = (z[ii + 1] - z[ii]) / dt;
                    const double r = zdot - cache_.eval(i, bj[ii] + z[ii]);
                    acc += r * r;
                }
                values[j] = 0.5 * acc * dt;
            }
        });
        return values;
    }

private:
    TimeGrid grid_;
    NodeKernelCache cache_;
    std::vector<double> paths_;
    std::size_t m_;
    std::size_t stride_;
};

// Sobolev (H^1) preconditioner for the frozen-sample descent: the direction
// solves K d = dt * g, where K is the second-difference matrix of the
// dominant (1/2) sum zdot^2 dt term with z_0 pinned and a free right end.
// Euclidean descent on node values has O(n^2) conditioning and stalls; the
// preconditioned metric keeps the conditioning O(1) in the grid size.
class SobolevPreconditioner {
public:
    explicit SobolevPreconditioner(int n) : n_(n), super_(static_cast<std::size_t>(n)),
                                            denom_(static_cast<std::size_t>(n)) {
        // K: diag {2, .., 2, 1}, off-diagonals -1, size n (slots 1..n)
        double prev_super = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double diag = (i == n_ - 1) ? 1.0 : 2.0;
            const double den = diag - (i > 0 ? -1.0 * prev_super : 0.0);
            denom_[static_cast<std::size_t>(i)] = den;
            prev_super = -1.0 / den;
            super_[static_cast<std::size_t>(i)] = prev_super;
        }
    }

    // g and direction have stride n+1; slot 0 stays zero.
    void apply(std::span<const double> grad, double dt, std::span<double> direction) const {
        std::vector<double> work(static_cast<std::size_t>(n_));
        for (int i = 0; i < n_; ++i) {
            const double r = dt * grad[static_cast<std::size_t>(i) + 1];
            work[static_cast<std::size_t>(i)] =
                (r + (i > 0 ? work[static_cast<std::size_t>(i) - 1] : 0.0)) /
                denom_[static_cast<std::size_t>(i)];
        }
        direction[0] = 0.0;
        direction[static_cast<std::size_t>(n_)] = work[static_cast<std::size_t>(n_) - 1];
        for (int i = n_ - 2; i >= 0; --i)
            direction[static_cast<std::size_t>(i) + 1] =
                work[static_cast<std::size_t>(i)] -
                super_[static_cast<std::size_t>(i)] * direction[static_cast<std::size_t>(i) + 2];
    }

private:
    int n_;
    std::vector<double> super_;
    std::vector<double> denom_;
};

}  // namespace detail

inline MinimizeReport minimize_action_mc(const DriftKernel& kernel, const TimeGrid& grid,
                                         const BrownianEnsemble& ensemble,
                                         const DiscretePath& init, int steps, double learn_rate) {
    if (!(init.grid() == grid) || !(ensemble.grid() == grid))
        throw std::invalid_argument("minimize_action_mc: grid mismatch");
    if (steps < 1) throw std::invalid_argument("minimize_action_mc: need at least one step");
    if (!(learn_rate > 0.0)) throw std::invalid_argument("minimize_action_mc: bad learn rate");

    const detail::FrozenObjective objective(kernel, grid, ensemble, true);
    const std::size_t stride = static_cast<std::size_t>(grid.steps()) + 1;
    const detail::SobolevPreconditioner preconditioner(grid.steps());
    std::vector<double> z(init.values());
    std::vector<double> grad(stride, 0.0);
    std::vector<double> direction(stride, 0.0);

    MinimizeReport report{zero_path(grid), {}, 0.0, 0, false};
    double value = objective.objective(z);
    if (!std::isfinite(value)) throw EvaluationError("minimize_action_mc: objective diverged");
    report.objective_trace.push_back(value);

    double alpha = learn_rate;
    for (int iter = 0; iter < steps; ++iter) {
        objective.gradient(z, grad);
        double gnorm_sq = 0.0;
        for (double g : grad) gnorm_sq += g * g;
        const double tol = 1e-6 * (1.0 + std::fabs(value));
        if (std::sqrt(gnorm_sq) <= tol) {
            report.converged = true;
            break;
        }

        preconditioner.apply(grad, grid.dt(), direction);
        double slope = 0.0;  // g . d, positive since the preconditioner is SPD
        for (std::size_t k = 0; k < stride; ++k) slope += grad[k] * direction[k];

        double trial_value = std::numeric_limits<double>::infinity();
        std::vector<double> trial(stride, 0.0);
        const auto take_step = [&](double step) {
            for (std::size_t k = 0; k < stride; ++k) trial[k] = z[k] - step * direction[k];
            trial[0] = 0.0;
            return objective.objective(trial);
        };
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            trial_value = take_step(alpha);
            if (std::isfinite(trial_value) && trial_value <= value - 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // no descent at machine-scale steps

        // one parabolic refinement along the direction; exact on quadratics
        const double curvature = 2.0 * (trial_value - value + alpha * slope);
        if (curvature > 0.0) {
            const double alpha_star = slope * alpha * alpha / curvature;
            if (std::isfinite(alpha_star) && alpha_star > 0.0 && alpha_star != alpha) {
                std::vector<double> keep(trial);
                const double refined = take_step(alpha_star);
                if (std::isfinite(refined) && refined < trial_value) {
                    trial_value = refined;
                    alpha = alpha_star;
                } else {
                    trial = std::move(keep);
                }
            }
        }
        z = trial;
        value = trial_value;
        report.objective_trace.push_back(value);
        report.iterations = iter + 1;
        alpha = std::clamp(alpha * 2.0, 1e-14, 64.0);
    }

    report.path = DiscretePath(grid, z);
    const std::vector<double> per_path = objective.per_path_values(z);
    report.mc_std_err = detail::sectioned_std_err(per_path);
    return report;
}

// Logged (not enforced) ensemble sanity bound on the terminal sample mean.
struct EnsembleSanity {
    double terminal_mean = 0.0;
    double bound = 0.0;
    bool within = true;
};

inline EnsembleSanity ensemble_sanity(const BrownianEnsemble& ensemble) {
    const std::size_t m = ensemble.path_count();
    std::vector<double> terminal(m);
    const std::size_t stride = static_cast<std::size_t>(ensemble.grid().steps()) + 1;
    detail::parallel_for_blocks(detail::kReduceBlocks, [&](std::size_t b) {
        std::vector<double> path(stride);
        const std::size_t lo = b * m / detail::kReduceBlocks;
        const std::size_t hi = (b + 1) * m / detail::kReduceBlocks;
        for (std::size_t j = lo; j < hi; ++j) {
            ensemble.fill_path(j, path);
            terminal[j] = path.back();
        }
    });
    EnsembleSanity out;
    out.terminal_mean = pairwise_mean(terminal);
    out.bound = 4.0 * std::sqrt(ensemble.grid().horizon() / static_cast<double>(m));
    out.within = std::fabs(out.terminal_mean) <= out.bound;
    return out;
}

}  // namespace wiener
