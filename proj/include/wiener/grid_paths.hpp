#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wiener {

// Uniform partition of [0, T] into n steps, nodes t_i = T*i/n.
class TimeGrid {
public:
    TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
        if (!std::isfinite(horizon) || horizon <= 0.0)
            throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
        if (steps < 2)
            throw std::invalid_argument("TimeGrid: at least 2 steps required");
    }

    double horizon() const noexcept { return horizon_; }
    int steps() const noexcept { return steps_; }
    double dt() const noexcept { return horizon_ / steps_; }
    // t_n == T exactly, monotone in i.
    double node(int i) const noexcept { return horizon_ * i / steps_; }

    std::vector<double> nodes() const {
        std::vector<double> out(static_cast<std::size_t>(steps_) + 1);
        for (int i = 0; i <= steps_; ++i) out[static_cast<std::size_t>(i)] = node(i);
        return out;
    }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
        return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
    }

private:
    double horizon_;
    int steps_;
};

inline TimeGrid uniform_grid(double horizon, int steps) { return TimeGrid(horizon, steps); }

// Sampled path with q(0) = 0: a discretized Cameron-Martin candidate.
class DiscretePath {
public:
    DiscretePath(TimeGrid grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (values_.size() != static_cast<std::size_t>(grid_.steps()) + 1)
            throw std::invalid_argument("DiscretePath: value count must be steps+1");
        if (values_.front() != 0.0)
            throw std::invalid_argument("DiscretePath: paths start at zero");
        for (double v : values_)
            if (!std::isfinite(v)) throw std::invalid_argument("DiscretePath: non-finite value");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double operator[](int i) const noexcept { return values_[static_cast<std::size_t>(i)]; }
    int size() const noexcept { return static_cast<int>(values_.size()); }

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

// Forward-difference slopes; slope i lives on the midpoint of [t_i, t_{i+1}].
class PathDerivative {
public:
    PathDerivative(TimeGrid grid, std::vector<double> slopes)
        : grid_(grid), slopes_(std::move(slopes)) {
        if (slopes_.size() != static_cast<std::size_t>(grid_.steps()))
            throw std::invalid_argument("PathDerivative: slope count must equal step count");
        for (double v : slopes_)
            if (!std::isfinite(v)) throw std::invalid_argument("PathDerivative: non-finite slope");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& slopes() const noexcept { return slopes_; }
    double operator[](int i) const noexcept { return slopes_[static_cast<std::size_t>(i)]; }

private:
    TimeGrid grid_;
    std::vector<double> slopes_;
};

inline PathDerivative finite_difference(const DiscretePath& path) {
    const int n = path.grid().steps();
    const double dt = path.grid().dt();
    std::vector<double> slopes(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        slopes[static_cast<std::size_t>(i)] = (path[i + 1] - path[i]) / dt;
    return PathDerivative(path.grid(), std::move(slopes));
}

// Squared Cameron-Martin (Sobolev) norm: sum of slope^2 * dt, no 1/2 factor.
inline double sobolev_norm_sq(const DiscretePath& path) {
    const PathDerivative d = finite_difference(path);
    const double dt = path.grid().dt();
    double acc = 0.0;
    for (double s : d.slopes()) acc += s * s;
    return acc * dt;
}

// Composite trapezoid rule; expects one sample per node.
inline double trapezoid(std::span<const double> samples, const TimeGrid& grid) {
    if (samples.size() != static_cast<std::size_t>(grid.steps()) + 1)
        throw std::invalid_argument("trapezoid: sample count must be steps+1");
    double acc = 0.5 * (samples.front() + samples.back());
    for (std::size_t i = 1; i + 1 < samples.size(); ++i) acc += samples[i];
    return acc * grid.dt();
}

inline double trapezoid(const std::vector<double>& samples, const TimeGrid& grid) {
    return trapezoid(std::span<const double>(samples), grid);
}

template <class Fn>
DiscretePath path_from_function(const TimeGrid& grid, Fn&& fn) {
    std::vector<double> values(static_cast<std::size_t>(grid.steps()) + 1);
    for (int i = 0; i <= grid.steps(); ++i)
        values[static_cast<std::size_t>(i)] = fn(grid.node(i));
    if (!values.empty() && std::fabs(values.front()) < 1e-15) values.front() = 0.0;
    return DiscretePath(grid, std::move(values));
}

inline DiscretePath zero_path(const TimeGrid& grid) {
    return DiscretePath(grid, std::vector<double>(static_cast<std::size_t>(grid.steps()) + 1, 0.0));
}

inline DiscretePath subtract(const DiscretePath& a, const DiscretePath& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("subtract: grid mismatch");
    std::vector<double> values(a.values());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= b.values()[i];
    return DiscretePath(a.grid(), std::move(values));
}

inline DiscretePath scale(const DiscretePath& a, double factor) {
    std::vector<double> values(a.values());
    for (double& v : values) v *= factor;
    return DiscretePath(a.grid(), std::move(values));
}

inline double sup_distance(const DiscretePath& a, const DiscretePath& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("sup_distance: grid mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i)
        m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// CSV schema: header "t,q", one row per node, '.' decimal separator, LF endings.
inline void write_path_csv(const DiscretePath& path, std::ostream& out) {
    out << "t,q\n";
    for (int i = 0; i <= path.grid().steps(); ++i)
        out << detail::format_double(path.grid().node(i)) << ','
            << detail::format_double(path[i]) << '\n';
}

inline DiscretePath read_path_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("path csv: empty input");
    std::vector<double> ts;
    std::vector<double> qs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("path csv: malformed row");
        ts.push_back(std::stod(line.substr(0, comma)));
        // extra columns (e.g. qdot) are ignored
        qs.push_back(std::stod(line.substr(comma + 1)));
    }
    if (ts.size() < 3) throw std::invalid_argument("path csv: too few rows");
    const int n = static_cast<int>(ts.size()) - 1;
    const double horizon = ts.back();
    TimeGrid grid(horizon, n);
    for (int i = 0; i <= n; ++i)
        if (std::fabs(ts[static_cast<std::size_t>(i)] - grid.node(i)) > 1e-9 * (1.0 + horizon))
            throw std::invalid_argument("path csv: nodes are not a uniform grid");
    if (std::fabs(qs.front()) < 1e-15) qs.front() = 0.0;
    return DiscretePath(grid, std::move(qs));
}

}  // namespace wiener
