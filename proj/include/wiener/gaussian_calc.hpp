#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wiener/errors.hpp"

namespace wiener {

inline constexpr int kMaxPolyDegree = 16;

// Dense univariate polynomial, coefficient k multiplies x^k. Trailing exact
// zeros are trimmed so the leading coefficient is nonzero unless the
// polynomial is identically zero.
class Polynomial {
public:
    Polynomial() = default;

    explicit Polynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
        for (double c : coeffs_)
            if (!std::isfinite(c)) throw std::invalid_argument("Polynomial: non-finite coefficient");
        while (!coeffs_.empty() && coeffs_.back() == 0.0) coeffs_.pop_back();
        if (degree() > kMaxPolyDegree)
            throw std::invalid_argument("Polynomial: degree cap exceeded");
    }

    static Polynomial monomial(int k, double c = 1.0) {
        std::vector<double> coeffs(static_cast<std::size_t>(k) + 1, 0.0);
        coeffs.back() = c;
        return Polynomial(std::move(coeffs));
    }

    bool is_zero() const noexcept { return coeffs_.empty(); }
    int degree() const noexcept { return coeffs_.empty() ? 0 : static_cast<int>(coeffs_.size()) - 1; }
    const std::vector<double>& coefficients() const noexcept { return coeffs_; }

    double coefficient(int k) const noexcept {
        return (k >= 0 && k < static_cast<int>(coeffs_.size())) ? coeffs_[static_cast<std::size_t>(k)]
                                                                : 0.0;
    }

    double operator()(double x) const noexcept {
        double acc = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * x + coeffs_[i];
        return acc;
    }

    Polynomial derivative() const {
        if (coeffs_.size() <= 1) return Polynomial();
        std::vector<double> d(coeffs_.size() - 1);
        for (std::size_t k = 1; k < coeffs_.size(); ++k)
            d[k - 1] = static_cast<double>(k) * coeffs_[k];
        return Polynomial(std::move(d));
    }

    // Antiderivative with zero constant term.
    Polynomial antiderivative() const {
        if (coeffs_.empty()) return Polynomial();
        std::vector<double> a(coeffs_.size() + 1, 0.0);
        for (std::size_t k = 0; k < coeffs_.size(); ++k)
            a[k + 1] = coeffs_[k] / static_cast<double>(k + 1);
        return Polynomial(std::move(a));
    }

    // p(a + b*x), expanded exactly.
    Polynomial compose_affine(double a, double b) const {
        std::vector<double> acc{0.0};
        // Horner over (a + b x)
        for (std::size_t i = coeffs_.size(); i-- > 0;) {
            std::vector<double> next(acc.size() + 1, 0.0);
            for (std::size_t j = 0; j < acc.size(); ++j) {
                next[j] += acc[j] * a;
                next[j + 1] += acc[j] * b;
            }
            next[0] += coeffs_[i];
            while (next.size() > 1 && next.back() == 0.0) next.pop_back();
            acc = std::move(next);
        }
        return Polynomial(std::move(acc));
    }

    friend Polynomial operator+(const Polynomial& p, const Polynomial& q) {
        std::vector<double> c(std::max(p.coeffs_.size(), q.coeffs_.size()), 0.0);
        for (std::size_t i = 0; i < p.coeffs_.size(); ++i) c[i] += p.coeffs_[i];
        for (std::size_t i = 0; i < q.coeffs_.size(); ++i) c[i] += q.coeffs_[i];
        return Polynomial(std::move(c));
    }

    friend Polynomial operator-(const Polynomial& p, const Polynomial& q) {
        std::vector<double> c(std::max(p.coeffs_.size(), q.coeffs_.size()), 0.0);
        for (std::size_t i = 0; i < p.coeffs_.size(); ++i) c[i] += p.coeffs_[i];
        for (std::size_t i = 0; i < q.coeffs_.size(); ++i) c[i] -= q.coeffs_[i];
        return Polynomial(std::move(c));
    }

    friend Polynomial operator*(const Polynomial& p, const Polynomial& q) {
        if (p.is_zero() || q.is_zero()) return Polynomial();
        std::vector<double> c(p.coeffs_.size() + q.coeffs_.size() - 1, 0.0);
        for (std::size_t i = 0; i < p.coeffs_.size(); ++i)
            for (std::size_t j = 0; j < q.coeffs_.size(); ++j)
                c[i + j] += p.coeffs_[i] * q.coeffs_[j];
        return Polynomial(std::move(c));
    }

    friend Polynomial operator*(double s, const Polynomial& p) {
        std::vector<double> c(p.coeffs_);
        for (double& v : c) v *= s;
        return Polynomial(std::move(c));
    }

private:
    std::vector<double> coeffs_;
};

// E[X^k] for X ~ Normal(m, v) by the two-term recurrence
// M_k = m*M_{k-1} + (k-1)*v*M_{k-2}.
inline double gaussian_moment(int k, double mean, double variance) {
    if (k < 0) throw std::invalid_argument("gaussian_moment: negative order");
    if (!(variance >= 0.0)) throw std::invalid_argument("gaussian_moment: negative variance");
    if (k == 0) return 1.0;
    double prev = 1.0;
    double cur = mean;
    for (int j = 2; j <= k; ++j) {
        const double next = mean * cur + static_cast<double>(j - 1) * variance * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

// E[p(X)] for X ~ Normal(m, v); exact in exact arithmetic.
inline double expect_polynomial(const Polynomial& p, double mean, double variance) {
    if (!(variance >= 0.0)) throw std::invalid_argument("expect_polynomial: negative variance");
    if (p.is_zero()) return 0.0;
    double acc = 0.0;
    double prev = 1.0;  // M_0
    double cur = mean;  // M_1
    acc += p.coefficient(0);
    if (p.degree() >= 1) acc += p.coefficient(1) * cur;
    for (int k = 2; k <= p.degree(); ++k) {
        const double next = mean * cur + static_cast<double>(k - 1) * variance * prev;
        prev = cur;
        cur = next;
        acc += p.coefficient(k) * cur;
    }
    return acc;
}

namespace detail {

inline double double_factorial_odd(int j) {
    // (2j-1)!! with the empty product equal to 1
    double acc = 1.0;
    for (int i = 3; i <= 2 * j - 1; i += 2) acc *= static_cast<double>(i);
    return j >= 1 ? acc : 1.0;
}

inline double binomial(int n, int k) {
    double acc = 1.0;
    for (int i = 1; i <= k; ++i)
        acc = acc * static_cast<double>(n - k + i) / static_cast<double>(i);
    return acc;
}

}  // namespace detail

// Gaussian smoothing of a polynomial: returns s with s(x) = E[p(N(x, v))].
// Coefficient of x^j picks up c_{j+2i} * C(j+2i, 2i) * (2i-1)!! * v^i.
inline Polynomial heat_smooth(const Polynomial& p, double variance) {
    if (!(variance >= 0.0)) throw std::invalid_argument("heat_smooth: negative variance");
    if (p.is_zero()) return Polynomial();
    const int d = p.degree();
    std::vector<double> out(static_cast<std::size_t>(d) + 1, 0.0);
    for (int j = 0; j <= d; ++j) {
        double acc = 0.0;
        double vpow = 1.0;
        for (int i = 0; j + 2 * i <= d; ++i) {
            acc += p.coefficient(j + 2 * i) * detail::binomial(j + 2 * i, 2 * i) *
                   detail::double_factorial_odd(i) * vpow;
            vpow *= variance;
        }
        out[static_cast<std::size_t>(j)] = acc;
    }
    return Polynomial(std::move(out));
}

// Physicists' Gauss-Hermite rule: integrates h against e^{-u^2}, weights sum
// to sqrt(pi), exact for polynomials of degree <= 2*order - 1.
struct QuadratureRule {
    int order = 0;
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline QuadratureRule gauss_hermite(int order) {
    if (order < 1 || order > 64) throw std::invalid_argument("gauss_hermite: order out of range");
    const int n = order;
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    const double pim4 = 0.7511255444649424828587030047762276930510;  // pi^{-1/4}
    const int half = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        // root guesses, then Newton on the orthonormal Hermite recurrence
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[static_cast<std::size_t>(i) - 2];
        if (i == n - 1 - i) z = 0.0;
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4;
            double p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::fabs(z - z1) <= 1e-15 * (1.0 + std::fabs(z))) break;
        }
        if (i == n - 1 - i) z = 0.0;
        x[static_cast<std::size_t>(i)] = z;
        x[static_cast<std::size_t>(n - 1 - i)] = -z;
        w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
        w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
    }
    // ascending node order
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    QuadratureRule rule;
    rule.order = n;
    rule.nodes.reserve(idx.size());
    rule.weights.reserve(idx.size());
    for (std::size_t i : idx) {
        rule.nodes.push_back(x[i]);
        rule.weights.push_back(w[i]);
    }
    return rule;
}

// E[h(X)] for X ~ Normal(m, v) via the substitution x = m + sqrt(2v) u;
// degenerate variance collapses to point evaluation.
template <class Fn>
double expect_function(Fn&& h, double mean, double variance, const QuadratureRule& rule) {
    if (!(variance >= 0.0)) throw std::invalid_argument("expect_function: negative variance");
    if (variance == 0.0) {
        const double value = h(mean);
        if (!std::isfinite(value)) throw EvaluationError("expect_function: non-finite value at mean");
        return value;
    }
    const double s = std::sqrt(2.0 * variance);
    const double inv_sqrt_pi = 0.5641895835477562869480794515607725858441;
    double acc = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
        const double value = h(mean + s * rule.nodes[j]);
        if (!std::isfinite(value))
            throw EvaluationError("expect_function: non-finite value at quadrature node");
        acc += rule.weights[j] * value;
    }
    return acc * inv_sqrt_pi;
}

}  // namespace wiener
