#include "wiener/clark_ocone.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace wiener;

namespace {

const Polynomial kX({0.0, 1.0});
const Polynomial kXSq({0.0, 0.0, 1.0});
const Polynomial kXCube({0.0, 0.0, 0.0, 1.0});

void expect_coeffs_near(const Polynomial& actual, const std::vector<double>& expected,
                        double tolerance = 1e-12) {
    for (std::size_t k = 0; k < expected.size(); ++k)
        EXPECT_NEAR(actual.coefficient(static_cast<int>(k)), expected[k], tolerance)
            << "coefficient " << k;
    EXPECT_LE(actual.degree() + 1, static_cast<int>(expected.size()) + 0);
}

// The closed form printed elsewhere for the cubic case; inconsistent with
// the Clark-Ocone derivation and used here as a discrepancy detector.
SpacePoly printed_cubic_kernel(double horizon) {
    // (T-s)^3 + 3 (T-s) x
    const Polynomial tau({horizon, -1.0});  // T - t
    return SpacePoly{{tau * tau * tau, 3.0 * tau}, horizon};
}

}  // namespace

TEST(ItoKernel, LinearCost) {
    const ItoKernelResult r = ito_kernel(kX, Polynomial(), 1.0);
    ASSERT_GE(static_cast<int>(r.kernel.coeffs_t.size()), 1);
    expect_coeffs_near(r.kernel.coeffs_t[0], {1.0, -1.0});  // T - t with T = 1
    for (std::size_t k = 1; k < r.kernel.coeffs_t.size(); ++k)
        EXPECT_TRUE(r.kernel.coeffs_t[k].is_zero());
    EXPECT_NEAR(r.mean_c, 0.0, 1e-15);
    EXPECT_NE(r.derivation_log.find("f(s,x)"), std::string::npos);
}

TEST(ItoKernel, QuadraticCost) {
    const double horizon = 1.5;
    const ItoKernelResult r = ito_kernel(kXSq, Polynomial(), horizon);
    ASSERT_GE(static_cast<int>(r.kernel.coeffs_t.size()), 2);
    EXPECT_TRUE(r.kernel.coeffs_t[0].is_zero());
    expect_coeffs_near(r.kernel.coeffs_t[1], {2.0 * horizon, -2.0});  // 2 (T - t)
    // E[int B^2 dt] = T^2 / 2
    EXPECT_NEAR(r.mean_c, horizon * horizon / 2.0, 1e-13);
}

TEST(ItoKernel, CubicCostFollowsDerivationNotPrintedForm) {
    const double horizon = 1.0;
    const ItoKernelResult r = ito_kernel(kXCube, Polynomial(), horizon);
    ASSERT_GE(static_cast<int>(r.kernel.coeffs_t.size()), 3);
    // (3/2)(T-t)^2 = 3/2 - 3t + (3/2)t^2 at T = 1
    expect_coeffs_near(r.kernel.coeffs_t[0], {1.5, -3.0, 1.5});
    EXPECT_TRUE(r.kernel.coeffs_t[1].is_zero());
    expect_coeffs_near(r.kernel.coeffs_t[2], {3.0, -3.0});  // 3 (T - t)
    EXPECT_NEAR(r.mean_c, 0.0, 1e-15);
    EXPECT_NE(r.derivation_log.find("residual"), std::string::npos);
}

TEST(ItoKernel, TerminalOnlyCost) {
    // G(x) = x^2 / 2 gives f(s, x) = x
    const ItoKernelResult r = ito_kernel(Polynomial(), Polynomial({0.0, 0.0, 0.5}), 2.0);
    ASSERT_GE(static_cast<int>(r.kernel.coeffs_t.size()), 2);
    EXPECT_TRUE(r.kernel.coeffs_t[0].is_zero());
    expect_coeffs_near(r.kernel.coeffs_t[1], {1.0});
    // E[B(T)^2 / 2] = T / 2
    EXPECT_NEAR(r.mean_c, 1.0, 1e-14);
}

TEST(ItoKernel, LinearInCost) {
    const double horizon = 1.25;
    const Polynomial g1({0.0, 1.0, 0.5});
    const Polynomial g2({0.0, 0.0, 0.0, 2.0});
    const Polynomial G({0.0, 0.0, 1.0});
    const ItoKernelResult sum = ito_kernel(g1 + g2, G, horizon);
    const ItoKernelResult a = ito_kernel(g1, G, horizon);
    const ItoKernelResult b = ito_kernel(g2, Polynomial(), horizon);
    const std::size_t width = std::max(sum.kernel.coeffs_t.size(),
                                       std::max(a.kernel.coeffs_t.size(), b.kernel.coeffs_t.size()));
    for (std::size_t k = 0; k < width; ++k) {
        const Polynomial& s = k < sum.kernel.coeffs_t.size() ? sum.kernel.coeffs_t[k] : Polynomial();
        const Polynomial pa = k < a.kernel.coeffs_t.size() ? a.kernel.coeffs_t[k] : Polynomial();
        const Polynomial pb = k < b.kernel.coeffs_t.size() ? b.kernel.coeffs_t[k] : Polynomial();
        const Polynomial combined = pa + pb;
        for (int i = 0; i <= std::max(s.degree(), combined.degree()); ++i)
            EXPECT_NEAR(s.coefficient(i), combined.coefficient(i), 1e-12);
    }
    EXPECT_NEAR(sum.mean_c, a.mean_c + b.mean_c, 1e-12);
}

TEST(ItoKernel, DegreeCap) {
    std::vector<double> coeffs(10, 0.0);
    coeffs.back() = 1.0;  // degree 9
    EXPECT_THROW(ito_kernel(Polynomial(coeffs), Polynomial(), 1.0), std::invalid_argument);
}

TEST(ItoResidual, ZeroFunctionalIsExactlyZero) {
    const ItoKernelResult r = ito_kernel(Polynomial(), Polynomial(), 1.0);
    const BrownianEnsemble ensemble = sample_ensemble(uniform_grid(1.0, 64), 500, 7);
    const ItoResidual res =
        ito_residual(IntegralTerminal{Polynomial(), Polynomial(), 1.0}, r, ensemble);
    EXPECT_DOUBLE_EQ(res.residual_rms, 0.0);
    EXPECT_DOUBLE_EQ(res.std_err, 0.0);
}

TEST(ItoResidual, ExactLinearKernelIsPureDiscretization) {
    const ItoKernelResult r = ito_kernel(kX, Polynomial(), 1.0);
    const BrownianEnsemble ensemble = sample_ensemble(uniform_grid(1.0, 500), 10'000, 42);
    const ItoResidual res =
        ito_residual(IntegralTerminal{kX, Polynomial(), 1.0}, r, ensemble);
    EXPECT_LT(res.residual_rms, 0.05);
    EXPECT_GT(res.residual_rms, 0.0);
}

TEST(ItoResidual, DecaysUnderRefinementAcrossBattery) {
    const std::vector<std::pair<Polynomial, Polynomial>> battery{
        {kX, Polynomial()},
        {kXSq, Polynomial()},
        {kXCube, Polynomial()},
        {kXSq - kX, kX},
        {Polynomial(), kXSq},
    };
    // decay envelope measured on the known-exact linear case
    double envelope_ratio = 0.0;
    double envelope_se = 0.0;
    {
        const ItoKernelResult r = ito_kernel(kX, Polynomial(), 1.0);
        const IntegralTerminal cost{kX, Polynomial(), 1.0};
        const ItoResidual coarse =
            ito_residual(cost, r, sample_ensemble(uniform_grid(1.0, 200), 4000, 11));
        const ItoResidual fine =
            ito_residual(cost, r, sample_ensemble(uniform_grid(1.0, 400), 4000, 12));
        envelope_ratio = fine.residual_rms / coarse.residual_rms;
        envelope_se = envelope_ratio * std::sqrt(std::pow(coarse.std_err / coarse.residual_rms, 2) +
                                                 std::pow(fine.std_err / fine.residual_rms, 2));
    }
    for (std::size_t b = 0; b < battery.size(); ++b) {
        const auto& [g, G] = battery[b];
        if (g.is_zero() && G.is_zero()) continue;
        const ItoKernelResult r = ito_kernel(g, G, 1.0);
        const IntegralTerminal cost{g, G, 1.0};
        const ItoResidual coarse = ito_residual(
            cost, r, sample_ensemble(uniform_grid(1.0, 200), 4000, 100 + 2 * b));
        const ItoResidual fine = ito_residual(
            cost, r, sample_ensemble(uniform_grid(1.0, 400), 4000, 101 + 2 * b));
        const double ratio = fine.residual_rms / coarse.residual_rms;
        EXPECT_LT(ratio, 0.8) << "battery entry " << b;
        // no battery entry decays faster than the pure-discretization envelope
        const double ratio_se =
            ratio * std::sqrt(std::pow(coarse.std_err / coarse.residual_rms, 2) +
                              std::pow(fine.std_err / fine.residual_rms, 2));
        EXPECT_GE(ratio, envelope_ratio - 3.0 * std::sqrt(ratio_se * ratio_se +
                                                          envelope_se * envelope_se))
            << "battery entry " << b;
    }
}

TEST(ItoResidual, PrintedCubicKernelFailsTheResidualTest) {
    const ItoKernelResult correct = ito_kernel(kXCube, Polynomial(), 1.0);
    const SpacePoly printed = printed_cubic_kernel(1.0);
    const IntegralTerminal cost{kXCube, Polynomial(), 1.0};

    const BrownianEnsemble coarse = sample_ensemble(uniform_grid(1.0, 200), 4000, 21);
    const BrownianEnsemble fine = sample_ensemble(uniform_grid(1.0, 400), 4000, 22);
    const double printed_coarse =
        ito_residual(cost, printed, correct.mean_c, coarse).residual_rms;
    const double printed_fine = ito_residual(cost, printed, correct.mean_c, fine).residual_rms;
    const double exact_fine = ito_residual(cost, correct, fine).residual_rms;

    EXPECT_GE(printed_fine / printed_coarse, 0.95);  // no decay
    EXPECT_GT(printed_fine, 10.0 * exact_fine);      // bounded away from zero
}

TEST(ItoResidual, GridMismatchRejected) {
    const ItoKernelResult r = ito_kernel(kX, Polynomial(), 1.0);
    const BrownianEnsemble ensemble = sample_ensemble(uniform_grid(2.0, 64), 100, 5);
    EXPECT_THROW(ito_residual(IntegralTerminal{kX, Polynomial(), 1.0}, r, ensemble),
                 std::invalid_argument);
}
