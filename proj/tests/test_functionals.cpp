#include "wiener/functionals.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wiener/rng.hpp"

using namespace wiener;

namespace {

DriftKernel identity_kernel(double horizon) {
    // f(t, x) = x
    return space_poly_kernel({Polynomial(), Polynomial({1.0})}, horizon);
}

DriftKernel square_kernel(double horizon) {
    // f(t, x) = x^2
    return space_poly_kernel({Polynomial(), Polynomial(), Polynomial({1.0})}, horizon);
}

struct McKernelStats {
    double mean, mean_se;
    double sq, sq_se;
    double ffx, ffx_se;
};

// Sample-mean oracle for the three kernel fields at fixed (t, x).
McKernelStats mc_kernel_stats(const DriftKernel& kernel, double t, double x,
                              std::size_t samples, std::uint64_t seed) {
    RandomStream stream(seed, kScalarLane, 17);
    const double sd = std::sqrt(t);
    double acc[3] = {0, 0, 0};
    double acc_sq[3] = {0, 0, 0};
    for (std::size_t i = 0; i < samples; ++i) {
        const double y = x + sd * stream.next_normal();
        const double f = kernel_eval(kernel, t, y);
        const double fx = kernel_eval_dx(kernel, t, y);
        const double vals[3] = {f, f * f, f * fx};
        for (int k = 0; k < 3; ++k) {
            acc[k] += vals[k];
            acc_sq[k] += vals[k] * vals[k];
        }
    }
    const double n = static_cast<double>(samples);
    McKernelStats out{};
    double* means[3] = {&out.mean, &out.sq, &out.ffx};
    double* ses[3] = {&out.mean_se, &out.sq_se, &out.ffx_se};
    for (int k = 0; k < 3; ++k) {
        *means[k] = acc[k] / n;
        *ses[k] = std::sqrt((acc_sq[k] / n - *means[k] * *means[k]) / n);
    }
    return out;
}

}  // namespace

TEST(KernelMean, PaperExamples) {
    const DriftKernel id = identity_kernel(1.0);
    EXPECT_NEAR(kernel_mean(id, 0.3, 1.7), 1.7, 1e-14);

    const DriftKernel det = deterministic_kernel(Polynomial({2.0, -1.0}), 1.0);  // f(t) = 2 - t
    EXPECT_NEAR(kernel_mean(det, 0.25, 123.0), 1.75, 1e-14);

    const DriftKernel sq = square_kernel(1.0);
    EXPECT_NEAR(kernel_mean(sq, 0.4, 0.9), 0.4 + 0.81, 1e-13);
}

TEST(KernelSqMean, PaperExamples) {
    const DriftKernel id = identity_kernel(1.0);
    EXPECT_NEAR(kernel_sq_mean(id, 0.5, 1.2), 0.5 + 1.44, 1e-13);

    const DriftKernel sq = square_kernel(1.0);
    EXPECT_NEAR(kernel_sq_mean(sq, 0.7, 0.0), 3.0 * 0.49, 1e-13);

    const DriftKernel det = deterministic_kernel(Polynomial({3.0}), 1.0);
    EXPECT_DOUBLE_EQ(kernel_sq_mean(det, 0.2, -5.0), 9.0);
}

TEST(KernelFfxMean, PaperExamples) {
    const DriftKernel id = identity_kernel(1.0);
    EXPECT_NEAR(kernel_ffx_mean(id, 0.6, -0.8), -0.8, 1e-13);

    const DriftKernel sq = square_kernel(1.0);
    const double t = 0.35;
    const double q = 0.6;
    EXPECT_NEAR(kernel_ffx_mean(sq, t, q), 2.0 * q * q * q + 6.0 * t * q, 1e-12);

    const DriftKernel det = deterministic_kernel(Polynomial({1.0, 2.0}), 1.0);
    EXPECT_DOUBLE_EQ(kernel_ffx_mean(det, 0.4, 2.0), 0.0);
}

TEST(Kernel, TimeRangeChecked) {
    const DriftKernel id = identity_kernel(1.0);
    EXPECT_THROW(kernel_mean(id, -0.5, 0.0), std::invalid_argument);
    EXPECT_THROW(kernel_mean(id, 1.5, 0.0), std::invalid_argument);
}

TEST(Kernel, CallbackMatchesPolynomialRoute) {
    const DriftKernel poly = square_kernel(1.0);
    const DriftKernel cb = callback_kernel([](double, double x) { return x * x; },
                                           [](double, double x) { return 2.0 * x; }, 1.0);
    for (double t : {0.0, 0.2, 0.9}) {
        for (double x : {-1.1, 0.0, 0.7}) {
            EXPECT_NEAR(kernel_mean(cb, t, x), kernel_mean(poly, t, x), 1e-10);
            EXPECT_NEAR(kernel_sq_mean(cb, t, x), kernel_sq_mean(poly, t, x), 1e-9);
            EXPECT_NEAR(kernel_ffx_mean(cb, t, x), kernel_ffx_mean(poly, t, x), 1e-9);
        }
    }
}

TEST(Kernel, CallbackWithoutDerivativeIsRejectedWhereNeeded) {
    const DriftKernel cb = callback_kernel([](double, double x) { return x; }, nullptr, 1.0);
    EXPECT_NO_THROW(kernel_mean(cb, 0.5, 0.0));
    EXPECT_THROW(kernel_ffx_mean(cb, 0.5, 0.0), UnsupportedKernel);
}

TEST(Kernel, FieldsMatchMonteCarloOnBattery) {
    // f(t,x) = (1+t) x - 0.5 x^3
    const DriftKernel mixed = space_poly_kernel(
        {Polynomial(), Polynomial({1.0, 1.0}), Polynomial(), Polynomial({-0.5})}, 1.0);
    const std::vector<DriftKernel> battery{identity_kernel(1.0), square_kernel(1.0), mixed};
    int point = 0;
    for (const DriftKernel& kernel : battery) {
        for (const auto& [t, x] : std::vector<std::pair<double, double>>{
                 {0.3, 0.4}, {0.8, -0.9}}) {
            const McKernelStats mc =
                mc_kernel_stats(kernel, t, x, 1'000'000, 555 + static_cast<std::uint64_t>(point++));
            EXPECT_NEAR(kernel_mean(kernel, t, x), mc.mean, 4.0 * mc.mean_se);
            EXPECT_NEAR(kernel_sq_mean(kernel, t, x), mc.sq, 4.0 * mc.sq_se);
            EXPECT_NEAR(kernel_ffx_mean(kernel, t, x), mc.ffx, 4.0 * mc.ffx_se);
        }
    }
}

TEST(Kernel, JensenAndParityProperties) {
    const DriftKernel mixed = space_poly_kernel(
        {Polynomial({0.3}), Polynomial({1.0, 1.0}), Polynomial({-0.2}), Polynomial({0.1})}, 1.0);
    RandomStream stream(2024, kAuditLane, 5);
    for (int trial = 0; trial < 50; ++trial) {
        const double t = stream.next_uniform();
        const double x = 4.0 * stream.next_uniform() - 2.0;
        const double mean = kernel_mean(mixed, t, x);
        const double sq = kernel_sq_mean(mixed, t, x);
        EXPECT_GE(sq, mean * mean - 1e-10);

        // E[f f_x] = (1/2) d/dx E[f^2]
        const double h = 1e-5;
        const double dsq = (kernel_sq_mean(mixed, t, x + h) - kernel_sq_mean(mixed, t, x - h)) /
                           (2.0 * h);
        EXPECT_NEAR(kernel_ffx_mean(mixed, t, x), 0.5 * dsq, 1e-6 * (1.0 + std::fabs(dsq)));
    }
}

TEST(Kernel, DeterministicFieldsConstantInX) {
    const DriftKernel det = deterministic_kernel(Polynomial({0.5, 1.5}), 2.0);
    for (double x : {-3.0, 0.0, 10.0}) {
        EXPECT_DOUBLE_EQ(kernel_mean(det, 1.0, x), kernel_mean(det, 1.0, 0.0));
        EXPECT_DOUBLE_EQ(kernel_sq_mean(det, 1.0, x), kernel_sq_mean(det, 1.0, 0.0));
        EXPECT_DOUBLE_EQ(kernel_ffx_mean(det, 1.0, x), 0.0);
    }
}

TEST(KernelMeanDt, AnalyticMatchesFiniteDifference) {
    const DriftKernel mixed = space_poly_kernel(
        {Polynomial({0.0, 1.0}), Polynomial({1.0, -0.5}), Polynomial({0.25})}, 1.0);
    for (double t : {0.2, 0.5, 0.8}) {
        for (double x : {-0.7, 0.3}) {
            const double h = 1e-6;
            const double fd =
                (kernel_mean(mixed, t + h, x) - kernel_mean(mixed, t - h, x)) / (2.0 * h);
            EXPECT_NEAR(kernel_mean_dt(mixed, t, x), fd, 1e-6 * (1.0 + std::fabs(fd)));
        }
    }
}

TEST(Audit, IdentityKernelIsJointlyConvex) {
    const AuditBox box{0.0, 1.0, -2.0, 2.0, -3.0, 3.0};
    const AuditReport report = audit_hypotheses(identity_kernel(1.0), box, 500);
    EXPECT_TRUE(report.joint_convexity_ok);
    EXPECT_TRUE(report.coercivity_ok);
    EXPECT_TRUE(report.bounded_below_ok);
    EXPECT_FALSE(report.notes.empty());
}

TEST(Audit, DeterministicKernelCoercivityConstants) {
    // L = (qd - 1)^2 with alpha = 1/2: the tight beta over the box is max f^2
    const AuditBox box{0.0, 1.0, -1.0, 1.0, -3.0, 3.0};
    const AuditReport report =
        audit_hypotheses(deterministic_kernel(Polynomial({1.0}), 1.0), box, 4000);
    EXPECT_TRUE(report.coercivity_ok);
    EXPECT_DOUBLE_EQ(report.alpha, 0.5);
    EXPECT_NEAR(report.beta, 1.0, 0.05);
    EXPECT_TRUE(report.joint_convexity_ok);
}

TEST(Audit, SquareKernelLosesJointConvexityOnWideSlopeBox) {
    const AuditBox box{0.0, 1.0, -0.5, 0.5, -4.0, 4.0};
    const AuditReport report = audit_hypotheses(square_kernel(1.0), box, 2000);
    EXPECT_FALSE(report.joint_convexity_ok);
    EXPECT_LT(report.min_hessian_eigenvalue, -1e-3);
}

TEST(Audit, SampleCountPrecondition) {
    const AuditBox box;
    EXPECT_THROW(audit_hypotheses(identity_kernel(1.0), box, 50), std::invalid_argument);
}

TEST(Audit, CostLipschitzAndBoundedness) {
    const IntegralTerminal parabola{Polynomial({0.0, 0.0, 1.0}), Polynomial(), 1.0};
    const AuditReport narrow = audit_hypotheses(parabola, -1.0, 1.0, 200);
    const AuditReport wide = audit_hypotheses(parabola, -5.0, 5.0, 200);
    EXPECT_NEAR(narrow.lipschitz_g, 2.0, 1e-9);
    EXPECT_NEAR(wide.lipschitz_g, 10.0, 1e-9);
    EXPECT_GT(wide.lipschitz_g, narrow.lipschitz_g);
    EXPECT_TRUE(narrow.bounded_below_ok);
    EXPECT_TRUE(narrow.entropy_sample.has_value());

    const IntegralTerminal cubic{Polynomial({0.0, 0.0, 0.0, 1.0}), Polynomial(), 1.0};
    const AuditReport cubic_report = audit_hypotheses(cubic, -2.0, 2.0, 200);
    EXPECT_FALSE(cubic_report.bounded_below_ok);
}

TEST(Audit, CostFunctionalDispatch) {
    const AuditBox box{0.0, 1.0, -2.0, 2.0, -3.0, 3.0};
    const CostFunctional ito{ItoForm{0.0, identity_kernel(1.0)}};
    const AuditReport via_cost = audit_hypotheses(ito, box, 500);
    const AuditReport via_kernel = audit_hypotheses(identity_kernel(1.0), box, 500);
    EXPECT_EQ(via_cost.joint_convexity_ok, via_kernel.joint_convexity_ok);
    EXPECT_DOUBLE_EQ(via_cost.beta, via_kernel.beta);

    const CostFunctional integral{IntegralTerminal{Polynomial({0.0, 0.0, 1.0}), Polynomial(), 1.0}};
    const AuditReport report = audit_hypotheses(integral, box, 200);
    EXPECT_NEAR(report.lipschitz_g, 4.0, 1e-9);
}
