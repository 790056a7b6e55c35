// SPDX-License-Identifier: Apache-2.0
#include "flapest/attitude_ekf.hpp"
#include "flapest/evaluation.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <random>

using namespace flapest;

namespace
{
    const AttitudeNoise kNoise{};

    double min_eig(const Matrix6d& p)
    {
        return Eigen::SelfAdjointEigenSolver<Matrix6d>(p).eigenvalues().minCoeff();
    }

    AttitudeState state_at(double roll, double pitch, double yaw)
    {
        AttitudeState s;
        s.q = from_euler_zyx(roll, pitch, yaw);
        s.P = Matrix6d::Identity() * 1e-2;
        return s;
    }
} // namespace

TEST(Euler, RoundTrip)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> a(-1.4, 1.4), y(-3.0, 3.0);
    for (int i = 0; i < 100; ++i)
    {
        const Vector3d e(a(rng), a(rng), y(rng));
        EXPECT_LT((euler_zyx(from_euler_zyx(e.x(), e.y(), e.z())) - e).norm(), 1e-12);
    }
}

TEST(Euler, TiltFromLevelAccel)
{
    const Vector2d t = tilt_from_accel(Vector3d(0.0, 0.0, 9.81));
    EXPECT_NEAR(t.norm(), 0.0, 1e-15);
    const Quaterniond q = from_euler_zyx(0.2, -0.3, 1.0);
    const Vector2d u = tilt_from_accel(q.toRotationMatrix().transpose() * Vector3d(0, 0, 9.81));
    EXPECT_NEAR(u.x(), 0.2, 1e-12);
    EXPECT_NEAR(u.y(), -0.3, 1e-12);
}

TEST(QuatExp, LogInverts)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> c(-1.5, 1.5);
    for (int i = 0; i < 100; ++i)
    {
        const Vector3d v(c(rng), c(rng), c(rng));
        EXPECT_LT((quat_log(quat_exp(v)) - v).norm(), 1e-12);
    }
    EXPECT_LT((quat_log(quat_exp<double>(Vector3d(1e-14, 0, 0))) - Vector3d(1e-14, 0, 0)).norm(), 1e-20);
}

TEST(Predict, ZeroRateKeepsAttitude)
{
    const auto s = state_at(0.1, 0.2, 0.3);
    const auto n = predict(s, Vector3d::Zero(), 0.005, kNoise);
    EXPECT_EQ(n.q.coeffs(), s.q.coeffs());
}

TEST(Predict, YawRateQuarterTurn)
{
    AttitudeState s;
    for (int i = 0; i < 100; ++i)
        s = predict(s, Vector3d(0, 0, kPi / 2.0), 0.01, kNoise);
    EXPECT_NEAR(euler_zyx(s.q).z(), kPi / 2.0, 1e-6);
}

TEST(Predict, HalfStepsComposeExactly)
{
    const auto s = state_at(0.3, -0.2, 1.0);
    const Vector3d w(0.4, -1.1, 0.7);
    const auto full = predict(s, w, 0.02, kNoise);
    const auto half = predict(predict(s, w, 0.01, kNoise), w, 0.01, kNoise);
    EXPECT_LT((full.q.coeffs() - half.q.coeffs()).norm(), 1e-9);
}

TEST(Predict, RejectsBadStep)
{
    AttitudeState s;
    EXPECT_THROW(predict(s, Vector3d::Zero(), 0.0, kNoise), ParameterError);
    EXPECT_THROW(predict(s, Vector3d::Zero(), 0.2, kNoise), ParameterError);
    EXPECT_THROW(predict(s, Vector3d(NAN, 0, 0), 0.01, kNoise), ParameterError);
}

TEST(GpsAccel, ConstantVelocity)
{
    GpsAccelEstimator e;
    for (int i = 0; i < 20; ++i)
        e.push(i / 8.7, Vector3d(8, 0, 0.5));
    const auto o = e.at(19 / 8.7);
    EXPECT_FALSE(o.stale);
    EXPECT_LT(o.a_dyn.norm(), 1e-12);
}

TEST(GpsAccel, RampSettlesToSlope)
{
    GpsAccelEstimator e;
    double t = 0.0;
    for (int i = 0; i < 87; ++i)
    {
        t = i / 8.7;
        e.push(t, Vector3d(t, 0, 0));
    }
    EXPECT_NEAR(e.at(t).a_dyn.x(), 1.0, 1e-9);
}

TEST(GpsAccel, LowPassStepResponse)
{
    // a velocity ramp starting at t = 1: the filtered acceleration follows the
    // first-order response 1 - exp(-2 pi fc (t - t_first))
    GpsAccelEstimator e(1.0);
    const double dt = 0.1;
    for (int i = 0; i <= 10; ++i)
        e.push(i * dt, Vector3d::Zero());
    double v = 0.0;
    for (int i = 11; i <= 30; ++i)
    {
        v += dt;
        e.push(i * dt, Vector3d(v, 0, 0));
    }
    const double expected = 1.0 - std::exp(-2.0 * kPi * 1.0 * 20 * dt);
    EXPECT_NEAR(e.at(3.0).a_dyn.x(), expected, 1e-12);
}

TEST(GpsAccel, StaleGivesZero)
{
    GpsAccelEstimator e;
    e.push(0.0, Vector3d::Zero());
    EXPECT_TRUE(e.at(0.0).stale);
    e.push(0.1, Vector3d(1, 0, 0));
    EXPECT_FALSE(e.at(0.5).stale);
    const auto o = e.at(1.5);
    EXPECT_TRUE(o.stale);
    EXPECT_EQ(o.a_dyn, Vector3d::Zero());
}

TEST(UpdateAccel, ConsistentGravityIsNoOp)
{
    const auto s = state_at(0.2, -0.1, 0.5);
    const Vector3d a = s.q.toRotationMatrix().transpose() * Vector3d(0, 0, 9.81);
    const auto u = update_accel(s, a, Vector3d::Zero(), kNoise);
    ASSERT_TRUE(u);
    EXPECT_LT((u->q.coeffs() - s.q.coeffs()).norm(), 1e-12);
    EXPECT_LT((u->b_g - s.b_g).norm(), 1e-12);
    EXPECT_LE(u->P.trace(), s.P.trace());
    EXPECT_LT(u->P(0, 0), s.P(0, 0));
    EXPECT_LT(u->P(1, 1), s.P(1, 1));
}

TEST(UpdateAccel, GateRejectsTwoG)
{
    const auto s = state_at(0.0, 0.0, 0.0);
    EXPECT_FALSE(update_accel(s, Vector3d(0, 0, 2.0 * 9.81), Vector3d::Zero(), kNoise));
}

TEST(UpdateAccel, DynamicAccelIsClamped)
{
    const auto s = state_at(0.0, 0.0, 0.0);
    const auto g = split_gravity(s, Vector3d(0, 0, 9.81), Vector3d(100, 0, 0), kNoise);
    EXPECT_NEAR(g.a_dyn.norm(), 3.0 * 9.81, 1e-9);
    EXPECT_TRUE(g.g_body.allFinite());
}

TEST(UpdateMag, MatchingFieldIsNoOp)
{
    const auto s = state_at(0.1, 0.2, -0.7);
    const Vector3d m_ref = mag_reference(0.05, 50.0 * kPi / 180.0);
    const auto u = update_mag(s, s.q.toRotationMatrix().transpose() * m_ref, m_ref, kNoise);
    ASSERT_TRUE(u);
    EXPECT_LT((u->q.coeffs() - s.q.coeffs()).norm(), 1e-12);
}

TEST(UpdateMag, VerticalDisturbanceLeavesTilt)
{
    auto s = state_at(0.1, 0.2, -0.7);
    s.P(0, 2) = s.P(2, 0) = 5e-3; // correlated: the gain rows for tilt must still be zero
    const Vector3d m_ref = mag_reference(0.05, 50.0 * kPi / 180.0);
    const Vector3d m_body = s.q.toRotationMatrix().transpose() * (m_ref + Vector3d(0, 0, 0.4));
    const auto u = update_mag(s, m_body, m_ref, kNoise);
    ASSERT_TRUE(u);
    const Vector3d before = euler_zyx(s.q), after = euler_zyx(u->q);
    EXPECT_NEAR(after.x(), before.x(), 1e-9);
    EXPECT_NEAR(after.y(), before.y(), 1e-9);
}

TEST(UpdateMag, NearVerticalFieldSkipped)
{
    const auto s = state_at(0.0, 0.0, 0.0);
    const Vector3d m_ref = mag_reference(0.0, 86.0 * kPi / 180.0);
    EXPECT_FALSE(update_mag(s, m_ref, m_ref, kNoise));
}

TEST(UpdateMag, YawOffsetConverges)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    const Vector3d m_ref = mag_reference(0.05, 50.0 * kPi / 180.0);
    const Quaterniond truth = from_euler_zyx(0.05, -0.1, 0.8);
    AttitudeState s = state_at(0.05, -0.1, 0.8 + 30.0 * kPi / 180.0);
    s.P.diagonal() << 0.01, 0.01, 1.0, 1e-4, 1e-4, 1e-4;
    const Matrix3d rt = truth.toRotationMatrix().transpose();
    for (int i = 1; i <= 2000; ++i)
    {
        s = predict(s, 0.01 * Vector3d(n01(rng), n01(rng), n01(rng)), 0.005, kNoise);
        const Vector3d a = rt * Vector3d(0, 0, 9.81) + 0.15 * Vector3d(n01(rng), n01(rng), n01(rng));
        if (auto u = update_accel(s, a, Vector3d::Zero(), kNoise))
            s = *u;
        if (i % 15 == 0)
            if (auto u = update_mag(s, rt * m_ref + 0.01 * Vector3d(n01(rng), n01(rng), n01(rng)), m_ref, kNoise))
                s = *u;
    }
    EXPECT_LT(std::abs(wrap_pi(euler_zyx(s.q).z() - 0.8)), 1.0 * kPi / 180.0);
}

TEST(Invariants, NormAndCovarianceSurviveLongRuns)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    const Vector3d m_ref = mag_reference(0.05, 50.0 * kPi / 180.0);
    AttitudeState s;
    double worst_norm = 0.0, worst_eig = 0.0, worst_asym = 0.0;
    for (int i = 0; i < 10000; ++i)
    {
        s = predict(s, Vector3d(n01(rng), n01(rng), n01(rng)), 0.005, kNoise);
        if (i % 2 == 0)
        {
            const Vector3d a = Vector3d(0, 0, 9.81) + 2.0 * Vector3d(n01(rng), n01(rng), n01(rng));
            if (auto u = update_accel(s, a, Vector3d(n01(rng), 0, 0), kNoise))
                s = *u;
        }
        if (i % 15 == 0)
            if (auto u = update_mag(s, m_ref + 0.1 * Vector3d(n01(rng), n01(rng), n01(rng)), m_ref, kNoise))
                s = *u;
        worst_norm = std::max(worst_norm, std::abs(s.q.norm() - 1.0));
        worst_eig = std::min(worst_eig, min_eig(s.P));
        worst_asym = std::max(worst_asym, (s.P - s.P.transpose()).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst_norm, 1e-9);
    EXPECT_GE(worst_eig, -1e-9);
    EXPECT_EQ(worst_asym, 0.0);
}

TEST(AttitudeEkf, LevelFlightTiltWithinTwoDegrees)
{
    // oscillation-free flight so the raw inputs carry no flapping content
    SimConfig sim;
    sim.C_L_osc = 0.0;
    sim.aero.h0 = 0.0;
    const auto s = flapest::testing::make_scenario(sim, 20.0);
    std::vector<double> t;
    std::vector<Vector3d> g, a;
    for (const auto& o : s.outputs)
    {
        t.push_back(o.t);
        g.push_back(o.gyro_raw);
        a.push_back(o.accel_raw);
    }
    const auto q = run_attitude_ekf(t, g, a, s.flight.log, s.config.attitude, mag_reference(sim.mag_declination, sim.mag_inclination));
    double se = 0.0;
    long n = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
    {
        if (t[i] < 5.0)
            continue;
        const auto tr = truth_at(s.flight.truth, t[i]);
        const Vector3d e = euler_zyx(q[i]);
        se += std::pow(e.x() - tr.roll, 2) + std::pow(e.y() - tr.theta, 2);
        n += 2;
    }
    EXPECT_LT(std::sqrt(se / n) * 180.0 / kPi, 2.0);
}

TEST(Complementary, HoldsLevelAttitude)
{
    const Vector3d m_ref = mag_reference(0.05, 50.0 * kPi / 180.0);
    ComplementaryFilter cf(0.5, 0.5, m_ref);
    const Quaterniond truth = from_euler_zyx(0.1, -0.2, 0.4);
    const Matrix3d rt = truth.toRotationMatrix().transpose();
    cf.on_mag(0.0, rt * m_ref);
    for (int i = 0; i < 2000; ++i)
    {
        if (i % 15 == 0)
            cf.on_mag(i / 200.0, rt * m_ref);
        cf.step(i / 200.0, Vector3d::Zero(), rt * Vector3d(0, 0, 9.81));
    }
    EXPECT_LT(quat_log(Quaterniond(cf.attitude().conjugate() * truth)).norm(), 1e-3);
}
