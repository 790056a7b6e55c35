// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <optional>

namespace flapest
{
    /// Rotation vector to unit quaternion (exact exponential map).
    template <typename Scalar>
    Eigen::Quaternion<Scalar> quat_exp(const Eigen::Matrix<Scalar, 3, 1>& rotvec)
    {
        const Scalar angle = rotvec.norm();
        if (angle < Scalar(1e-12))
        {
            Eigen::Quaternion<Scalar> q(Scalar(1), rotvec.x() / 2, rotvec.y() / 2, rotvec.z() / 2);
            return q.normalized();
        }
        return Eigen::Quaternion<Scalar>(Eigen::AngleAxis<Scalar>(angle, rotvec / angle));
    }

    /// Inverse of quat_exp, with the rotation angle in [0, pi].
    template <typename Scalar>
    Eigen::Matrix<Scalar, 3, 1> quat_log(const Eigen::Quaternion<Scalar>& q)
    {
        Eigen::Quaternion<Scalar> p = q.w() < Scalar(0) ? Eigen::Quaternion<Scalar>(-q.coeffs()) : q;
        const Scalar s = p.vec().norm();
        if (s < Scalar(1e-12))
            return Scalar(2) * p.vec();
        return Scalar(2) * std::atan2(s, p.w()) / s * p.vec();
    }

    template <typename Scalar>
    Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v)
    {
        Eigen::Matrix<Scalar, 3, 3> m;
        m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
        return m;
    }

    /// Z-Y-X Euler angles (roll, pitch, yaw) of R = Rz(yaw) Ry(pitch) Rx(roll).
    Vector3d euler_zyx(const Quaterniond& q);
    Quaterniond from_euler_zyx(double roll, double pitch, double yaw);

    /// Roll and pitch from a specific-force vector that points along +Z when level.
    Vector2d tilt_from_accel(const Vector3d& f_body);

    struct AttitudeNoise
    {
        double gyro = 0.02; ///< rad/s/sqrt(Hz)
        double accel = 0.5; ///< m/s^2
        double mag = 0.05; ///< normalized field units
        double bias_walk = 1e-4; ///< rad/s^2/sqrt(Hz)
        double gate_fraction = 0.3; ///< accel gate on | |g_body| - g | / g
        double max_dyn_accel = 3.0; ///< clamp on |a_dyn| in units of g
        double init_tilt = 0.1; ///< rad, 1 sigma
        double init_yaw = 1.0;
        double init_bias = 0.01;
        double g = 9.81;

        void validate() const;
        friend bool operator==(const AttitudeNoise&, const AttitudeNoise&) = default;
    };

    /// Body-to-inertial attitude with gyro bias and error-state covariance over
    /// (delta theta, delta b_g); the attitude error is applied on the left,
    /// q = Exp(delta theta) * q_hat.
    struct AttitudeState
    {
        Quaterniond q = Quaterniond::Identity();
        Vector3d b_g = Vector3d::Zero();
        Matrix6d P = Matrix6d::Identity() * 1e-2;

        friend bool operator==(const AttitudeState& a, const AttitudeState& b)
        {
            return a.q.coeffs() == b.q.coeffs() && a.b_g == b.b_g && a.P == b.P;
        }
    };

    struct GravityEstimate
    {
        Vector3d g_body = Vector3d::Zero();
        Vector3d a_dyn = Vector3d::Zero();
    };

    /// Earth-field direction [cos i cos d, cos i sin d, -sin i] (Z up).
    Vector3d mag_reference(double declination, double inclination);

    /// Propagates with the exact exponential of (omega - b_g) dt.
    /// Throws ParameterError unless dt is in (0, 0.1] and omega is finite.
    AttitudeState predict(const AttitudeState& state, const Vector3d& omega, double dt, const AttitudeNoise& noise);

    /// g_body = a_free - R^T a_dyn, with a_dyn clamped to max_dyn_accel.
    GravityEstimate split_gravity(const AttitudeState& state, const Vector3d& a_free, const Vector3d& a_dyn, const AttitudeNoise& noise);

    /// Gravity-direction update. Returns nullopt when the gate rejects g_body.
    std::optional<AttitudeState> update_accel(const AttitudeState& state, const Vector3d& a_free, const Vector3d& a_dyn, const AttitudeNoise& noise);

    /// Heading-only update from the horizontal projection of the field.
    /// Returns nullopt for a degenerate or near-vertical field.
    std::optional<AttitudeState> update_mag(const AttitudeState& state, const Vector3d& m_raw, const Vector3d& m_ref, const AttitudeNoise& noise);

    /// Dynamic acceleration from differentiated GPS velocity, low-passed at
    /// cutoff_hz and held between fixes.
    class GpsAccelEstimator
    {
    public:
        struct Output
        {
            Vector3d a_dyn = Vector3d::Zero();
            bool stale = true;
        };

        explicit GpsAccelEstimator(double cutoff_hz = 1.0, double stale_after = 1.0);

        void push(double t, const Vector3d& v_inertial);
        /// Value at time t; zero and stale when fewer than two fixes exist or
        /// the last is older than stale_after.
        [[nodiscard]] Output at(double t) const;

        friend bool operator==(const GpsAccelEstimator&, const GpsAccelEstimator&) = default;

    private:
        double cutoff_;
        double stale_after_;
        std::optional<std::pair<double, Vector3d>> last_;
        Vector3d filtered_ = Vector3d::Zero();
        int count_ = 0;
    };

    struct AttitudeCounters
    {
        long accel_updates = 0;
        long accel_gated = 0;
        long mag_updates = 0;
        long mag_skipped = 0;
        friend bool operator==(const AttitudeCounters&, const AttitudeCounters&) = default;
    };

    /// Error-state EKF driven on a uniform grid by gyro and accel, with
    /// asynchronous magnetometer and GPS-velocity events.
    class AttitudeEkf
    {
    public:
        explicit AttitudeEkf(AttitudeNoise noise = {}, Vector3d m_ref = mag_reference(0.0, 50.0 * kPi / 180.0));

        /// One grid tick. The first call only initializes the tilt (and the yaw
        /// if a field sample has been seen).
        void step(double t, const Vector3d& gyro, const Vector3d& accel);
        void on_mag(double t, const Vector3d& m);
        void on_gps_velocity(double t, const Vector3d& v);

        [[nodiscard]] bool initialized() const { return initialized_; }
        [[nodiscard]] const AttitudeState& state() const { return state_; }
        [[nodiscard]] const AttitudeCounters& counters() const { return counters_; }
        [[nodiscard]] const AttitudeNoise& noise() const { return noise_; }
        [[nodiscard]] Vector3d last_dynamic_accel() const { return a_dyn_; }
        void set_accel_noise(double sigma) { noise_.accel = sigma; }

        friend bool operator==(const AttitudeEkf&, const AttitudeEkf&) = default;

    private:
        AttitudeNoise noise_;
        Vector3d m_ref_;
        AttitudeState state_;
        GpsAccelEstimator gps_;
        AttitudeCounters counters_;
        std::optional<Vector3d> pending_mag_;
        Vector3d a_dyn_ = Vector3d::Zero();
        double t_last_ = 0.0;
        bool initialized_ = false;
    };

    /// Fixed-gain complementary filter (Mahony-style proportional correction).
    class ComplementaryFilter
    {
    public:
        explicit ComplementaryFilter(double k_accel = 0.5, double k_mag = 0.5, Vector3d m_ref = mag_reference(0.0, 50.0 * kPi / 180.0));

        void step(double t, const Vector3d& gyro, const Vector3d& accel);
        void on_mag(double t, const Vector3d& m);

        [[nodiscard]] const Quaterniond& attitude() const { return q_; }
        [[nodiscard]] bool initialized() const { return initialized_; }

    private:
        double k_accel_;
        double k_mag_;
        Vector3d m_ref_;
        Quaterniond q_ = Quaterniond::Identity();
        std::optional<Vector3d> mag_;
        double t_last_ = 0.0;
        bool initialized_ = false;
    };
} // namespace flapest
