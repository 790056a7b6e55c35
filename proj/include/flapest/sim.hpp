// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/aero.hpp"
#include "flapest/types.hpp"

#include <cstdint>
#include <vector>

namespace flapest
{
    /// Wind added over [t_start, t_start + duration] with a 1 - cos envelope.
    struct GustEvent
    {
        double t_start = 0.0;
        double duration = 1.0;
        Vector3d wind = Vector3d::Zero(); ///< inertial, m/s at the envelope peak

        friend bool operator==(const GustEvent&, const GustEvent&) = default;
    };

    struct SimConfig
    {
        AeroConfig aero;
        double f_flap = 5.0;
        double phase0 = 0.0;
        double C_L_osc = 0.5;
        double phi_L = 0.0;
        double airspeed = 8.0; ///< trim airspeed (cycle mean)
        double tail_drag = 0.01; ///< tail drag coefficient referenced to S
        double dt = 1e-3;

        double imu_rate = 170.8; ///< accel and gyro share timestamps
        double mag_rate = 13.4;
        double gps_rate = 8.7;
        double jitter = 0.5e-3; ///< max timestamp jitter, s

        double accel_noise = 0.15;
        double gyro_noise = 0.01;
        double mag_noise = 0.01;
        double gps_pos_noise = 0.5;
        double gps_vel_noise = 0.05;
        Vector3d accel_bias = Vector3d(0.02, -0.01, 0.03);
        Vector3d gyro_bias = Vector3d(0.002, -0.001, 0.0015);

        double roll_sigma = 0.05; ///< stationary std of the roll disturbance, rad
        double roll_freq = 0.5; ///< natural frequency, Hz
        double roll_damping = 0.7;
        double gust_roll_gain = 0.5; ///< roll acceleration per m/s of lateral gust

        double heading = 0.3;
        double mag_declination = 0.05;
        double mag_inclination = 50.0 * kPi / 180.0;

        Vector3d wind = Vector3d::Zero();
        std::vector<GustEvent> gusts;
        std::uint64_t seed = 42;

        /// Throws ParameterError for non-positive rates, negative noise or a
        /// step too coarse for the flapping frequency.
        void validate() const;

        friend bool operator==(const SimConfig&, const SimConfig&) = default;
    };

    /// Longitudinal state [x, z, u, w, theta, q]: position along the heading
    /// and up, body velocity, pitch (positive nose down) and pitch rate.
    using LongState = Eigen::Matrix<double, 6, 1>;

    struct TrimResult
    {
        LongState x0 = LongState::Zero();
        double C_Lt = 0.0; ///< constant tail lift coefficient referenced to S
        double alpha_bar = 0.0;
        double theta_bar = 0.0;
        bool periodic = false;
    };

    /// Instantaneous aerodynamics at one state.
    struct AeroSample
    {
        double alpha = 0.0;
        double V = 0.0;
        double C_L = 0.0;
        double C_T = 0.0;
        double C_D = 0.0;
        Vector3d force_body = Vector3d::Zero(); ///< wing and tail, longitudinal body frame, N
        double moment = 0.0; ///< pitch moment, N m
    };

    Vector3d wind_at(const SimConfig& config, double t);
    double flap_phase(const SimConfig& config, double t);

    AeroSample aero_sample(const SimConfig& config, double C_Lt, const LongState& x, double t);
    LongState derivatives(const SimConfig& config, double C_Lt, const LongState& x, double t);

    /// One RK4 step. Throws ParameterError if dt exceeds a fiftieth of a flap
    /// cycle, NumericError if |u| exceeds 100 m/s or the state is not finite.
    LongState step(const SimConfig& config, double C_Lt, const LongState& x, double t, double dt);

    /// Equilibrium of the cycle-averaged dynamics at the configured airspeed,
    /// treating the flapping terms by their means. Solves for AoA, pitch and tail lift.
    TrimResult trim_static(const SimConfig& config);

    /// Periodic orbit at the configured mean airspeed: shooting on the initial
    /// (u, w, theta, q) and tail lift so that one cycle returns to the start.
    TrimResult trim_periodic(const SimConfig& config);

    struct TruthRecord
    {
        double t = 0.0;
        double phase = 0.0; ///< unwrapped
        double u = 0.0, w = 0.0, theta = 0.0, q = 0.0;
        double roll = 0.0, roll_rate = 0.0, yaw = 0.0;
        Vector3d position = Vector3d::Zero();
        Vector3d velocity = Vector3d::Zero();
        double alpha = 0.0, V = 0.0;
        double C_L = 0.0, C_T = 0.0, C_D = 0.0;
        Vector3d accel = Vector3d::Zero(); ///< noiseless specific force, body
        Vector3d gyro = Vector3d::Zero(); ///< noiseless angular rate, body
        Vector3d accel_osc = Vector3d::Zero();
        Vector3d gyro_osc = Vector3d::Zero();

        [[nodiscard]] Quaterniond attitude() const;
    };

    struct SimOutput
    {
        std::vector<TimedSample> log; ///< sorted by time
        std::vector<TruthRecord> truth; ///< at the integrator rate
        TrimResult trim;
    };

    /// Noiseless specific force and angular rate for a longitudinal state and
    /// roll; accel is R^T (a + g e3).
    std::pair<Vector3d, Vector3d> ideal_imu(const SimConfig& config, double C_Lt, const LongState& x, double t, double roll, double roll_rate);

    /// Runs the simulator from the periodic trim for the given duration.
    /// Deterministic for a fixed seed.
    SimOutput run(const SimConfig& config, double duration);

    /// Whole-vehicle aero constants for the estimator: the tail is folded into
    /// an effective lift slope and zero-lift drag so that the closed-form
    /// cycle averages balance gravity on the trimmed orbit.
    AeroConfig estimator_aero(const SimConfig& config, const TrimResult& trim);
} // namespace flapest
