// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/aero.hpp"
#include "flapest/periodic_learner.hpp"
#include "flapest/types.hpp"

#include <array>
#include <optional>

namespace flapest
{
    /// Cycle-mean position and velocity (inertial, Z up) with covariance.
    struct InternalState
    {
        Vector3d p_bar = Vector3d::Zero();
        Vector3d v_bar = Vector3d::Zero();
        Matrix6d P = Matrix6d::Identity();

        friend bool operator==(const InternalState&, const InternalState&) = default;
    };

    struct InternalNoise
    {
        double accel_psd = 0.5; ///< (m/s^2)^2/Hz driving v_bar
        double gps_pos = 0.5; ///< m, 1 sigma per axis
        double gps_vel = 0.05; ///< m/s
        double gate_sigma = 5.0;
        double init_pos = 1.0;
        double init_vel = 0.5;

        void validate() const;
        friend bool operator==(const InternalNoise&, const InternalNoise&) = default;
    };

    /// Wind-to-body rotation for angle of attack alpha (zero sideslip).
    Matrix3d wind_to_body(double alpha);

    struct AirData
    {
        double V_b = 0.0;
        double alpha = 0.0;
    };

    /// Airspeed and AoA of the air-relative velocity seen in the body frame.
    AirData air_data(const Matrix3d& R_BI, const Vector3d& v_inertial, const Vector3d& wind = Vector3d::Zero());

    /// Semi-implicit Euler step of the translational internal model. f_W is a
    /// force and is divided by m. Throws ParameterError unless dt is in (0, 0.1].
    InternalState internal_predict(const InternalState& state, const Matrix3d& R_BI, const Matrix3d& R_WB, const Vector3d& f_W, double dt,
                                   const AeroConfig& config, const InternalNoise& noise);

    /// Linear update on any of GPS position and velocity. Returns nullopt when
    /// an innovation component exceeds gate_sigma standard deviations.
    std::optional<InternalState> internal_update(const InternalState& state, const std::optional<Vector3d>& gps_pos,
                                                 const std::optional<Vector3d>& gps_vel, const InternalNoise& noise);

    struct OscillationEstimate
    {
        OscillationParams params;
        double q_phase = 0.0; ///< phase of the pitch-rate fundamental
        double accel_phase = 0.0; ///< phase of the normal-acceleration fundamental
        bool available = false;
    };

    /// Oscillation amplitudes and phases from the fundamentals of the learned
    /// gyro-Y and accel-Z patterns.
    OscillationEstimate estimate_oscillation_params(const PeriodicPattern& gyro_y, const PeriodicPattern& accel_z, const FlightCondition& cond,
                                                    const AeroConfig& config);

    /// Learned patterns for accel x/y/z then gyro x/y/z.
    using PatternSet = std::array<PeriodicPattern, 6>;

    struct ReconstructedState
    {
        Quaterniond q = Quaterniond::Identity();
        Vector3d v = Vector3d::Zero();
        Vector3d p = Vector3d::Zero();
    };

    /// Adds the zero-mean integrated gyro pattern to the attitude (as a body
    /// rotation) and the once and twice integrated accel pattern, rotated to
    /// the inertial frame, to velocity and position.
    ReconstructedState reconstruct_state(const InternalState& internal, const Quaterniond& attitude, const PatternSet& patterns, double phi,
                                         double f);

    struct InternalCounters
    {
        long updates = 0;
        long gated = 0;
        friend bool operator==(const InternalCounters&, const InternalCounters&) = default;
    };

    /// Stateful wrapper: initializes from the first GPS fix and pairs position
    /// and velocity fixes that share a timestamp.
    class InternalEkf
    {
    public:
        explicit InternalEkf(AeroConfig config = {}, InternalNoise noise = {});

        void predict(const Matrix3d& R_BI, const Vector3d& f_W, double dt);
        /// Returns false if the fix was gated out (or only used to initialize).
        bool update(const std::optional<Vector3d>& gps_pos, const std::optional<Vector3d>& gps_vel);

        [[nodiscard]] bool initialized() const { return initialized_; }
        [[nodiscard]] const InternalState& state() const { return state_; }
        [[nodiscard]] const InternalCounters& counters() const { return counters_; }
        [[nodiscard]] const AeroConfig& aero() const { return config_; }

        friend bool operator==(const InternalEkf&, const InternalEkf&) = default;

    private:
        AeroConfig config_;
        InternalNoise noise_;
        InternalState state_;
        InternalCounters counters_;
        std::optional<Vector3d> pending_pos_;
        std::optional<Vector3d> pending_vel_;
        bool initialized_ = false;
    };
} // namespace flapest
