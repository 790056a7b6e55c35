// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/attitude_ekf.hpp"
#include "flapest/pipeline.hpp"
#include "flapest/sim.hpp"
#include "flapest/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace flapest
{
    /// Welch power (Hann, 50% overlap) summed over bins in [f_center - half_width, f_center + half_width].
    double band_power(const VectorXd& x, double fs, double f_center, double half_width, int segment = 512);

    /// Lag k in [-max_lag, max_lag] maximizing sum_i a(i) b(i + k) after mean
    /// removal; positive k means b is delayed relative to a.
    int xcorr_lag(const VectorXd& a, const VectorXd& b, int max_lag);

    /// Truth linearly interpolated at time t (clamped at the ends).
    TruthRecord truth_at(std::span<const TruthRecord> truth, double t);

    /// Attitude estimates of one method at the pipeline's grid ticks.
    struct MethodTrack
    {
        std::string name;
        std::vector<Quaterniond> attitude;
    };

    /// Runs an attitude filter over per-tick inputs, replaying magnetometer and
    /// GPS-velocity samples from the log in timestamp order.
    std::vector<Quaterniond> run_attitude_ekf(std::span<const double> t, std::span<const Vector3d> gyro, std::span<const Vector3d> accel,
                                              std::span<const TimedSample> log, const AttitudeNoise& noise, const Vector3d& m_ref);
    std::vector<Quaterniond> run_complementary(std::span<const double> t, std::span<const Vector3d> gyro, std::span<const Vector3d> accel,
                                               std::span<const TimedSample> log, const Vector3d& m_ref);

    /// The comparison set: proposed, raw-input EKF, trailing-average EKF,
    /// centered-average EKF and the fixed-gain complementary filter.
    std::vector<MethodTrack> attitude_methods(std::span<const PipelineOutput> outputs, std::span<const TimedSample> log, const PipelineConfig& config);

    struct AttitudeErrors
    {
        std::string name;
        double roll_deg = 0.0;
        double pitch_deg = 0.0;
        double yaw_deg = 0.0;
        double tilt_deg = 0.0; ///< RMS over roll and pitch together
    };

    /// Reference attitude for the slow estimators: truth Euler angles averaged
    /// over one flap cycle centered at each tick.
    std::vector<Vector3d> reference_euler(std::span<const PipelineOutput> outputs, std::span<const TruthRecord> truth, double f_flap);

    /// RMS Euler errors of each method against the reference from t_start on.
    std::vector<AttitudeErrors> attitude_errors(std::span<const MethodTrack> methods, std::span<const PipelineOutput> outputs,
                                                std::span<const Vector3d> reference, double t_start);

    /// Metrics table as text and as CSV.
    std::string format_table(std::span<const AttitudeErrors> rows);
    std::string format_csv(std::span<const AttitudeErrors> rows);
} // namespace flapest
