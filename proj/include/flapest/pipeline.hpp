// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/aero.hpp"
#include "flapest/attitude_ekf.hpp"
#include "flapest/freq_tracker.hpp"
#include "flapest/internal_model.hpp"
#include "flapest/periodic_learner.hpp"
#include "flapest/phase_tracker.hpp"
#include "flapest/signal.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <vector>

namespace flapest
{
    struct PipelineConfig
    {
        double fs = 200.0;
        int fft_window = 512;
        int fft_hop = 32;
        double f_lo = 1.0;
        double f_hi = 8.0;
        double freq_smoothing = 1.0; ///< s
        double f_init = 5.0; ///< phase rate before the first spectral estimate
        int k_clusters = 16;
        int stack_cycles = 4;
        int n_harm = 5;
        double k_cc = 0.1;
        double phase_lower = -kPi / 4.0;
        double phase_upper = kPi / 4.0;
        double lowpass_hz = 10.0; ///< applied to the oscillation-free streams
        double max_out_of_order = 0.05; ///< s
        bool gp_variance_inflation = false;
        bool record_spectrogram = false;
        double mag_declination = 0.05;
        double mag_inclination = 50.0 * kPi / 180.0;
        AttitudeNoise attitude;
        InternalNoise internal;
        AeroConfig aero;

        /// Throws ParameterError for an inconsistent configuration.
        void validate() const;

        friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
    };

    /// One row per resampled grid tick.
    struct PipelineOutput
    {
        std::int64_t tick = 0;
        double t = 0.0;
        double t_emit = 0.0; ///< timestamp of the input sample that completed the tick
        Vector3d accel_raw = Vector3d::Zero();
        Vector3d gyro_raw = Vector3d::Zero();
        Vector3d accel_free = Vector3d::Zero();
        Vector3d gyro_free = Vector3d::Zero();
        Vector3d accel_pattern = Vector3d::Zero(); ///< learned oscillation subtracted at this tick
        Vector3d gyro_pattern = Vector3d::Zero();
        double phase = 0.0;
        double freq = 0.0;
        double freq_var = 0.0;
        Quaterniond attitude = Quaterniond::Identity();
        Vector3d p_bar = Vector3d::Zero();
        Vector3d v_bar = Vector3d::Zero();
        bool internal_valid = false;
        Quaterniond attitude_rec = Quaterniond::Identity();
        Vector3d p_rec = Vector3d::Zero();
        Vector3d v_rec = Vector3d::Zero();
        long pattern_id = 0; ///< number of refits applied so far
    };

    struct PipelineCounters
    {
        long ticks = 0;
        long dropped_samples = 0;
        long refits = 0;
        long accel_gated = 0;
        long mag_skipped = 0;
        long gps_gated = 0;

        friend bool operator==(const PipelineCounters&, const PipelineCounters&) = default;
    };

    struct PipelineSnapshot
    {
        PhaseState phase;
        std::optional<FrequencyEstimate> frequency;
        PatternSet patterns;
        AttitudeState attitude;
        InternalState internal;
        PipelineCounters counters;

        friend bool operator==(const PipelineSnapshot& a, const PipelineSnapshot& b);
    };

    /// Streaming estimator: resample, track frequency and phase, learn and
    /// subtract the periodic patterns, fuse attitude and run the internal model.
    class Pipeline
    {
    public:
        explicit Pipeline(PipelineConfig config = {});

        /// Feeds one sample; returns the outputs of the grid ticks it completes.
        std::vector<PipelineOutput> ingest(const TimedSample& sample);

        [[nodiscard]] PipelineSnapshot snapshot() const;
        [[nodiscard]] const PipelineCounters& counters() const { return counters_; }
        [[nodiscard]] const PipelineConfig& config() const { return config_; }
        [[nodiscard]] const FrequencyTracker& frequency_tracker() const { return freq_; }
        [[nodiscard]] const PatternSet& patterns() const { return patterns_; }
        [[nodiscard]] bool patterns_ready() const { return patterns_ready_; }

    private:
        struct StackEntry
        {
            double phi = 0.0;
            Vector6d y = Vector6d::Zero();
            friend bool operator==(const StackEntry&, const StackEntry&) = default;
        };
        struct RawEntry
        {
            double t = 0.0;
            Vector6d y = Vector6d::Zero();
        };

        PipelineOutput process_tick(std::int64_t index, double t, const Vector3d& accel, const Vector3d& gyro, double t_emit);
        void apply_aux_until(double t);
        void refit();
        void correct_phase(double f);
        [[nodiscard]] double current_frequency() const;

        PipelineConfig config_;
        LinearResampler accel_rs_;
        LinearResampler gyro_rs_;
        bool grid_set_ = false;
        std::map<std::int64_t, std::pair<std::optional<LinearResampler::Tick>, std::optional<LinearResampler::Tick>>> pending_;
        std::int64_t last_tick_ = -1;
        std::map<Channel, double> last_t_;
        std::deque<TimedSample> aux_;

        FrequencyTracker freq_;
        PhaseState phase_;
        bool phase_started_ = false;
        MemoryStack<StackEntry> stack_;
        std::deque<RawEntry> window_;
        PatternSet patterns_;
        bool patterns_ready_ = false;
        Butterworth2<Vector3d> lp_accel_;
        Butterworth2<Vector3d> lp_gyro_;
        AttitudeEkf attitude_;
        InternalEkf internal_;
        PipelineCounters counters_;
    };

    /// Feeds a whole log (stably sorted by time) and collects the outputs.
    std::vector<PipelineOutput> run_pipeline(Pipeline& pipeline, std::vector<TimedSample> log);
} // namespace flapest
