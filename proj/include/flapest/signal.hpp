// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace flapest
{
    /// Resamples one channel onto the grid t_first + k/fs by linear interpolation.
    ///
    /// The grid spans [t_first, t_last]; nothing is extrapolated past the last
    /// sample. Throws DataError for fewer than two samples or decreasing
    /// timestamps, ParameterError for fs <= 0.
    std::vector<TimedSample> resample_uniform(std::span<const TimedSample> stream, double fs);

    /// Streaming form of resample_uniform for a single vector channel.
    ///
    /// Grid ticks are t0 + k/fs with t0 the first pushed timestamp. A tick is
    /// emitted as soon as a sample at or after it has been pushed.
    class LinearResampler
    {
    public:
        struct Tick
        {
            std::int64_t index = 0;
            double t = 0.0;
            Vector3d value = Vector3d::Zero();
        };

        explicit LinearResampler(double fs);

        /// Pushes a sample; returns the grid ticks it completes. Throws DataError
        /// if t precedes the previous sample.
        std::vector<Tick> push(double t, const Vector3d& value);

        [[nodiscard]] double fs() const { return fs_; }
        [[nodiscard]] bool started() const { return last_.has_value(); }
        [[nodiscard]] double grid_origin() const { return t0_; }
        [[nodiscard]] std::int64_t next_index() const { return next_index_; }

        /// Fixes the grid origin before the first sample (used to share one grid
        /// across channels).
        void set_grid_origin(double t0);

    private:
        double fs_;
        double t0_ = 0.0;
        bool origin_set_ = false;
        std::int64_t next_index_ = 0;
        std::optional<std::pair<double, Vector3d>> last_;
    };

    /// Second-order Butterworth low-pass, one biquad from the bilinear transform
    /// with frequency prewarping. Direct form II transposed, zero initial state.
    template <typename Sample>
    class Butterworth2
    {
    public:
        Butterworth2(double cutoff_hz, double fs)
        {
            if (!(fs > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 * fs))
                throw ParameterError("butterworth: cutoff must satisfy 0 < fc < fs/2");
            const double k = std::tan(kPi * cutoff_hz / fs);
            const double k2 = k * k;
            const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
            b0_ = k2 * norm;
            b1_ = 2.0 * b0_;
            b2_ = b0_;
            a1_ = 2.0 * (k2 - 1.0) * norm;
            a2_ = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
            reset();
        }

        Sample operator()(const Sample& x)
        {
            Sample y = b0_ * x + z1_;
            z1_ = b1_ * x - a1_ * y + z2_;
            z2_ = b2_ * x - a2_ * y;
            return y;
        }

        void reset()
        {
            if constexpr (std::is_arithmetic_v<Sample>)
            {
                z1_ = Sample(0);
                z2_ = Sample(0);
            }
            else
            {
                z1_ = Sample::Zero();
                z2_ = Sample::Zero();
            }
        }

        [[nodiscard]] double b0() const { return b0_; }
        [[nodiscard]] double b1() const { return b1_; }
        [[nodiscard]] double b2() const { return b2_; }
        [[nodiscard]] double a1() const { return a1_; }
        [[nodiscard]] double a2() const { return a2_; }

    private:
        double b0_, b1_, b2_, a1_, a2_;
        Sample z1_, z2_;
    };

    /// Filters a whole uniform sequence from a zero initial state.
    VectorXd butterworth2_lowpass(const VectorXd& signal, double cutoff_hz, double fs);

    /// Mean over one period centered at each sample (offline only).
    ///
    /// The signal is treated as its piecewise-linear interpolant, so the window
    /// covers exactly one period even when period*fs is not an integer. Near the
    /// ends the window shrinks symmetrically.
    VectorXd centered_cycle_average(const VectorXd& signal, double period, double fs);

    /// Mean over the period ending at each sample; half a period behind the
    /// centered average. The window is clipped at the start of the sequence.
    VectorXd trailing_cycle_average(const VectorXd& signal, double period, double fs);

    /// Bounded FIFO; pushing onto a full stack evicts the oldest entry.
    template <typename T>
    class MemoryStack
    {
    public:
        explicit MemoryStack(std::size_t capacity) : capacity_(capacity)
        {
            if (capacity_ == 0)
                throw ParameterError("memory stack capacity must be positive");
        }

        void push(T entry)
        {
            if (entries_.size() == capacity_)
                entries_.pop_front();
            entries_.push_back(std::move(entry));
        }

        /// Changes the capacity, evicting the oldest entries if needed.
        void set_capacity(std::size_t capacity)
        {
            if (capacity == 0)
                throw ParameterError("memory stack capacity must be positive");
            capacity_ = capacity;
            while (entries_.size() > capacity_)
                entries_.pop_front();
        }

        void clear() { entries_.clear(); }

        [[nodiscard]] std::size_t size() const { return entries_.size(); }
        [[nodiscard]] std::size_t capacity() const { return capacity_; }
        [[nodiscard]] bool full() const { return entries_.size() == capacity_; }
        [[nodiscard]] bool empty() const { return entries_.empty(); }
        [[nodiscard]] const T& operator[](std::size_t i) const { return entries_[i]; }
        [[nodiscard]] auto begin() const { return entries_.begin(); }
        [[nodiscard]] auto end() const { return entries_.end(); }

        friend bool operator==(const MemoryStack&, const MemoryStack&) = default;

    private:
        std::size_t capacity_;
        std::deque<T> entries_;
    };
} // namespace flapest
