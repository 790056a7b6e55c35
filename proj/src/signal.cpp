// SPDX-License-Identifier: Apache-2.0
#include "flapest/signal.hpp"

#include <algorithm>
#include <array>

namespace flapest
{
    namespace
    {
        constexpr std::array<std::string_view, 5> kChannelNames = {"accel", "gyro", "mag", "gps_pos", "gps_vel"};

        void check_rate(double fs)
        {
            if (!(fs > 0.0) || !std::isfinite(fs))
                throw ParameterError("sampling rate must be positive");
        }

        // Cumulative integral of the piecewise-linear interpolant of a uniform
        // sequence, evaluated at fractional sample positions.
        class LinearIntegral
        {
        public:
            explicit LinearIntegral(const VectorXd& x) : x_(x), cum_(x.size())
            {
                if (x.size() == 0)
                    return;
                cum_[0] = 0.0;
                for (Eigen::Index i = 1; i < x.size(); ++i)
                    cum_[i] = cum_[i - 1] + 0.5 * (x[i - 1] + x[i]);
            }

            // Integral from position 0 to position s (in samples), 0 <= s <= n-1.
            [[nodiscard]] double at(double s) const
            {
                const Eigen::Index last = x_.size() - 1;
                s = std::clamp(s, 0.0, static_cast<double>(last));
                auto i = static_cast<Eigen::Index>(std::floor(s));
                if (i >= last)
                    return cum_[last];
                const double frac = s - static_cast<double>(i);
                const double xs = x_[i] + frac * (x_[i + 1] - x_[i]);
                return cum_[i] + 0.5 * frac * (x_[i] + xs);
            }

            // Mean over [a, b] in sample positions; the point value when a == b.
            [[nodiscard]] double mean(double a, double b) const
            {
                if (b - a < 1e-12)
                {
                    auto i = static_cast<Eigen::Index>(std::llround(a));
                    return x_[std::clamp<Eigen::Index>(i, 0, x_.size() - 1)];
                }
                return (at(b) - at(a)) / (b - a);
            }

        private:
            const VectorXd& x_;
            VectorXd cum_;
        };

        double period_in_samples(double period, double fs)
        {
            check_rate(fs);
            if (!(period > 0.0) || std::ceil(period * fs) < 1.0)
                throw ParameterError("cycle average window must span at least one sample");
            return period * fs;
        }
    } // namespace

    std::string_view to_string(Channel channel)
    {
        return kChannelNames[static_cast<std::size_t>(channel)];
    }

    Channel channel_from_string(std::string_view name)
    {
        for (std::size_t i = 0; i < kChannelNames.size(); ++i)
            if (kChannelNames[i] == name)
                return static_cast<Channel>(i);
        throw DataError("unknown channel '" + std::string(name) + "'");
    }

    LinearResampler::LinearResampler(double fs) : fs_(fs)
    {
        check_rate(fs);
    }

    void LinearResampler::set_grid_origin(double t0)
    {
        if (last_)
            throw ParameterError("grid origin must be set before the first sample");
        t0_ = t0;
        origin_set_ = true;
    }

    std::vector<LinearResampler::Tick> LinearResampler::push(double t, const Vector3d& value)
    {
        if (!std::isfinite(t) || !value.allFinite())
            throw DataError("non-finite sample");
        std::vector<Tick> ticks;
        if (!last_)
        {
            if (!origin_set_)
            {
                t0_ = t;
                origin_set_ = true;
            }
            // Ticks before the first sample cannot be interpolated; skip them.
            while (t0_ + static_cast<double>(next_index_) / fs_ < t)
                ++next_index_;
            const double tk = t0_ + static_cast<double>(next_index_) / fs_;
            if (tk == t)
            {
                ticks.push_back({next_index_, tk, value});
                ++next_index_;
            }
            last_ = {t, value};
            return ticks;
        }

        const auto& [t_prev, v_prev] = *last_;
        if (t < t_prev)
            throw DataError("non-monotone timestamps in resampler input");
        for (;;)
        {
            const double tk = t0_ + static_cast<double>(next_index_) / fs_;
            if (tk > t)
                break;
            const double span = t - t_prev;
            const double w = span > 0.0 ? (tk - t_prev) / span : 1.0;
            ticks.push_back({next_index_, tk, v_prev + w * (value - v_prev)});
            ++next_index_;
        }
        last_ = {t, value};
        return ticks;
    }

    std::vector<TimedSample> resample_uniform(std::span<const TimedSample> stream, double fs)
    {
        check_rate(fs);
        if (stream.size() < 2)
            throw DataError("resample_uniform needs at least two samples");
        for (std::size_t i = 1; i < stream.size(); ++i)
            if (stream[i].t < stream[i - 1].t)
                throw DataError("resample_uniform: timestamps are not monotone");

        LinearResampler resampler(fs);
        std::vector<TimedSample> out;
        out.reserve(static_cast<std::size_t>((stream.back().t - stream.front().t) * fs) + 2);
        for (const auto& s : stream)
            for (const auto& tick : resampler.push(s.t, s.value))
                out.push_back({tick.t, s.channel, tick.value});
        return out;
    }

    VectorXd butterworth2_lowpass(const VectorXd& signal, double cutoff_hz, double fs)
    {
        Butterworth2<double> filter(cutoff_hz, fs);
        VectorXd out(signal.size());
        for (Eigen::Index i = 0; i < signal.size(); ++i)
            out[i] = filter(signal[i]);
        return out;
    }

    VectorXd centered_cycle_average(const VectorXd& signal, double period, double fs)
    {
        const double n = period_in_samples(period, fs);
        if (signal.size() == 0)
            return signal;
        const LinearIntegral integral(signal);
        const double last = static_cast<double>(signal.size() - 1);
        VectorXd out(signal.size());
        for (Eigen::Index i = 0; i < signal.size(); ++i)
        {
            const double s = static_cast<double>(i);
            const double half = std::min({0.5 * n, s, last - s});
            out[i] = integral.mean(s - half, s + half);
        }
        return out;
    }

    VectorXd trailing_cycle_average(const VectorXd& signal, double period, double fs)
    {
        const double n = period_in_samples(period, fs);
        if (signal.size() == 0)
            return signal;
        const LinearIntegral integral(signal);
        VectorXd out(signal.size());
        for (Eigen::Index i = 0; i < signal.size(); ++i)
        {
            const double s = static_cast<double>(i);
            out[i] = integral.mean(std::max(0.0, s - n), s);
        }
        return out;
    }
} // namespace flapest
