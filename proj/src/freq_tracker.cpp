// SPDX-License-Identifier: Apache-2.0
#include "flapest/freq_tracker.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>

namespace flapest
{
    Spectrum compute_spectrum(std::span<const double> samples, double fs, bool hann)
    {
        if (!(fs > 0.0))
            throw ParameterError("compute_spectrum: fs must be positive");
        const std::size_t n = samples.size();
        const double mean = n ? std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n) : 0.0;
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            const double w = hann ? 0.5 - 0.5 * std::cos(kTwoPi<double> * static_cast<double>(i) / static_cast<double>(n)) : 1.0;
            x[i] = (samples[i] - mean) * w;
        }
        const auto bins = fft_radix2<double>(x);

        Spectrum s;
        s.window_len = static_cast<int>(n);
        s.fs = fs;
        const auto half = static_cast<Eigen::Index>(n / 2 + 1);
        s.bin_freqs.resize(half);
        s.magnitudes.resize(half);
        for (Eigen::Index k = 0; k < half; ++k)
        {
            s.bin_freqs[k] = static_cast<double>(k) * fs / static_cast<double>(n);
            s.magnitudes[k] = std::abs(bins[static_cast<std::size_t>(k)]);
        }
        return s;
    }

    namespace
    {
        std::pair<Eigen::Index, Eigen::Index> band_bins(const Spectrum& s, double f_lo, double f_hi)
        {
            if (!(f_lo <= f_hi))
                throw ParameterError("band: f_lo must not exceed f_hi");
            const double df = s.bin_spacing();
            const auto lo = static_cast<Eigen::Index>(std::ceil(f_lo / df - 1e-9));
            const auto hi = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(f_hi / df + 1e-9)), s.magnitudes.size() - 1);
            if (lo > hi || lo < 0)
                throw ParameterError("band does not intersect the spectrum support");
            return {lo, hi};
        }
    } // namespace

    Peak band_peak(const Spectrum& spectrum, double f_lo, double f_hi)
    {
        const auto [lo, hi] = band_bins(spectrum, f_lo, f_hi);
        Eigen::Index best = lo;
        for (Eigen::Index k = lo + 1; k <= hi; ++k)
            if (spectrum.magnitudes[k] > spectrum.magnitudes[best])
                best = k;
        const double peak = spectrum.magnitudes[best];
        if (!(peak > 0.0))
            throw DataError("band_peak: no spectral peak in band");

        double offset = 0.0;
        if (best > 0 && best + 1 < spectrum.magnitudes.size())
        {
            const double a = spectrum.magnitudes[best - 1];
            const double c = spectrum.magnitudes[best + 1];
            const double denom = a - 2.0 * peak + c;
            if (denom < 0.0)
                offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
        }
        const double df = spectrum.bin_spacing();
        const double freq = (static_cast<double>(best) + offset) * df;
        const double mag = peak - 0.25 * (spectrum.magnitudes[std::max<Eigen::Index>(best - 1, 0)] -
                                          spectrum.magnitudes[std::min<Eigen::Index>(best + 1, spectrum.magnitudes.size() - 1)]) *
                                      offset;
        return {freq, mag};
    }

    double estimate_variance(const Spectrum& spectrum, double peak_freq, double f_lo, double f_hi)
    {
        const auto [lo, hi] = band_bins(spectrum, f_lo, f_hi);
        const double df = spectrum.bin_spacing();
        const auto center = static_cast<Eigen::Index>(std::llround(peak_freq / df));
        const Eigen::Index a = std::max(lo, center - 2);
        const Eigen::Index b = std::min(hi, center + 2);
        const double floor_var = df * df / 12.0;
        if (a > b)
            return floor_var;

        double total = 0.0;
        double first = 0.0;
        for (Eigen::Index k = a; k <= b; ++k)
        {
            total += spectrum.magnitudes[k];
            first += spectrum.magnitudes[k] * spectrum.bin_freqs[k];
        }
        if (!(total > 0.0))
            return floor_var;
        const double mean = first / total;
        double second = 0.0;
        for (Eigen::Index k = a; k <= b; ++k)
        {
            const double d = spectrum.bin_freqs[k] - mean;
            second += spectrum.magnitudes[k] * d * d;
        }
        return std::max(second / total, floor_var);
    }

    FrequencyEstimate fuse_gaussian(const FrequencyEstimate& a, const FrequencyEstimate& b)
    {
        if (!(a.var_freq > 0.0) || !(b.var_freq > 0.0))
            throw ParameterError("fuse_gaussian: variances must be positive");
        const double pa = 1.0 / a.var_freq;
        const double pb = 1.0 / b.var_freq;
        const double var = 1.0 / (pa + pb);
        return {var * (pa * a.f_freq + pb * b.f_freq), var, std::max(a.t, b.t)};
    }

    FrequencyTracker::FrequencyTracker(FrequencyTrackerConfig config) : config_(config)
    {
        if (config_.window_len < 2 || !std::has_single_bit(static_cast<unsigned>(config_.window_len)))
            throw ParameterError("frequency tracker: window length must be a power of two");
        if (config_.hop < 1)
            throw ParameterError("frequency tracker: hop must be positive");
        if (!(config_.f_lo > 0.0) || !(config_.f_hi > config_.f_lo) || !(config_.f_hi < 0.5 * config_.fs))
            throw ParameterError("frequency tracker: band must lie strictly below Nyquist");
    }

    std::optional<FrequencyEstimate> FrequencyTracker::push(double t, double accel_z, double gyro_y)
    {
        const auto n = static_cast<std::size_t>(config_.window_len);
        accel_z_.push_back(accel_z);
        gyro_y_.push_back(gyro_y);
        if (accel_z_.size() > n)
        {
            accel_z_.pop_front();
            gyro_y_.pop_front();
        }
        if (accel_z_.size() < n)
            return std::nullopt;
        if (since_last_ > 0 && ++since_last_ <= config_.hop)
            return std::nullopt;
        since_last_ = 1;

        const std::vector<double> az(accel_z_.begin(), accel_z_.end());
        const std::vector<double> wy(gyro_y_.begin(), gyro_y_.end());
        auto spec_a = compute_spectrum(az, config_.fs);
        auto spec_w = compute_spectrum(wy, config_.fs);

        std::vector<FrequencyEstimate> parts;
        for (const Spectrum* s : {&spec_a, &spec_w})
        {
            try
            {
                const Peak p = band_peak(*s, config_.f_lo, config_.f_hi);
                parts.push_back({p.freq, estimate_variance(*s, p.freq, config_.f_lo, config_.f_hi), t});
            }
            catch (const DataError&)
            {
                // flat channel: contributes nothing
            }
        }
        if (config_.record_spectrogram)
            spectrogram_.push_back({t, std::move(spec_a), std::move(spec_w)});
        if (parts.empty())
            return std::nullopt;

        FrequencyEstimate fused = parts.size() == 2 ? fuse_gaussian(parts[0], parts[1]) : parts[0];
        fused.t = t;
        last_fused_ = fused;
        current_ = smooth(fused);
        return current_;
    }

    FrequencyEstimate FrequencyTracker::smooth(const FrequencyEstimate& fused)
    {
        history_.push_back(fused);
        while (!history_.empty() && history_.front().t < fused.t - config_.smoothing_window)
            history_.pop_front();

        double f = fused.f_freq;
        if (history_.size() >= 4)
        {
            // Weighted quadratic fit in time relative to now, evaluated at now.
            Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
            Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
            for (const auto& e : history_)
            {
                const double dt = e.t - fused.t;
                const Eigen::Vector3d basis(1.0, dt, dt * dt);
                const double w = 1.0 / e.var_freq;
                normal += w * basis * basis.transpose();
                rhs += w * e.f_freq * basis;
            }
            const Eigen::LDLT<Eigen::Matrix3d> ldlt(normal);
            const Eigen::Vector3d coeffs = ldlt.solve(rhs);
            if (ldlt.info() == Eigen::Success && coeffs.allFinite())
                f = coeffs[0];
        }
        else
        {
            double wsum = 0.0;
            double fsum = 0.0;
            for (const auto& e : history_)
            {
                wsum += 1.0 / e.var_freq;
                fsum += e.f_freq / e.var_freq;
            }
            f = fsum / wsum;
        }
        return {std::clamp(f, config_.f_lo, config_.f_hi), fused.var_freq, fused.t};
    }
} // namespace flapest
