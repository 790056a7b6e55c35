// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <bit>
#include <complex>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace flapest
{
    /// Iterative radix-2 Cooley-Tukey DFT of a real sequence.
    ///
    /// X[k] = sum_n x[n] exp(-2 pi i k n / N). Throws ParameterError unless the
    /// length is a power of two >= 2.
    template <typename Scalar>
    std::vector<std::complex<Scalar>> fft_radix2(std::span<const Scalar> samples)
    {
        const std::size_t n = samples.size();
        if (n < 2 || !std::has_single_bit(n))
            throw ParameterError("fft_radix2: length must be a power of two >= 2");

        std::vector<std::complex<Scalar>> x(n);
        const int bits = std::countr_zero(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            std::size_t r = 0;
            for (int b = 0; b < bits; ++b)
                r |= ((i >> b) & 1U) << (bits - 1 - b);
            x[r] = std::complex<Scalar>(samples[i], Scalar(0));
        }

        for (std::size_t len = 2; len <= n; len <<= 1)
        {
            const std::size_t half = len / 2;
            // Twiddles are evaluated directly rather than by recurrence to keep
            // the rounding error at O(eps log n).
            for (std::size_t j = 0; j < half; ++j)
            {
                const Scalar angle = -kTwoPi<Scalar> * Scalar(j) / Scalar(len);
                const std::complex<Scalar> w(std::cos(angle), std::sin(angle));
                for (std::size_t start = 0; start < n; start += len)
                {
                    const auto u = x[start + j];
                    const auto v = w * x[start + j + half];
                    x[start + j] = u + v;
                    x[start + j + half] = u - v;
                }
            }
        }
        return x;
    }

    /// One-sided magnitude spectrum of a real window.
    struct Spectrum
    {
        VectorXd bin_freqs;
        VectorXd magnitudes;
        int window_len = 0;
        double fs = 0.0;

        [[nodiscard]] double bin_spacing() const { return fs / window_len; }
    };

    /// Mean-removed, optionally Hann-windowed magnitude spectrum.
    Spectrum compute_spectrum(std::span<const double> samples, double fs, bool hann = true);

    struct Peak
    {
        double freq = 0.0;
        double magnitude = 0.0;
    };

    /// Largest in-band bin, refined by a parabola through it and its neighbours.
    ///
    /// Ties go to the lower frequency. Throws ParameterError if no bin lies in
    /// [f_lo, f_hi] and DataError if every in-band magnitude is zero.
    Peak band_peak(const Spectrum& spectrum, double f_lo = 1.0, double f_hi = 8.0);

    /// Spread of the peak: second central moment of the normalised magnitudes
    /// within +-2 bins of the peak (and inside the band), floored at
    /// bin_spacing^2 / 12.
    double estimate_variance(const Spectrum& spectrum, double peak_freq, double f_lo = 1.0, double f_hi = 8.0);

    /// Gaussian belief over the flapping frequency.
    struct FrequencyEstimate
    {
        double f_freq = 0.0; ///< Hz
        double var_freq = 0.0; ///< Hz^2
        double t = 0.0;

        friend bool operator==(const FrequencyEstimate&, const FrequencyEstimate&) = default;
    };

    /// Product-of-Gaussians fusion of two independent estimates.
    FrequencyEstimate fuse_gaussian(const FrequencyEstimate& a, const FrequencyEstimate& b);

    struct FrequencyTrackerConfig
    {
        double fs = 200.0;
        int window_len = 512;
        int hop = 32;
        double f_lo = 1.0;
        double f_hi = 8.0;
        double smoothing_window = 1.0; ///< seconds of fused estimates in the quadratic fit
        bool record_spectrogram = false;
    };

    /// Sliding-window spectral tracker over the a_z and omega_y streams.
    ///
    /// Every hop the two spectra are reduced to Gaussian peak estimates, fused,
    /// and the fused sequence is smoothed by a precision-weighted quadratic
    /// least-squares fit over the last smoothing_window seconds.
    class FrequencyTracker
    {
    public:
        struct SpectrogramRow
        {
            double t = 0.0;
            Spectrum accel_z;
            Spectrum gyro_y;
        };

        explicit FrequencyTracker(FrequencyTrackerConfig config = {});

        /// Feeds one grid tick; returns a new smoothed estimate when a hop completes.
        std::optional<FrequencyEstimate> push(double t, double accel_z, double gyro_y);

        [[nodiscard]] const std::optional<FrequencyEstimate>& current() const { return current_; }
        [[nodiscard]] const std::optional<FrequencyEstimate>& last_fused() const { return last_fused_; }
        [[nodiscard]] const std::vector<SpectrogramRow>& spectrogram() const { return spectrogram_; }
        [[nodiscard]] const FrequencyTrackerConfig& config() const { return config_; }

    private:
        FrequencyEstimate smooth(const FrequencyEstimate& fused);

        FrequencyTrackerConfig config_;
        std::deque<double> accel_z_;
        std::deque<double> gyro_y_;
        int since_last_ = 0;
        std::deque<FrequencyEstimate> history_;
        std::optional<FrequencyEstimate> current_;
        std::optional<FrequencyEstimate> last_fused_;
        std::vector<SpectrogramRow> spectrogram_;
    };
} // namespace flapest
