// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <span>

namespace flapest
{
    /// Flapping phase with its correction parameters.
    struct PhaseState
    {
        double phi = 0.0; ///< [0, 2pi)
        double t_last = 0.0;
        double phi0 = 0.0;
        double k_cc = 0.1; ///< (0, 1]
        double lower = -kPi / 4.0; ///< <= 0
        double upper = kPi / 4.0; ///< >= 0

        /// Throws ParameterError when the gain or bounds are inconsistent.
        void validate() const;

        friend bool operator==(const PhaseState&, const PhaseState&) = default;
    };

    PhaseState make_phase_state(double t0, double phi0 = 0.0, double k_cc = 0.1, double lower = -kPi / 4.0, double upper = kPi / 4.0);

    /// Dead-reckons the phase at frequency f (Hz) up to t_curr.
    ///
    /// Throws DataError if t_curr precedes t_last; the input state is unchanged.
    PhaseState advance(const PhaseState& state, double t_curr, double f);

    /// R(k) = sum_i s(i)^T s_hat(i+k) for k in [-max_lag, max_lag], with
    /// out-of-range terms contributing zero. Rows are grid samples, columns the
    /// selected signals. Index max_lag of the result holds lag zero.
    ///
    /// Throws DataError when the two windows are not on the same grid.
    VectorXd cross_correlation(const Eigen::Ref<const MatrixXd>& s, const Eigen::Ref<const MatrixXd>& s_hat, int max_lag);

    /// Lag (in samples) of the largest correlation; ties go to the smallest |k|,
    /// then to the negative side.
    int argmax_lag(const VectorXd& r_cc);

    /// Phase increment k_cc * clamp((2 pi f / fs) * argmax_k R(k), lower, upper).
    double phase_correction(const PhaseState& state, const VectorXd& r_cc, double f_freq, double fs);

    /// Applies phase_correction and wraps.
    PhaseState correct(const PhaseState& state, const VectorXd& r_cc, double f_freq, double fs);
} // namespace flapest
