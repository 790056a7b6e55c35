// SPDX-License-Identifier: Apache-2.0
#include "flapest/phase_tracker.hpp"

#include <algorithm>

namespace flapest
{
    void PhaseState::validate() const
    {
        if (!(k_cc > 0.0 && k_cc <= 1.0))
            throw ParameterError("phase tracker: k_cc must lie in (0, 1]");
        if (!(lower <= 0.0 && upper >= 0.0))
            throw ParameterError("phase tracker: bounds must bracket zero");
    }

    PhaseState make_phase_state(double t0, double phi0, double k_cc, double lower, double upper)
    {
        PhaseState s;
        s.phi0 = wrap_two_pi(phi0);
        s.phi = s.phi0;
        s.t_last = t0;
        s.k_cc = k_cc;
        s.lower = lower;
        s.upper = upper;
        s.validate();
        return s;
    }

    PhaseState advance(const PhaseState& state, double t_curr, double f)
    {
        if (t_curr < state.t_last)
            throw DataError("phase advance: time went backwards");
        PhaseState next = state;
        next.phi = wrap_two_pi(state.phi + kTwoPi<double> * f * (t_curr - state.t_last));
        next.t_last = t_curr;
        return next;
    }

    VectorXd cross_correlation(const Eigen::Ref<const MatrixXd>& s, const Eigen::Ref<const MatrixXd>& s_hat, int max_lag)
    {
        if (s.rows() != s_hat.rows() || s.cols() != s_hat.cols())
            throw DataError("cross_correlation: windows are not on the same grid");
        if (max_lag < 0)
            throw ParameterError("cross_correlation: max_lag must be non-negative");
        const auto n = s.rows();
        VectorXd r = VectorXd::Zero(2 * max_lag + 1);
        for (int k = -max_lag; k <= max_lag; ++k)
        {
            const Eigen::Index i0 = std::max<Eigen::Index>(0, -k);
            const Eigen::Index i1 = std::min<Eigen::Index>(n, n - k);
            double acc = 0.0;
            for (Eigen::Index i = i0; i < i1; ++i)
                acc += s.row(i).dot(s_hat.row(i + k));
            r[k + max_lag] = acc;
        }
        return r;
    }

    int argmax_lag(const VectorXd& r_cc)
    {
        const int max_lag = static_cast<int>(r_cc.size() - 1) / 2;
        int best = 0;
        double best_val = r_cc[max_lag];
        for (int d = 1; d <= max_lag; ++d)
        {
            for (const int k : {-d, d})
            {
                const double v = r_cc[k + max_lag];
                if (v > best_val)
                {
                    best_val = v;
                    best = k;
                }
            }
        }
        return best;
    }

    double phase_correction(const PhaseState& state, const VectorXd& r_cc, double f_freq, double fs)
    {
        if (r_cc.size() == 0 || r_cc.size() % 2 == 0)
            throw DataError("phase correction: correlation must have odd length");
        const double phi_d = kTwoPi<double> * f_freq / fs * static_cast<double>(argmax_lag(r_cc));
        return state.k_cc * std::clamp(phi_d, state.lower, state.upper);
    }

    PhaseState correct(const PhaseState& state, const VectorXd& r_cc, double f_freq, double fs)
    {
        PhaseState next = state;
        next.phi = wrap_two_pi(state.phi + phase_correction(state, r_cc, f_freq, fs));
        return next;
    }
} // namespace flapest
