// SPDX-License-Identifier: Apache-2.0
#include "flapest/aero.hpp"

namespace flapest
{
    void AeroConfig::validate() const
    {
        if (!(m > 0.0) || !(I_p > 0.0) || !(S > 0.0) || !(A > 0.0) || !(rho > 0.0) || !(g > 0.0) || !(chord > 0.0))
            throw ParameterError("aero: m, I_p, S, A, rho, g and chord must be positive");
        if (!(h0 >= 0.0) || !(C_Th >= 0.0))
            throw ParameterError("aero: h0 and C_Th must be non-negative");
    }

    FlightCondition make_condition(const AeroConfig& config, double V_b, double alpha_bar, double f)
    {
        if (!(V_b > 0.0))
            throw ParameterError("flight condition: airspeed must be positive");
        if (!(f > 0.0))
            throw ParameterError("flight condition: flapping frequency must be positive");
        FlightCondition c;
        c.V_b = V_b;
        c.alpha_bar = alpha_bar;
        c.f = f;
        c.Q = 0.5 * config.rho * V_b * V_b;
        c.k_red = kTwoPi<double> * f * config.chord / V_b;
        return c;
    }

    double lift_coeff(const AeroConfig& config, const FlightCondition& cond, const OscillationParams& osc, double phi)
    {
        return config.C_L_alpha * cond.alpha_bar + osc.C_L_osc * std::sin(phi + osc.phi_L);
    }

    double thrust_coeff(const AeroConfig& config, const FlightCondition& cond, const OscillationParams& osc, double phi)
    {
        const auto [F1, G1] = theodorsen(cond.k_red);
        const double kh = cond.k_red * config.h0;
        const double s = std::sin(phi);
        const double flap = config.C_Th * kh * kh * s * (G1 * s - F1 * std::cos(phi));
        const double alpha = cond.alpha_bar + osc.alpha_osc * std::sin(phi + osc.phi_alpha);
        return flap + alpha * lift_coeff(config, cond, osc, phi);
    }

    double drag_coeff(const AeroConfig& config, double C_L)
    {
        return drag_coeff(C_L, config.C_D0, config.A);
    }

    PhaseLag phase_lag(const OscillationParams& osc, const FlightCondition& cond, const AeroConfig& config)
    {
        const double a = osc.C_L_osc * cond.Q * config.S / (config.m * cond.V_b);
        const double r = std::hypot(osc.q_osc, a);
        if (!(r > 0.0))
            return {0.0, false};
        return {std::acos(std::clamp(std::abs(osc.q_osc) / r, 0.0, 1.0)), true};
    }

    AeroAverages cycle_avg_closed(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config)
    {
        const auto [F1, G1] = theodorsen(cond.k_red);
        const double kh = cond.k_red * config.h0;
        const double cl = config.C_L_alpha * cond.alpha_bar;
        AeroAverages avg;
        avg.C_L = cl;
        avg.C_T = 0.5 * config.C_Th * kh * kh * G1 + cond.alpha_bar * cl + osc.C_L_osc * osc.q_osc / (2.0 * kTwoPi<double> * cond.f);
        avg.C_D = config.C_D0 + (cl * cl + 0.5 * osc.C_L_osc * osc.C_L_osc) / config.A;
        return avg;
    }

    OscillationTrace integrate_oscillation(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config, int n_points,
                                           int substeps)
    {
        if (n_points < 2 || substeps < 1)
            throw ParameterError("integrate_oscillation: need n_points >= 2 and substeps >= 1");
        const double omega = kTwoPi<double> * cond.f;
        const double a = osc.C_L_osc * cond.Q * config.S / (config.m * cond.V_b);
        const double b = osc.C_L_osc * cond.Q * config.S * config.l_w / config.I_p;
        const double h = 1.0 / (cond.f * n_points * substeps);

        // state: q, theta, alpha
        auto deriv = [&](double t, const Vector3d& x) {
            const double s = std::sin(omega * t + osc.phi_L);
            return Vector3d(b * s, x[0], -a * s - x[0]);
        };

        auto run = [&](const Vector3d& x0) {
            OscillationTrace tr;
            tr.phi.resize(n_points);
            tr.q.resize(n_points);
            tr.theta.resize(n_points);
            tr.alpha.resize(n_points);
            Vector3d x = x0;
            double t = 0.0;
            for (int i = 0; i < n_points; ++i)
            {
                tr.phi[i] = kTwoPi<double> * i / n_points;
                tr.q[i] = x[0];
                tr.theta[i] = x[1];
                tr.alpha[i] = x[2];
                for (int s = 0; s < substeps; ++s)
                {
                    const Vector3d k1 = deriv(t, x);
                    const Vector3d k2 = deriv(t + 0.5 * h, x + 0.5 * h * k1);
                    const Vector3d k3 = deriv(t + 0.5 * h, x + 0.5 * h * k2);
                    const Vector3d k4 = deriv(t + h, x + h * k3);
                    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    t += h;
                }
            }
            if (!x.allFinite())
                throw NumericError("integrate_oscillation: integration diverged");
            return tr;
        };

        // The system is linear, so each constant shifts its trace rigidly once
        // the traces it feeds on are zero-mean.
        Vector3d x0 = Vector3d::Zero();
        OscillationTrace tr = run(x0);
        x0[0] = -tr.q.mean();
        tr = run(x0);
        x0[1] = -tr.theta.mean();
        x0[2] = -tr.alpha.mean();
        return run(x0);
    }

    AeroAverages cycle_avg_numeric(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config, int n_points)
    {
        const OscillationTrace tr = integrate_oscillation(cond, osc, config, n_points);
        const auto [F1, G1] = theodorsen(cond.k_red);
        const double kh = cond.k_red * config.h0;
        AeroAverages avg;
        for (int i = 0; i < n_points; ++i)
        {
            const double phi = tr.phi[i];
            const double cl = lift_coeff(config, cond, osc, phi);
            const double s = std::sin(phi);
            const double ct = config.C_Th * kh * kh * s * (G1 * s - F1 * std::cos(phi)) + (cond.alpha_bar + tr.alpha[i]) * cl;
            const double cd = drag_coeff(config, cl);
            const double tv = tr.alpha[i] + tr.theta[i];
            const double c = std::cos(tv);
            const double sn = std::sin(tv);
            avg.C_L += cl * c - (ct - cd) * sn;
            avg.C_T += ct * c + cl * sn;
            avg.C_D += cd * c;
        }
        avg.C_L /= n_points;
        avg.C_T /= n_points;
        avg.C_D /= n_points;
        return avg;
    }

    Vector3d wind_force(const AeroAverages& coeffs, double Q, double S)
    {
        return Q * S * Vector3d(coeffs.C_T - coeffs.C_D, 0.0, coeffs.C_L);
    }
} // namespace flapest
