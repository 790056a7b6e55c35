// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <complex>

namespace flapest
{
    /// Longitudinal airframe constants.
    struct AeroConfig
    {
        double m = 1.1;
        double I_p = 0.012;
        double l_w = 0.02; ///< signed; positive puts the wing CoP behind the CoM
        double l_t = 0.42; ///< signed tail arm
        double S = 0.3;
        double C_L_alpha = 5.0;
        double C_D0 = 0.04;
        double A = 25.0;
        double C_Th = 5.0;
        double h0 = 0.1;
        double rho = 1.225;
        double g = 9.81;
        double chord = 1.0; ///< reference length in k_red = 2 pi f chord / V_b

        /// Throws ParameterError for non-positive masses, areas or A.
        void validate() const;

        friend bool operator==(const AeroConfig&, const AeroConfig&) = default;
    };

    struct FlightCondition
    {
        double V_b = 8.0;
        double alpha_bar = 0.0;
        double f = 5.0;
        double Q = 0.0;
        double k_red = 0.0;
    };

    /// Fills Q and k_red from the airspeed. Throws ParameterError if V_b <= 0 or f <= 0.
    FlightCondition make_condition(const AeroConfig& config, double V_b, double alpha_bar, double f);

    struct OscillationParams
    {
        double C_L_osc = 0.0;
        double phi_L = 0.0;
        double alpha_osc = 0.0;
        double phi_alpha = 0.0;
        double q_osc = 0.0;
        double phi_d = 0.0;

        friend bool operator==(const OscillationParams&, const OscillationParams&) = default;
    };

    /// Real and imaginary parts of the Theodorsen function.
    template <typename Scalar>
    struct Theodorsen
    {
        Scalar F1;
        Scalar G1;
    };

    /// Two-pole rational approximation
    /// C(k) = 1 - 0.165 / (1 - 0.0455 i / k) - 0.335 / (1 - 0.3 i / k).
    template <typename Scalar>
    Theodorsen<Scalar> theodorsen(Scalar k_red)
    {
        if (!(k_red > Scalar(0)))
            throw ParameterError("theodorsen: reduced frequency must be positive");
        const std::complex<Scalar> i(Scalar(0), Scalar(1));
        const std::complex<Scalar> c = Scalar(1) - Scalar(0.165) / (Scalar(1) - Scalar(0.0455) * i / k_red) -
                                       Scalar(0.335) / (Scalar(1) - Scalar(0.3) * i / k_red);
        return {c.real(), c.imag()};
    }

    template <typename Scalar>
    Scalar drag_coeff(Scalar C_L, Scalar C_D0, Scalar A)
    {
        return C_D0 + C_L * C_L / A;
    }

    /// C_L = C_L_alpha * alpha_bar + C_L_osc * sin(phi + phi_L).
    double lift_coeff(const AeroConfig& config, const FlightCondition& cond, const OscillationParams& osc, double phi);

    /// Flapping thrust plus the lift tilted by the instantaneous AoA
    /// alpha_bar + alpha_osc * sin(phi + phi_alpha).
    double thrust_coeff(const AeroConfig& config, const FlightCondition& cond, const OscillationParams& osc, double phi);

    double drag_coeff(const AeroConfig& config, double C_L);

    struct PhaseLag
    {
        double phi_d = 0.0;
        bool defined = true;
    };

    /// Phase between the AoA and lift oscillations, in [0, pi/2].
    PhaseLag phase_lag(const OscillationParams& osc, const FlightCondition& cond, const AeroConfig& config);

    struct AeroAverages
    {
        double C_L = 0.0;
        double C_T = 0.0;
        double C_D = 0.0;
    };

    /// Closed-form cycle averages of the coefficients projected on the mean
    /// velocity frame.
    AeroAverages cycle_avg_closed(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config);

    /// Pitch, AoA and flight-path oscillation over one cycle, sampled at n
    /// uniform phases starting at phi = 0.
    struct OscillationTrace
    {
        VectorXd phi;
        VectorXd q;
        VectorXd theta;
        VectorXd alpha;
        [[nodiscard]] VectorXd theta_v() const { return alpha + theta; }
    };

    /// Integrates the lift-driven oscillation ODEs over one cycle with RK4 and
    /// picks the integration constants that make every trace zero-mean.
    OscillationTrace integrate_oscillation(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config,
                                           int n_points = 256, int substeps = 16);

    /// Brute-force cycle averages: integrated oscillation plus trapezoidal
    /// quadrature of the projected coefficients over n_points phases.
    AeroAverages cycle_avg_numeric(const FlightCondition& cond, const OscillationParams& osc, const AeroConfig& config, int n_points = 256);

    /// Aerodynamic force in the wind frame, Q S [C_T - C_D, 0, C_L].
    Vector3d wind_force(const AeroAverages& coeffs, double Q, double S);
} // namespace flapest
