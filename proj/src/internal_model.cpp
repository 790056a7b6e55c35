// SPDX-License-Identifier: Apache-2.0
#include "flapest/internal_model.hpp"

#include "flapest/attitude_ekf.hpp"

#include <Eigen/Dense>

namespace flapest
{
    void InternalNoise::validate() const
    {
        if (!(accel_psd > 0.0) || !(gps_pos > 0.0) || !(gps_vel > 0.0) || !(gate_sigma > 0.0) || !(init_pos > 0.0) || !(init_vel > 0.0))
            throw ParameterError("internal noise: all settings must be positive");
    }

    Matrix3d wind_to_body(double alpha)
    {
        return Eigen::AngleAxisd(alpha, Vector3d::UnitY()).toRotationMatrix();
    }

    AirData air_data(const Matrix3d& R_BI, const Vector3d& v_inertial, const Vector3d& wind)
    {
        const Vector3d vb = R_BI.transpose() * (v_inertial - wind);
        return {vb.norm(), std::atan2(-vb.z(), vb.x())};
    }

    InternalState internal_predict(const InternalState& state, const Matrix3d& R_BI, const Matrix3d& R_WB, const Vector3d& f_W, double dt,
                                   const AeroConfig& config, const InternalNoise& noise)
    {
        if (!(dt > 0.0 && dt <= 0.1))
            throw ParameterError("internal predict: dt must lie in (0, 0.1]");
        InternalState next = state;
        const Vector3d accel = -config.g * Vector3d::UnitZ() + R_BI * (R_WB * f_W) / config.m;
        next.v_bar = state.v_bar + accel * dt;
        next.p_bar = state.p_bar + next.v_bar * dt;

        Matrix6d f = Matrix6d::Identity();
        f.block<3, 3>(0, 3).diagonal().setConstant(dt);
        Matrix6d q = Matrix6d::Zero();
        const double s = noise.accel_psd;
        q.block<3, 3>(0, 0).diagonal().setConstant(s * dt * dt * dt / 3.0);
        q.block<3, 3>(0, 3).diagonal().setConstant(s * dt * dt / 2.0);
        q.block<3, 3>(3, 0).diagonal().setConstant(s * dt * dt / 2.0);
        q.block<3, 3>(3, 3).diagonal().setConstant(s * dt);
        next.P = f * state.P * f.transpose() + q;
        next.P = 0.5 * (next.P + next.P.transpose()).eval();
        return next;
    }

    std::optional<InternalState> internal_update(const InternalState& state, const std::optional<Vector3d>& gps_pos,
                                                 const std::optional<Vector3d>& gps_vel, const InternalNoise& noise)
    {
        const int m = (gps_pos ? 3 : 0) + (gps_vel ? 3 : 0);
        if (m == 0)
            return state;
        MatrixXd h = MatrixXd::Zero(m, 6);
        VectorXd y(m);
        VectorXd r(m);
        int row = 0;
        const Vector6d x = (Vector6d() << state.p_bar, state.v_bar).finished();
        if (gps_pos)
        {
            h.block<3, 3>(row, 0).setIdentity();
            y.segment<3>(row) = *gps_pos - state.p_bar;
            r.segment<3>(row).setConstant(noise.gps_pos * noise.gps_pos);
            row += 3;
        }
        if (gps_vel)
        {
            h.block<3, 3>(row, 3).setIdentity();
            y.segment<3>(row) = *gps_vel - state.v_bar;
            r.segment<3>(row).setConstant(noise.gps_vel * noise.gps_vel);
        }
        if (!y.allFinite())
            return std::nullopt;
        const MatrixXd s = h * state.P * h.transpose() + MatrixXd(r.asDiagonal());
        for (int i = 0; i < m; ++i)
            if (y[i] * y[i] > noise.gate_sigma * noise.gate_sigma * s(i, i))
                return std::nullopt;

        const MatrixXd k = state.P * h.transpose() * s.ldlt().solve(MatrixXd::Identity(m, m));
        const Vector6d nx = x + k * y;
        const Matrix6d ikh = Matrix6d::Identity() - k * h;
        InternalState next;
        next.p_bar = nx.head<3>();
        next.v_bar = nx.tail<3>();
        next.P = ikh * state.P * ikh.transpose() + k * r.asDiagonal() * k.transpose();
        next.P = 0.5 * (next.P + next.P.transpose()).eval();
        return next;
    }

    OscillationEstimate estimate_oscillation_params(const PeriodicPattern& gyro_y, const PeriodicPattern& accel_z, const FlightCondition& cond,
                                                    const AeroConfig& config)
    {
        OscillationEstimate out;
        if (!gyro_y.fitted() || !accel_z.fitted())
            return out;
        const Harmonic hq = harmonic(gyro_y, 1);
        const Harmonic ha = harmonic(accel_z, 1);
        OscillationParams& p = out.params;
        p.q_osc = hq.amplitude;
        p.C_L_osc = config.m * ha.amplitude / (cond.Q * config.S);
        p.phi_L = wrap_two_pi(ha.phase);
        const PhaseLag lag = phase_lag(p, cond, config);
        p.phi_d = lag.phi_d;
        const double omega = kTwoPi<double> * cond.f;
        const double a = p.C_L_osc * cond.Q * config.S / (config.m * cond.V_b);
        p.alpha_osc = std::hypot(a, p.q_osc) / omega;
        p.phi_alpha = wrap_two_pi(p.phi_L + p.phi_d);
        out.q_phase = wrap_two_pi(hq.phase);
        out.accel_phase = p.phi_L;
        out.available = true;
        return out;
    }

    ReconstructedState reconstruct_state(const InternalState& internal, const Quaterniond& attitude, const PatternSet& patterns, double phi, double f)
    {
        Vector3d dtheta, dv, dp;
        for (int i = 0; i < 3; ++i)
        {
            dv[i] = integrate_pattern(patterns[i], phi, f, 1);
            dp[i] = integrate_pattern(patterns[i], phi, f, 2);
            dtheta[i] = integrate_pattern(patterns[3 + i], phi, f, 1);
        }
        ReconstructedState out;
        out.q = (attitude * quat_exp<double>(dtheta)).normalized();
        const Matrix3d r = attitude.toRotationMatrix();
        out.v = internal.v_bar + r * dv;
        out.p = internal.p_bar + r * dp;
        return out;
    }

    InternalEkf::InternalEkf(AeroConfig config, InternalNoise noise) : config_(config), noise_(noise)
    {
        config_.validate();
        noise_.validate();
    }

    void InternalEkf::predict(const Matrix3d& R_BI, const Vector3d& f_W, double dt)
    {
        if (!initialized_)
            return;
        const AirData ad = air_data(R_BI, state_.v_bar);
        state_ = internal_predict(state_, R_BI, wind_to_body(ad.alpha), f_W, dt, config_, noise_);
    }

    bool InternalEkf::update(const std::optional<Vector3d>& gps_pos, const std::optional<Vector3d>& gps_vel)
    {
        if (!initialized_)
        {
            if (gps_pos)
                pending_pos_ = gps_pos;
            if (gps_vel)
                pending_vel_ = gps_vel;
            if (pending_pos_ && pending_vel_)
            {
                state_.p_bar = *pending_pos_;
                state_.v_bar = *pending_vel_;
                state_.P.setZero();
                state_.P.diagonal() << Vector3d::Constant(noise_.init_pos * noise_.init_pos), Vector3d::Constant(noise_.init_vel * noise_.init_vel);
                initialized_ = true;
            }
            return false;
        }
        if (auto next = internal_update(state_, gps_pos, gps_vel, noise_))
        {
            state_ = *next;
            ++counters_.updates;
            return true;
        }
        ++counters_.gated;
        return false;
    }
} // namespace flapest
