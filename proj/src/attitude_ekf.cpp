// SPDX-License-Identifier: Apache-2.0
#include "flapest/attitude_ekf.hpp"

#include <Eigen/Dense>

namespace flapest
{
    namespace
    {
        using Matrix36d = Eigen::Matrix<double, 3, 6>;
        using Matrix63d = Eigen::Matrix<double, 6, 3>;

        void symmetrize(Matrix6d& p)
        {
            p = 0.5 * (p + p.transpose()).eval();
        }

        AttitudeState inject(const AttitudeState& state, const Vector6d& dx, const Matrix6d& p)
        {
            AttitudeState next;
            next.q = (quat_exp<double>(dx.head<3>()) * state.q).normalized();
            next.b_g = state.b_g + dx.tail<3>();
            next.P = p;
            symmetrize(next.P);
            return next;
        }

        double heading_of(const Vector3d& v)
        {
            return std::atan2(v.y(), v.x());
        }
    } // namespace

    Vector3d euler_zyx(const Quaterniond& q)
    {
        const Matrix3d r = q.normalized().toRotationMatrix();
        const double roll = std::atan2(r(2, 1), r(2, 2));
        const double pitch = -std::asin(std::clamp(r(2, 0), -1.0, 1.0));
        const double yaw = std::atan2(r(1, 0), r(0, 0));
        return {roll, pitch, yaw};
    }

    Quaterniond from_euler_zyx(double roll, double pitch, double yaw)
    {
        return Quaterniond(Eigen::AngleAxisd(yaw, Vector3d::UnitZ()) * Eigen::AngleAxisd(pitch, Vector3d::UnitY()) *
                           Eigen::AngleAxisd(roll, Vector3d::UnitX()));
    }

    Vector2d tilt_from_accel(const Vector3d& f)
    {
        return {std::atan2(f.y(), f.z()), std::atan2(-f.x(), std::hypot(f.y(), f.z()))};
    }

    void AttitudeNoise::validate() const
    {
        if (!(gyro > 0.0) || !(accel > 0.0) || !(mag > 0.0) || !(bias_walk >= 0.0))
            throw ParameterError("attitude noise: gyro, accel and mag noise must be positive");
        if (!(gate_fraction > 0.0) || !(max_dyn_accel > 0.0) || !(g > 0.0))
            throw ParameterError("attitude noise: gate, clamp and g must be positive");
    }

    Vector3d mag_reference(double declination, double inclination)
    {
        return {std::cos(inclination) * std::cos(declination), std::cos(inclination) * std::sin(declination), -std::sin(inclination)};
    }

    AttitudeState predict(const AttitudeState& state, const Vector3d& omega, double dt, const AttitudeNoise& noise)
    {
        if (!(dt > 0.0 && dt <= 0.1))
            throw ParameterError("attitude predict: dt must lie in (0, 0.1]");
        if (!omega.allFinite())
            throw ParameterError("attitude predict: non-finite angular rate");
        const Matrix3d r = state.q.toRotationMatrix();
        AttitudeState next = state;
        next.q = (state.q * quat_exp<double>(Vector3d((omega - state.b_g) * dt))).normalized();

        Matrix6d phi = Matrix6d::Identity();
        phi.block<3, 3>(0, 3) = -r * dt;
        Matrix6d q = Matrix6d::Zero();
        q.block<3, 3>(0, 0).diagonal().setConstant(noise.gyro * noise.gyro * dt);
        q.block<3, 3>(3, 3).diagonal().setConstant(noise.bias_walk * noise.bias_walk * dt);
        next.P = phi * state.P * phi.transpose() + q;
        symmetrize(next.P);
        return next;
    }

    GravityEstimate split_gravity(const AttitudeState& state, const Vector3d& a_free, const Vector3d& a_dyn, const AttitudeNoise& noise)
    {
        Vector3d a = a_dyn;
        const double cap = noise.max_dyn_accel * noise.g;
        if (a.norm() > cap)
            a *= cap / a.norm();
        return {a_free - state.q.toRotationMatrix().transpose() * a, a};
    }

    std::optional<AttitudeState> update_accel(const AttitudeState& state, const Vector3d& a_free, const Vector3d& a_dyn, const AttitudeNoise& noise)
    {
        const GravityEstimate ge = split_gravity(state, a_free, a_dyn, noise);
        if (!ge.g_body.allFinite() || std::abs(ge.g_body.norm() - noise.g) > noise.gate_fraction * noise.g)
            return std::nullopt;

        const Matrix3d rt = state.q.toRotationMatrix().transpose();
        const Vector3d g_inertial(0.0, 0.0, noise.g);
        const Vector3d innovation = ge.g_body - rt * g_inertial;
        Matrix36d h = Matrix36d::Zero();
        h.block<3, 3>(0, 0) = rt * skew(g_inertial);
        const Matrix3d r = Matrix3d::Identity() * noise.accel * noise.accel;
        const Matrix3d s = h * state.P * h.transpose() + r;
        const Matrix63d k = state.P * h.transpose() * s.ldlt().solve(Matrix3d::Identity());
        const Matrix6d ikh = Matrix6d::Identity() - k * h;
        const Matrix6d p = ikh * state.P * ikh.transpose() + k * r * k.transpose();
        return inject(state, k * innovation, p);
    }

    std::optional<AttitudeState> update_mag(const AttitudeState& state, const Vector3d& m_raw, const Vector3d& m_ref, const AttitudeNoise& noise)
    {
        const double ref_h = m_ref.head<2>().norm();
        if (!(m_raw.norm() > 0.0) || !m_raw.allFinite() || std::atan2(std::abs(m_ref.z()), ref_h) > 85.0 * kPi / 180.0)
            return std::nullopt;
        const Vector3d m_i = state.q * m_raw.normalized();
        const double meas_h = m_i.head<2>().norm();
        if (std::atan2(std::abs(m_i.z()), meas_h) > 85.0 * kPi / 180.0)
            return std::nullopt;

        // A left error rotation about Z shifts the projected heading one for one.
        const double innovation = wrap_pi(heading_of(m_ref) - heading_of(m_i));
        Eigen::Matrix<double, 1, 6> h = Eigen::Matrix<double, 1, 6>::Zero();
        h(0, 2) = 1.0;
        const double r = noise.mag * noise.mag / (meas_h * meas_h);
        const double s = (h * state.P * h.transpose())(0, 0) + r;
        Vector6d k = state.P * h.transpose() / s;
        k[0] = 0.0;
        k[1] = 0.0;
        const Matrix6d ikh = Matrix6d::Identity() - k * h;
        const Matrix6d p = ikh * state.P * ikh.transpose() + r * k * k.transpose();
        return inject(state, k * innovation, p);
    }

    GpsAccelEstimator::GpsAccelEstimator(double cutoff_hz, double stale_after) : cutoff_(cutoff_hz), stale_after_(stale_after)
    {
        if (!(cutoff_ > 0.0) || !(stale_after_ > 0.0))
            throw ParameterError("gps accel: cutoff and staleness limit must be positive");
    }

    void GpsAccelEstimator::push(double t, const Vector3d& v)
    {
        if (last_)
        {
            const double dt = t - last_->first;
            if (!(dt > 0.0))
                return;
            const Vector3d raw = (v - last_->second) / dt;
            if (count_ == 1)
                filtered_ = raw;
            else
                filtered_ += (1.0 - std::exp(-kTwoPi<double> * cutoff_ * dt)) * (raw - filtered_);
        }
        last_ = {t, v};
        ++count_;
    }

    GpsAccelEstimator::Output GpsAccelEstimator::at(double t) const
    {
        if (count_ < 2 || t - last_->first > stale_after_)
            return {};
        return {filtered_, false};
    }

    AttitudeEkf::AttitudeEkf(AttitudeNoise noise, Vector3d m_ref) : noise_(noise), m_ref_(std::move(m_ref))
    {
        noise_.validate();
    }

    void AttitudeEkf::on_mag(double /*t*/, const Vector3d& m)
    {
        if (!initialized_)
        {
            pending_mag_ = m;
            return;
        }
        if (auto next = update_mag(state_, m, m_ref_, noise_))
        {
            state_ = *next;
            ++counters_.mag_updates;
        }
        else
        {
            ++counters_.mag_skipped;
        }
    }

    void AttitudeEkf::on_gps_velocity(double t, const Vector3d& v)
    {
        gps_.push(t, v);
    }

    void AttitudeEkf::step(double t, const Vector3d& gyro, const Vector3d& accel)
    {
        if (!initialized_)
        {
            const Vector2d tilt = tilt_from_accel(accel);
            double yaw = 0.0;
            if (pending_mag_ && pending_mag_->norm() > 0.0)
            {
                const Vector3d m_h = from_euler_zyx(tilt[0], tilt[1], 0.0) * *pending_mag_;
                yaw = wrap_pi(heading_of(m_ref_) - heading_of(m_h));
            }
            state_.q = from_euler_zyx(tilt[0], tilt[1], yaw);
            state_.b_g.setZero();
            state_.P.setZero();
            state_.P.diagonal() << noise_.init_tilt * noise_.init_tilt, noise_.init_tilt * noise_.init_tilt, noise_.init_yaw * noise_.init_yaw,
                Vector3d::Constant(noise_.init_bias * noise_.init_bias);
            t_last_ = t;
            initialized_ = true;
            return;
        }
        const double dt = t - t_last_;
        if (dt > 0.0)
            state_ = predict(state_, gyro, std::min(dt, 0.1), noise_);
        t_last_ = t;

        a_dyn_ = gps_.at(t).a_dyn;
        if (auto next = update_accel(state_, accel, a_dyn_, noise_))
        {
            state_ = *next;
            ++counters_.accel_updates;
        }
        else
        {
            ++counters_.accel_gated;
        }
    }

    ComplementaryFilter::ComplementaryFilter(double k_accel, double k_mag, Vector3d m_ref) : k_accel_(k_accel), k_mag_(k_mag), m_ref_(std::move(m_ref))
    {
        if (!(k_accel_ >= 0.0) || !(k_mag_ >= 0.0))
            throw ParameterError("complementary filter: gains must be non-negative");
    }

    void ComplementaryFilter::on_mag(double, const Vector3d& m)
    {
        mag_ = m;
    }

    void ComplementaryFilter::step(double t, const Vector3d& gyro, const Vector3d& accel)
    {
        if (!initialized_)
        {
            const Vector2d tilt = tilt_from_accel(accel);
            double yaw = 0.0;
            if (mag_)
                yaw = wrap_pi(heading_of(m_ref_) - heading_of(from_euler_zyx(tilt[0], tilt[1], 0.0) * *mag_));
            q_ = from_euler_zyx(tilt[0], tilt[1], yaw);
            t_last_ = t;
            initialized_ = true;
            return;
        }
        const double dt = t - t_last_;
        t_last_ = t;
        if (!(dt > 0.0))
            return;

        Vector3d correction = Vector3d::Zero();
        if (accel.norm() > 0.0)
        {
            const Vector3d up_pred = q_.conjugate() * Vector3d::UnitZ();
            correction += k_accel_ * accel.normalized().cross(up_pred);
        }
        if (mag_ && mag_->norm() > 0.0)
        {
            const Vector3d m_i = q_ * mag_->normalized();
            const double yaw_err = wrap_pi(heading_of(m_ref_) - heading_of(m_i));
            correction += k_mag_ * yaw_err * (q_.conjugate() * Vector3d::UnitZ());
        }
        q_ = (q_ * quat_exp<double>(Vector3d((gyro + correction) * dt))).normalized();
    }
} // namespace flapest
