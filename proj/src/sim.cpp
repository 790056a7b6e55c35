// SPDX-License-Identifier: Apache-2.0
#include "flapest/sim.hpp"

#include "flapest/attitude_ekf.hpp"
#include "flapest/signal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <random>

namespace flapest
{
    void SimConfig::validate() const
    {
        aero.validate();
        if (!(f_flap > 0.0) || !(airspeed > 0.0))
            throw ParameterError("sim: flapping frequency and airspeed must be positive");
        if (!(dt > 0.0) || dt > 1.0 / (50.0 * f_flap))
            throw ParameterError("sim: dt must be positive and give at least 50 steps per flap cycle");
        if (!(imu_rate > 0.0) || !(mag_rate > 0.0) || !(gps_rate > 0.0))
            throw ParameterError("sim: sensor rates must be positive");
        if (!(jitter >= 0.0) || jitter >= 0.5 / std::max({imu_rate, mag_rate, gps_rate}))
            throw ParameterError("sim: jitter must be non-negative and below half a sample period");
        for (double n : {accel_noise, gyro_noise, mag_noise, gps_pos_noise, gps_vel_noise, roll_sigma})
            if (!(n >= 0.0))
                throw ParameterError("sim: noise levels must be non-negative");
        if (!(roll_freq > 0.0) || !(roll_damping > 0.0))
            throw ParameterError("sim: roll disturbance frequency and damping must be positive");
        for (const auto& g : gusts)
            if (!(g.duration > 0.0) || !g.wind.allFinite())
                throw ParameterError("sim: gust events need a positive duration and finite wind");
    }

    Vector3d wind_at(const SimConfig& config, double t)
    {
        Vector3d w = config.wind;
        for (const auto& g : config.gusts)
        {
            const double s = (t - g.t_start) / g.duration;
            if (s > 0.0 && s < 1.0)
                w += 0.5 * (1.0 - std::cos(kTwoPi<double> * s)) * g.wind;
        }
        return w;
    }

    double flap_phase(const SimConfig& config, double t)
    {
        return config.phase0 + kTwoPi<double> * config.f_flap * t;
    }

    AeroSample aero_sample(const SimConfig& config, double C_Lt, const LongState& x, double t)
    {
        const AeroConfig& a = config.aero;
        const Vector3d wi = wind_at(config, t);
        const double ch = std::cos(config.heading);
        const double sh = std::sin(config.heading);
        const double w_fwd = ch * wi.x() + sh * wi.y();
        const double w_up = wi.z();
        const double c = std::cos(x[4]);
        const double s = std::sin(x[4]);
        const double ua = x[2] - (c * w_fwd - s * w_up);
        const double wa = x[3] - (s * w_fwd + c * w_up);

        AeroSample out;
        out.V = std::hypot(ua, wa);
        if (!(out.V > 1e-9))
            return out;
        out.alpha = std::atan2(-wa, ua);
        const double Q = 0.5 * a.rho * out.V * out.V;
        const double k = kTwoPi<double> * config.f_flap * a.chord / out.V;
        const auto [F1, G1] = theodorsen(k);
        const double kh = k * a.h0;
        const double phi = flap_phase(config, t);
        const double sp = std::sin(phi);
        out.C_L = a.C_L_alpha * out.alpha + config.C_L_osc * std::sin(phi + config.phi_L);
        out.C_T = a.C_Th * kh * kh * sp * (G1 * sp - F1 * std::cos(phi)) + out.alpha * out.C_L;
        out.C_D = drag_coeff(out.C_L, a.C_D0, a.A);

        const double qs = Q * a.S;
        const double lift = qs * (out.C_L + C_Lt);
        const double axial = qs * (out.C_T - out.C_D - config.tail_drag);
        const double ca = std::cos(out.alpha);
        const double sa = std::sin(out.alpha);
        out.force_body = Vector3d(lift * sa + axial * ca, 0.0, lift * ca - axial * sa);
        out.moment = qs * (out.C_L * a.l_w + C_Lt * a.l_t) * ca;
        return out;
    }

    LongState derivatives(const SimConfig& config, double C_Lt, const LongState& x, double t)
    {
        const AeroSample as = aero_sample(config, C_Lt, x, t);
        const AeroConfig& a = config.aero;
        const double c = std::cos(x[4]);
        const double s = std::sin(x[4]);
        const double u = x[2], w = x[3], q = x[5];
        LongState d;
        d << c * u + s * w, -s * u + c * w, as.force_body.x() / a.m + a.g * s - q * w, as.force_body.z() / a.m - a.g * c + q * u, q,
            as.moment / a.I_p;
        return d;
    }

    namespace
    {
        LongState rk4(const SimConfig& config, double C_Lt, const LongState& x, double t, double h)
        {
            const LongState k1 = derivatives(config, C_Lt, x, t);
            const LongState k2 = derivatives(config, C_Lt, x + 0.5 * h * k1, t + 0.5 * h);
            const LongState k3 = derivatives(config, C_Lt, x + 0.5 * h * k2, t + 0.5 * h);
            const LongState k4 = derivatives(config, C_Lt, x + h * k3, t + h);
            LongState next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!next.allFinite() || std::abs(next[2]) > 100.0)
                throw NumericError("sim: state diverged");
            return next;
        }

        template <int N, typename Residual>
        Eigen::Matrix<double, N, 1> newton(Eigen::Matrix<double, N, 1> z, Residual&& residual, const char* what)
        {
            using Vec = Eigen::Matrix<double, N, 1>;
            using Mat = Eigen::Matrix<double, N, N>;
            Vec r = residual(z);
            for (int iter = 0; iter < 60 && r.norm() > 1e-12; ++iter)
            {
                Mat j;
                for (int i = 0; i < N; ++i)
                {
                    const double h = 1e-7 * std::max(1.0, std::abs(z[i]));
                    Vec zp = z;
                    zp[i] += h;
                    Vec zm = z;
                    zm[i] -= h;
                    j.col(i) = (residual(zp) - residual(zm)) / (2.0 * h);
                }
                Vec dz = j.fullPivLu().solve(-r);
                // damped step: halve until the residual does not grow
                double lambda = 1.0;
                Vec zn = z + dz;
                Vec rn = residual(zn);
                while (rn.norm() > r.norm() && lambda > 1e-4)
                {
                    lambda *= 0.5;
                    zn = z + lambda * dz;
                    rn = residual(zn);
                }
                if (rn.norm() >= r.norm())
                    break;
                z = zn;
                r = rn;
            }
            if (!(r.norm() < 1e-8))
                throw NumericError(std::string(what) + ": trim did not converge");
            return z;
        }

        int steps_per_cycle(const SimConfig& config)
        {
            return std::max(50, static_cast<int>(std::lround(1.0 / (config.f_flap * config.dt))));
        }
    } // namespace

    LongState step(const SimConfig& config, double C_Lt, const LongState& x, double t, double dt)
    {
        if (!(dt > 0.0) || dt > 1.0 / (50.0 * config.f_flap) + 1e-15)
            throw ParameterError("sim step: dt must give at least 50 steps per flap cycle");
        return rk4(config, C_Lt, x, t, dt);
    }

    TrimResult trim_static(const SimConfig& config)
    {
        config.validate();
        SimConfig quiet = config;
        quiet.C_L_osc = 0.0;
        quiet.gusts.clear();
        quiet.wind.setZero();
        const double V = config.airspeed;
        constexpr int kPhases = 64;

        auto state_of = [&](const Eigen::Vector3d& z) {
            LongState x;
            x << 0.0, 0.0, V * std::cos(z[0]), -V * std::sin(z[0]), z[1], 0.0;
            return x;
        };
        auto residual = [&](const Eigen::Vector3d& z) {
            Eigen::Vector3d r = Eigen::Vector3d::Zero();
            for (int i = 0; i < kPhases; ++i)
            {
                const double t = (static_cast<double>(i) / kPhases - config.phase0 / kTwoPi<double>) / config.f_flap;
                const LongState d = derivatives(quiet, z[2], state_of(z), t);
                r += Eigen::Vector3d(d[2], d[3], d[5]);
            }
            return Eigen::Vector3d(r / kPhases);
        };

        const AeroConfig& a = config.aero;
        const double q = 0.5 * a.rho * V * V;
        const double alpha0 = a.m * a.g / (q * a.S * std::max(a.C_L_alpha, 1e-3));
        Eigen::Vector3d z(alpha0, -alpha0, -a.C_L_alpha * alpha0 * a.l_w / a.l_t);
        z = newton<3>(z, residual, "static trim");

        TrimResult out;
        out.x0 = state_of(z);
        out.C_Lt = z[2];
        out.alpha_bar = z[0];
        out.theta_bar = z[1];
        out.periodic = false;
        return out;
    }

    TrimResult trim_periodic(const SimConfig& config)
    {
        const TrimResult guess = trim_static(config);
        SimConfig calm = config;
        calm.gusts.clear();
        calm.wind.setZero();
        const int n = steps_per_cycle(config);
        const double h = 1.0 / (config.f_flap * n);

        using Vec5 = Eigen::Matrix<double, 5, 1>;
        auto residual = [&](const Vec5& z) {
            LongState x;
            x << 0.0, 0.0, z[0], z[1], z[2], z[3];
            double v_sum = 0.0;
            for (int i = 0; i < n; ++i)
            {
                v_sum += aero_sample(calm, z[4], x, i * h).V;
                x = rk4(calm, z[4], x, i * h, h);
            }
            Vec5 r;
            r << x[2] - z[0], x[3] - z[1], x[4] - z[2], x[5] - z[3], v_sum / n - config.airspeed;
            return r;
        };
        Vec5 z;
        z << guess.x0[2], guess.x0[3], guess.x0[4], guess.x0[5], guess.C_Lt;
        z = newton<5>(z, residual, "periodic trim");

        TrimResult out;
        out.x0 << 0.0, 0.0, z[0], z[1], z[2], z[3];
        out.C_Lt = z[4];
        out.periodic = true;
        LongState x = out.x0;
        for (int i = 0; i < n; ++i)
        {
            out.alpha_bar += aero_sample(calm, out.C_Lt, x, i * h).alpha / n;
            out.theta_bar += x[4] / n;
            x = rk4(calm, out.C_Lt, x, i * h, h);
        }
        return out;
    }

    Quaterniond TruthRecord::attitude() const
    {
        return from_euler_zyx(roll, theta, yaw);
    }

    std::pair<Vector3d, Vector3d> ideal_imu(const SimConfig& config, double C_Lt, const LongState& x, double t, double roll, double roll_rate)
    {
        const AeroSample as = aero_sample(config, C_Lt, x, t);
        const Vector3d f_long = as.force_body / config.aero.m;
        const Matrix3d rx = Eigen::AngleAxisd(roll, Vector3d::UnitX()).toRotationMatrix();
        const Vector3d gyro(roll_rate, x[5] * std::cos(roll), -x[5] * std::sin(roll));
        return {rx.transpose() * f_long, gyro};
    }

    namespace
    {
        struct Stream
        {
            double rate;
            long index = 0;
            double next = 0.0;
        };

        Matrix3d attitude_matrix(const SimConfig& config, double theta, double roll)
        {
            return from_euler_zyx(roll, theta, config.heading).toRotationMatrix();
        }

        Vector3d inertial(const SimConfig& config, double along, double up)
        {
            return {std::cos(config.heading) * along, std::sin(config.heading) * along, up};
        }
    } // namespace

    SimOutput run(const SimConfig& config, double duration)
    {
        config.validate();
        if (!(duration >= 0.0))
            throw ParameterError("sim: duration must be non-negative");
        SimOutput out;
        out.trim = trim_periodic(config);
        const double C_Lt = out.trim.C_Lt;
        const long n_steps = std::lround(duration / config.dt);
        if (n_steps == 0)
            return out;

        std::mt19937_64 rng(config.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> jitter(-config.jitter, config.jitter);
        auto noise3 = [&](double sigma) { return Vector3d(sigma * normal(rng), sigma * normal(rng), sigma * normal(rng)); };
        auto schedule = [&](Stream& s) {
            const double nominal = static_cast<double>(s.index) / s.rate;
            s.next = std::max(0.0, nominal + (config.jitter > 0.0 ? jitter(rng) : 0.0));
            ++s.index;
        };

        Stream imu{config.imu_rate}, mag{config.mag_rate}, gps{config.gps_rate};
        schedule(imu);
        schedule(mag);
        schedule(gps);
        const Vector3d m_ref = mag_reference(config.mag_declination, config.mag_inclination);

        const double wn = kTwoPi<double> * config.roll_freq;
        const double zeta = config.roll_damping;
        const double roll_psd = 4.0 * zeta * wn * wn * wn * config.roll_sigma * config.roll_sigma;
        const double lateral_x = -std::sin(config.heading);
        const double lateral_y = std::cos(config.heading);

        LongState x = out.trim.x0;
        double roll = 0.0, roll_rate = 0.0;
        out.truth.reserve(static_cast<std::size_t>(n_steps));

        for (long n = 0; n < n_steps; ++n)
        {
            const double t = static_cast<double>(n) * config.dt;
            const AeroSample as = aero_sample(config, C_Lt, x, t);
            const LongState d = derivatives(config, C_Lt, x, t);
            const auto [acc, gyr] = ideal_imu(config, C_Lt, x, t, roll, roll_rate);

            TruthRecord tr;
            tr.t = t;
            tr.phase = flap_phase(config, t);
            tr.u = x[2];
            tr.w = x[3];
            tr.theta = x[4];
            tr.q = x[5];
            tr.roll = roll;
            tr.roll_rate = roll_rate;
            tr.yaw = config.heading;
            tr.position = inertial(config, x[0], x[1]);
            tr.velocity = inertial(config, d[0], d[1]);
            tr.alpha = as.alpha;
            tr.V = as.V;
            tr.C_L = as.C_L;
            tr.C_T = as.C_T;
            tr.C_D = as.C_D;
            tr.accel = acc;
            tr.gyro = gyr;
            out.truth.push_back(tr);

            const LongState x_next = rk4(config, C_Lt, x, t, config.dt);
            const Vector3d wi = wind_at(config, t);
            const double lateral = lateral_x * wi.x() + lateral_y * wi.y();
            const double roll_acc = -2.0 * zeta * wn * roll_rate - wn * wn * roll + config.gust_roll_gain * lateral;
            const double roll_next = roll + roll_rate * config.dt;
            const double roll_rate_next = roll_rate + roll_acc * config.dt + std::sqrt(roll_psd * config.dt) * normal(rng);

            std::vector<TimedSample> events;
            const double t_end = std::min(t + config.dt, duration);
            auto state_at = [&](double ts, LongState& xs, double& r, double& rr) {
                const double h = ts - t;
                xs = h > 0.0 ? rk4(config, C_Lt, x, t, h) : x;
                const double s = h / config.dt;
                r = roll + s * (roll_next - roll);
                rr = roll_rate + s * (roll_rate_next - roll_rate);
            };
            while (imu.next < t_end)
            {
                LongState xs;
                double r, rr;
                state_at(imu.next, xs, r, rr);
                const auto [a_s, g_s] = ideal_imu(config, C_Lt, xs, imu.next, r, rr);
                events.push_back({imu.next, Channel::accel, a_s + config.accel_bias + noise3(config.accel_noise)});
                events.push_back({imu.next, Channel::gyro, g_s + config.gyro_bias + noise3(config.gyro_noise)});
                schedule(imu);
            }
            while (mag.next < t_end)
            {
                LongState xs;
                double r, rr;
                state_at(mag.next, xs, r, rr);
                const Matrix3d rot = attitude_matrix(config, xs[4], r);
                events.push_back({mag.next, Channel::mag, rot.transpose() * m_ref + noise3(config.mag_noise)});
                schedule(mag);
            }
            while (gps.next < t_end)
            {
                LongState xs;
                double r, rr;
                state_at(gps.next, xs, r, rr);
                const LongState ds = derivatives(config, C_Lt, xs, gps.next);
                events.push_back({gps.next, Channel::gps_pos, inertial(config, xs[0], xs[1]) + noise3(config.gps_pos_noise)});
                events.push_back({gps.next, Channel::gps_vel, inertial(config, ds[0], ds[1]) + noise3(config.gps_vel_noise)});
                schedule(gps);
            }
            std::stable_sort(events.begin(), events.end(), [](const TimedSample& a, const TimedSample& b) { return a.t < b.t; });
            out.log.insert(out.log.end(), events.begin(), events.end());

            x = x_next;
            roll = roll_next;
            roll_rate = roll_rate_next;
        }

        // True oscillatory components: signal minus its centered cycle average.
        const double fs = 1.0 / config.dt;
        const double period = 1.0 / config.f_flap;
        const auto n = static_cast<Eigen::Index>(out.truth.size());
        for (int axis = 0; axis < 3; ++axis)
        {
            VectorXd a(n), g(n);
            for (Eigen::Index i = 0; i < n; ++i)
            {
                a[i] = out.truth[static_cast<std::size_t>(i)].accel[axis];
                g[i] = out.truth[static_cast<std::size_t>(i)].gyro[axis];
            }
            const VectorXd a_avg = centered_cycle_average(a, period, fs);
            const VectorXd g_avg = centered_cycle_average(g, period, fs);
            for (Eigen::Index i = 0; i < n; ++i)
            {
                out.truth[static_cast<std::size_t>(i)].accel_osc[axis] = a[i] - a_avg[i];
                out.truth[static_cast<std::size_t>(i)].gyro_osc[axis] = g[i] - g_avg[i];
            }
        }
        return out;
    }

    AeroConfig estimator_aero(const SimConfig& config, const TrimResult& trim)
    {
        SimConfig calm = config;
        calm.gusts.clear();
        calm.wind.setZero();
        const int n = steps_per_cycle(config);
        const double h = 1.0 / (config.f_flap * n);

        double theta_bar = 0.0;
        Eigen::Vector2d v_bar = Eigen::Vector2d::Zero();
        std::complex<double> az_fund = 0.0, q_fund = 0.0;
        LongState x = trim.x0;
        for (int i = 0; i < n; ++i)
        {
            const double t = i * h;
            const LongState d = derivatives(calm, trim.C_Lt, x, t);
            const AeroSample as = aero_sample(calm, trim.C_Lt, x, t);
            const std::complex<double> e = std::polar(1.0, -flap_phase(calm, t));
            theta_bar += x[4] / n;
            v_bar += Eigen::Vector2d(d[0], d[1]) / n;
            az_fund += 2.0 / n * (as.force_body.z() / config.aero.m) * e;
            q_fund += 2.0 / n * x[5] * e;
            x = rk4(calm, trim.C_Lt, x, t, h);
        }

        // The estimator sees the mean velocity in the mean body frame.
        const double c = std::cos(theta_bar), s = std::sin(theta_bar);
        const double u = c * v_bar.x() - s * v_bar.y();
        const double w = s * v_bar.x() + c * v_bar.y();
        const double alpha = std::atan2(-w, u);
        AeroConfig est = config.aero;
        const FlightCondition cond = make_condition(est, v_bar.norm(), alpha, config.f_flap);
        OscillationParams osc;
        osc.C_L_osc = est.m * std::abs(az_fund) / (cond.Q * est.S);
        osc.q_osc = std::abs(q_fund);

        // Mean aero force balances gravity; express it in the estimator's wind frame.
        const double path = theta_bar + alpha;
        const Vector3d f_w(-std::sin(path) * est.m * est.g, 0.0, std::cos(path) * est.m * est.g);
        const double qs = cond.Q * est.S;
        if (std::abs(alpha) > 1e-3)
            est.C_L_alpha = f_w.z() / (qs * alpha);
        est.C_D0 = 0.0;
        const AeroAverages avg = cycle_avg_closed(make_condition(est, cond.V_b, alpha, config.f_flap), osc, est);
        est.C_D0 = avg.C_T - avg.C_D - f_w.x() / qs;
        return est;
    }
} // namespace flapest
