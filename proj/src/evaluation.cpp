// SPDX-License-Identifier: Apache-2.0
#include "flapest/evaluation.hpp"

#include "flapest/freq_tracker.hpp"
#include "flapest/signal.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace flapest
{
    double band_power(const VectorXd& x, double fs, double f_center, double half_width, int segment)
    {
        if (x.size() < segment)
            throw DataError("band_power: signal shorter than one segment");
        const int hop = segment / 2;
        VectorXd acc;
        VectorXd freqs;
        int count = 0;
        for (Eigen::Index start = 0; start + segment <= x.size(); start += hop)
        {
            const VectorXd seg = x.segment(start, segment);
            const Spectrum s = compute_spectrum(std::span<const double>(seg.data(), static_cast<std::size_t>(seg.size())), fs);
            if (count == 0)
            {
                acc = VectorXd::Zero(s.magnitudes.size());
                freqs = s.bin_freqs;
            }
            acc += s.magnitudes.array().square().matrix();
            ++count;
        }
        double total = 0.0;
        for (Eigen::Index k = 0; k < freqs.size(); ++k)
            if (std::abs(freqs[k] - f_center) <= half_width)
                total += acc[k];
        return total / count;
    }

    int xcorr_lag(const VectorXd& a, const VectorXd& b, int max_lag)
    {
        if (a.size() != b.size())
            throw DataError("xcorr_lag: series lengths differ");
        const VectorXd da = (a.array() - a.mean()).matrix();
        const VectorXd db = (b.array() - b.mean()).matrix();
        MatrixXd s = da;
        MatrixXd s_hat = db;
        const VectorXd r = cross_correlation(s, s_hat, max_lag);
        Eigen::Index best = 0;
        r.maxCoeff(&best);
        return static_cast<int>(best) - max_lag;
    }

    TruthRecord truth_at(std::span<const TruthRecord> truth, double t)
    {
        if (truth.empty())
            throw DataError("truth_at: empty truth");
        if (t <= truth.front().t)
            return truth.front();
        if (t >= truth.back().t)
            return truth.back();
        const auto it = std::upper_bound(truth.begin(), truth.end(), t, [](double v, const TruthRecord& r) { return v < r.t; });
        const TruthRecord& b = *it;
        const TruthRecord& a = *(it - 1);
        const double s = (t - a.t) / (b.t - a.t);
        auto mix = [s](auto x, auto y) { return x + s * (y - x); };
        TruthRecord r = a;
        r.t = t;
        r.phase = mix(a.phase, b.phase);
        r.u = mix(a.u, b.u);
        r.w = mix(a.w, b.w);
        r.theta = mix(a.theta, b.theta);
        r.q = mix(a.q, b.q);
        r.roll = mix(a.roll, b.roll);
        r.roll_rate = mix(a.roll_rate, b.roll_rate);
        r.yaw = mix(a.yaw, b.yaw);
        r.position = mix(a.position, b.position);
        r.velocity = mix(a.velocity, b.velocity);
        r.alpha = mix(a.alpha, b.alpha);
        r.V = mix(a.V, b.V);
        r.C_L = mix(a.C_L, b.C_L);
        r.C_T = mix(a.C_T, b.C_T);
        r.C_D = mix(a.C_D, b.C_D);
        r.accel = mix(a.accel, b.accel);
        r.gyro = mix(a.gyro, b.gyro);
        r.accel_osc = mix(a.accel_osc, b.accel_osc);
        r.gyro_osc = mix(a.gyro_osc, b.gyro_osc);
        return r;
    }

    namespace
    {
        template <typename Filter>
        std::vector<Quaterniond> replay(Filter& filter, std::span<const double> t, std::span<const Vector3d> gyro, std::span<const Vector3d> accel,
                                        std::span<const TimedSample> log, bool use_gps)
        {
            if (t.size() != gyro.size() || t.size() != accel.size())
                throw DataError("attitude replay: input lengths differ");
            std::vector<TimedSample> aux;
            for (const auto& s : log)
                if (s.channel == Channel::mag || (use_gps && s.channel == Channel::gps_vel))
                    aux.push_back(s);
            std::stable_sort(aux.begin(), aux.end(), [](const TimedSample& a, const TimedSample& b) { return a.t < b.t; });
            std::vector<Quaterniond> out;
            out.reserve(t.size());
            std::size_t j = 0;
            for (std::size_t i = 0; i < t.size(); ++i)
            {
                for (; j < aux.size() && aux[j].t <= t[i]; ++j)
                {
                    if (aux[j].channel == Channel::mag)
                        filter.on_mag(aux[j].t, aux[j].value);
                    else if constexpr (requires { filter.on_gps_velocity(0.0, Vector3d()); })
                        filter.on_gps_velocity(aux[j].t, aux[j].value);
                }
                filter.step(t[i], gyro[i], accel[i]);
                if constexpr (requires { filter.state(); })
                    out.push_back(filter.state().q);
                else
                    out.push_back(filter.attitude());
            }
            return out;
        }

        std::vector<Vector3d> smooth_axes(std::span<const Vector3d> x, double period, double fs, bool centered)
        {
            const auto n = static_cast<Eigen::Index>(x.size());
            std::vector<Vector3d> out(x.size());
            for (int axis = 0; axis < 3; ++axis)
            {
                VectorXd v(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    v[i] = x[static_cast<std::size_t>(i)][axis];
                const VectorXd s = centered ? centered_cycle_average(v, period, fs) : trailing_cycle_average(v, period, fs);
                for (Eigen::Index i = 0; i < n; ++i)
                    out[static_cast<std::size_t>(i)][axis] = s[i];
            }
            return out;
        }

        double median_frequency(std::span<const PipelineOutput> outputs)
        {
            std::vector<double> f;
            for (const auto& o : outputs)
                if (o.freq_var > 0.0)
                    f.push_back(o.freq);
            if (f.empty())
                return outputs.empty() ? 5.0 : outputs.back().freq;
            std::nth_element(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(f.size() / 2), f.end());
            return f[f.size() / 2];
        }
    } // namespace

    std::vector<Quaterniond> run_attitude_ekf(std::span<const double> t, std::span<const Vector3d> gyro, std::span<const Vector3d> accel,
                                              std::span<const TimedSample> log, const AttitudeNoise& noise, const Vector3d& m_ref)
    {
        AttitudeEkf ekf(noise, m_ref);
        return replay(ekf, t, gyro, accel, log, true);
    }

    std::vector<Quaterniond> run_complementary(std::span<const double> t, std::span<const Vector3d> gyro, std::span<const Vector3d> accel,
                                               std::span<const TimedSample> log, const Vector3d& m_ref)
    {
        ComplementaryFilter cf(0.5, 0.5, m_ref);
        return replay(cf, t, gyro, accel, log, false);
    }

    std::vector<MethodTrack> attitude_methods(std::span<const PipelineOutput> outputs, std::span<const TimedSample> log, const PipelineConfig& config)
    {
        std::vector<double> t;
        std::vector<Vector3d> gyro, accel;
        MethodTrack proposed{"proposed", {}};
        for (const auto& o : outputs)
        {
            t.push_back(o.t);
            gyro.push_back(o.gyro_raw);
            accel.push_back(o.accel_raw);
            proposed.attitude.push_back(o.attitude);
        }
        const Vector3d m_ref = mag_reference(config.mag_declination, config.mag_inclination);
        std::vector<MethodTrack> out;
        out.push_back(std::move(proposed));
        out.push_back({"raw_ekf", run_attitude_ekf(t, gyro, accel, log, config.attitude, m_ref)});
        if (outputs.empty())
        {
            out.push_back({"trailing_avg_ekf", {}});
            out.push_back({"centered_avg_ekf", {}});
        }
        else
        {
            const double period = 1.0 / median_frequency(outputs);
            const auto g_tr = smooth_axes(gyro, period, config.fs, false);
            const auto a_tr = smooth_axes(accel, period, config.fs, false);
            out.push_back({"trailing_avg_ekf", run_attitude_ekf(t, g_tr, a_tr, log, config.attitude, m_ref)});
            const auto g_c = smooth_axes(gyro, period, config.fs, true);
            const auto a_c = smooth_axes(accel, period, config.fs, true);
            out.push_back({"centered_avg_ekf", run_attitude_ekf(t, g_c, a_c, log, config.attitude, m_ref)});
        }
        out.push_back({"complementary", run_complementary(t, gyro, accel, log, m_ref)});
        return out;
    }

    std::vector<Vector3d> reference_euler(std::span<const PipelineOutput> outputs, std::span<const TruthRecord> truth, double f_flap)
    {
        if (truth.size() < 2)
            throw DataError("reference_euler: truth too short");
        const double fs = 1.0 / (truth[1].t - truth[0].t);
        const auto n = static_cast<Eigen::Index>(truth.size());
        VectorXd roll(n), pitch(n), yaw(n);
        double unwrap = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
        {
            const auto& r = truth[static_cast<std::size_t>(i)];
            roll[i] = r.roll;
            pitch[i] = r.theta;
            if (i > 0)
                unwrap += wrap_pi(r.yaw - truth[static_cast<std::size_t>(i - 1)].yaw);
            yaw[i] = truth[0].yaw + unwrap;
        }
        const double period = 1.0 / f_flap;
        const VectorXd rs = centered_cycle_average(roll, period, fs);
        const VectorXd ps = centered_cycle_average(pitch, period, fs);
        const VectorXd ys = centered_cycle_average(yaw, period, fs);
        std::vector<Vector3d> out;
        out.reserve(outputs.size());
        for (const auto& o : outputs)
        {
            const double x = std::clamp((o.t - truth[0].t) * fs, 0.0, static_cast<double>(n - 1));
            const auto i0 = static_cast<Eigen::Index>(std::floor(x));
            const Eigen::Index i1 = std::min(i0 + 1, n - 1);
            const double s = x - static_cast<double>(i0);
            out.emplace_back(rs[i0] + s * (rs[i1] - rs[i0]), ps[i0] + s * (ps[i1] - ps[i0]), wrap_pi(ys[i0] + s * (ys[i1] - ys[i0])));
        }
        return out;
    }

    std::vector<AttitudeErrors> attitude_errors(std::span<const MethodTrack> methods, std::span<const PipelineOutput> outputs,
                                                std::span<const Vector3d> reference, double t_start)
    {
        constexpr double kDeg = 180.0 / kPi;
        std::vector<AttitudeErrors> out;
        for (const auto& m : methods)
        {
            if (m.attitude.size() != outputs.size() || reference.size() != outputs.size())
                throw DataError("attitude_errors: track lengths differ");
            AttitudeErrors e{m.name};
            long count = 0;
            for (std::size_t i = 0; i < outputs.size(); ++i)
            {
                if (outputs[i].t < t_start)
                    continue;
                const Vector3d eul = euler_zyx(m.attitude[i]);
                const Vector3d d(wrap_pi(eul[0] - reference[i][0]), wrap_pi(eul[1] - reference[i][1]), wrap_pi(eul[2] - reference[i][2]));
                e.roll_deg += d[0] * d[0];
                e.pitch_deg += d[1] * d[1];
                e.yaw_deg += d[2] * d[2];
                ++count;
            }
            if (count == 0)
                throw DataError("attitude_errors: no samples after the warm-up");
            e.tilt_deg = std::sqrt((e.roll_deg + e.pitch_deg) / (2.0 * count)) * kDeg;
            e.roll_deg = std::sqrt(e.roll_deg / count) * kDeg;
            e.pitch_deg = std::sqrt(e.pitch_deg / count) * kDeg;
            e.yaw_deg = std::sqrt(e.yaw_deg / count) * kDeg;
            out.push_back(e);
        }
        return out;
    }

    std::string format_table(std::span<const AttitudeErrors> rows)
    {
        std::ostringstream os;
        char line[160];
        std::snprintf(line, sizeof line, "%-18s %10s %10s %10s %10s\n", "method", "roll_deg", "pitch_deg", "yaw_deg", "tilt_deg");
        os << line;
        for (const auto& r : rows)
        {
            std::snprintf(line, sizeof line, "%-18s %10.4f %10.4f %10.4f %10.4f\n", r.name.c_str(), r.roll_deg, r.pitch_deg, r.yaw_deg, r.tilt_deg);
            os << line;
        }
        return os.str();
    }

    std::string format_csv(std::span<const AttitudeErrors> rows)
    {
        std::ostringstream os;
        os << "method,roll_rms_deg,pitch_rms_deg,yaw_rms_deg,tilt_rms_deg\n";
        char line[160];
        for (const auto& r : rows)
        {
            std::snprintf(line, sizeof line, "%s,%.9g,%.9g,%.9g,%.9g\n", r.name.c_str(), r.roll_deg, r.pitch_deg, r.yaw_deg, r.tilt_deg);
            os << line;
        }
        return os.str();
    }
} // namespace flapest
