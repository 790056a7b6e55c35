// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. With a criterion number
// as the only argument, runs just that one.

#include "flapest/aero.hpp"
#include "flapest/evaluation.hpp"
#include "flapest/freq_tracker.hpp"
#include "flapest/periodic_learner.hpp"
#include "flapest/signal.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <chrono>
#include <cstdio>
#include <algorithm>
#include <functional>
#include <random>
#include <string>

using namespace flapest;
using flapest::testing::nominal;

namespace
{
    struct Verdict
    {
        bool pass = false;
        std::string detail;
    };

    std::string fmt(const char* f, auto... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return buf;
    }

    double seconds_since(std::chrono::steady_clock::time_point t0)
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    constexpr double kWarmup = 10.0;

    std::size_t first_after(const std::vector<PipelineOutput>& out, double t)
    {
        std::size_t i = 0;
        while (i < out.size() && out[i].t < t)
            ++i;
        return i;
    }

    // Gram matrix of the Fourier basis against itself by the periodic
    // trapezoid rule with m nodes, which is exact for trigonometric
    // polynomials of degree below m.
    MatrixXd fourier_gram(int n, int m)
    {
        MatrixXd g = MatrixXd::Zero(2 * n, 2 * n);
        for (int k = 0; k < m; ++k)
        {
            const double phi = kTwoPi<double> * k / m;
            VectorXd f(2 * n);
            for (int j = 1; j <= n; ++j)
            {
                f[2 * j - 2] = std::sin(j * phi);
                f[2 * j - 1] = std::cos(j * phi);
            }
            g += f * f.transpose() / m;
        }
        return g;
    }

    Verdict kernel_algebra()
    {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0.0, kTwoPi<double>);
        double diag_err = 0.0, min_eig = 1e300, gram_err = 0.0;
        for (int n = 1; n <= 10; ++n)
        {
            VectorXd phis(1000);
            for (auto& p : phis)
                p = u(rng);
            for (double p : phis)
                diag_err = std::max(diag_err, std::abs(kernel(p, p, n) - 2.0 * n));
            const MatrixXd k = kernel_matrix(phis.head(200), phis.head(200), n);
            min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
            gram_err = std::max(gram_err, (fourier_gram(n, 257) - 0.5 * MatrixXd::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff());
        }
        const double rt = seconds_since(t0);
        const bool pass = diag_err <= 1e-9 && min_eig >= -1e-9 && gram_err <= 1e-10 && rt < 1.0;
        return {pass, fmt("max |k(phi,phi)-2n| %.1e, min eigenvalue %.1e, Gram error %.1e, %.3f s", diag_err, min_eig, gram_err, rt)};
    }

    Verdict gp_correctness()
    {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(2);
        std::normal_distribution<double> n01;
        std::uniform_real_distribution<double> jitter(-0.25, 0.25), u(0.0, kTwoPi<double>), noise(0.01, 1.0);
        double interp_err = 0.0, mean_err = 0.0, var_err = 0.0;
        for (int trial = 0; trial < 100; ++trial)
        {
            const int n = 1 + trial % 10;
            const int m = 2 * n;
            VectorXd p(m), y(m);
            for (int i = 0; i < m; ++i)
            {
                p[i] = wrap_two_pi(kTwoPi<double> * (i + jitter(rng)) / m);
                y[i] = n01(rng);
            }
            const auto exact = fit_exact(p, y, n, 0.0);
            for (int i = 0; i < m; ++i)
                interp_err = std::max(interp_err, std::abs(predict(exact, p[i]).mean - y[i]));

            const int mm = 16;
            VectorXd q(mm), z(mm);
            for (int i = 0; i < mm; ++i)
            {
                q[i] = wrap_two_pi(kTwoPi<double> * (i + jitter(rng)) / mm);
                z[i] = n01(rng);
            }
            const double s2 = noise(rng);
            const auto g = fit_exact(q, z, n, s2);
            // dense oracle with the kernel written as a cosine sum
            auto kern = [n](double a, double b) {
                double acc = 0.0;
                for (int h = 1; h <= n; ++h)
                    acc += std::cos(h * (a - b));
                return 2.0 * acc;
            };
            MatrixXd a(mm, mm);
            for (int i = 0; i < mm; ++i)
                for (int j = 0; j < mm; ++j)
                    a(i, j) = kern(q[i], q[j]) + (i == j ? s2 : 0.0);
            const Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
            for (int k = 0; k < 5; ++k)
            {
                const double ps = u(rng);
                VectorXd ks(mm);
                for (int i = 0; i < mm; ++i)
                    ks[i] = kern(q[i], ps);
                const double mean = ks.dot(qr.solve(z));
                const double var = std::max(0.0, 2.0 * n - ks.dot(qr.solve(ks)));
                const Prediction got = predict(g, ps);
                mean_err = std::max(mean_err, std::abs(got.mean - mean));
                var_err = std::max(var_err, std::abs(got.var - var));
            }
        }
        const double rt = seconds_since(t0);
        const bool pass = interp_err <= 1e-9 && mean_err <= 1e-9 && var_err <= 1e-9 && rt < 5.0;
        return {pass, fmt("interpolation %.1e, mean vs dense %.1e, variance vs dense %.1e, %.3f s", interp_err, mean_err, var_err, rt)};
    }

    Verdict cycle_average()
    {
        const auto t0 = std::chrono::steady_clock::now();
        const AeroConfig c;
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double zero_err = 0.0, worst = 0.0;
        for (int i = 0; i < 100; ++i)
        {
            const double alpha = 0.05 + 0.25 * u(rng), f = 3.0 + 5.0 * u(rng), v = 5.0 + 7.0 * u(rng);
            const auto cond = make_condition(c, v, alpha, f);
            AeroConfig still = c;
            still.h0 = 0.0;
            const auto a0 = cycle_avg_closed(cond, {}, still);
            const auto n0 = cycle_avg_numeric(cond, {}, still);
            zero_err = std::max({zero_err, std::abs(a0.C_L - n0.C_L), std::abs(a0.C_T - n0.C_T), std::abs(a0.C_D - n0.C_D)});

            OscillationParams o;
            o.C_L_osc = 0.2 * c.C_L_alpha * alpha * u(rng);
            o.phi_L = kTwoPi<double> * u(rng);
            const auto tr = integrate_oscillation(cond, o, c);
            double s = 0.0, co = 0.0;
            for (Eigen::Index k = 0; k < tr.q.size(); ++k)
            {
                s += tr.q[k] * std::sin(tr.phi[k]);
                co += tr.q[k] * std::cos(tr.phi[k]);
            }
            o.q_osc = 2.0 * std::hypot(s, co) / static_cast<double>(tr.q.size());
            const auto a = cycle_avg_closed(cond, o, c);
            const auto n = cycle_avg_numeric(cond, o, c);
            worst = std::max({worst, std::abs(a.C_L - n.C_L) / std::abs(n.C_L), std::abs(a.C_T - n.C_T) / std::abs(n.C_T),
                              std::abs(a.C_D - n.C_D) / std::abs(n.C_D)});
        }
        const double rt = seconds_since(t0);
        const bool pass = zero_err <= 1e-9 && worst <= 0.05 && rt < 30.0;
        return {pass, fmt("zero-oscillation error %.1e, worst relative error %.2e over 100 points, %.3f s", zero_err, worst, rt)};
    }

    Verdict frequency_tracking()
    {
        const auto& s = nominal();
        const auto t0 = std::chrono::steady_clock::now();
        const auto& pc = s.config;
        FrequencyTracker ft(FrequencyTrackerConfig{pc.fs, pc.fft_window, pc.fft_hop, pc.f_lo, pc.f_hi, pc.freq_smoothing, false});
        long total = 0, ok = 0;
        for (const auto& o : s.outputs)
            if (const auto e = ft.push(o.t, o.accel_raw.z(), o.gyro_raw.y()); e && e->t > kWarmup)
            {
                ++total;
                ok += std::abs(e->f_freq - s.sim.f_flap) <= 0.4;
            }
        const double rt = s.pipeline_seconds;
        const double share = total ? static_cast<double>(ok) / total : 0.0;
        const bool pass = total > 0 && share >= 0.99 && rt < 30.0;
        return {pass, fmt("%ld/%ld estimates within 0.4 Hz (%.2f%%), tracking %.2f s, full pipeline over 60 s %.2f s", ok, total, 100.0 * share,
                          seconds_since(t0), rt)};
    }

    Verdict oscillation_removal()
    {
        const auto& s = nominal();
        const auto& out = s.outputs;
        const std::size_t s0 = first_after(out, kWarmup);
        const auto n = static_cast<Eigen::Index>(out.size() - s0);
        struct Ch
        {
            const char* name;
            int index;
        };
        // the channels that carry flapping oscillation in longitudinal flight
        const Ch channels[] = {{"accel_x", 0}, {"accel_z", 2}, {"gyro_y", 4}};
        bool pass = s.pipeline_seconds < 60.0;
        std::string detail;
        for (const auto& ch : channels)
        {
            VectorXd raw(n), free(n);
            double se = 0.0, lo = 1e300, hi = -1e300;
            for (Eigen::Index i = 0; i < n; ++i)
            {
                const auto& o = out[s0 + static_cast<std::size_t>(i)];
                const bool acc = ch.index < 3;
                const int ax = ch.index % 3;
                raw[i] = acc ? o.accel_raw[ax] : o.gyro_raw[ax];
                free[i] = acc ? o.accel_free[ax] : o.gyro_free[ax];
                const TruthRecord tr = truth_at(s.flight.truth, o.t);
                const double truth = acc ? tr.accel_osc[ax] : tr.gyro_osc[ax];
                const double pattern = acc ? o.accel_pattern[ax] : o.gyro_pattern[ax];
                se += (truth - pattern) * (truth - pattern);
                lo = std::min(lo, truth);
                hi = std::max(hi, truth);
            }
            const double ratio = band_power(raw, s.config.fs, s.sim.f_flap, 0.5) / band_power(free, s.config.fs, s.sim.f_flap, 0.5);
            const double rel = std::sqrt(se / static_cast<double>(n)) / (0.5 * (hi - lo));
            pass = pass && ratio >= 10.0 && rel <= 0.15;
            detail += fmt("%s band reduction %.0fx pattern error %.1f%%; ", ch.name, ratio, 100.0 * rel);
        }
        return {pass, detail + fmt("pipeline %.2f s", s.pipeline_seconds)};
    }

    struct Methods
    {
        std::vector<MethodTrack> tracks;
        std::vector<Vector3d> reference;
        std::vector<AttitudeErrors> errors;
    };

    const Methods& methods()
    {
        static const Methods m = [] {
            const auto& s = nominal();
            Methods r;
            r.tracks = attitude_methods(s.outputs, s.flight.log, s.config);
            r.reference = reference_euler(s.outputs, s.flight.truth, s.sim.f_flap);
            r.errors = attitude_errors(r.tracks, s.outputs, r.reference, kWarmup);
            return r;
        }();
        return m;
    }

    VectorXd euler_of(const std::vector<Quaterniond>& q, std::size_t from, int axis)
    {
        VectorXd p(static_cast<Eigen::Index>(q.size() - from));
        for (std::size_t i = from; i < q.size(); ++i)
            p[static_cast<Eigen::Index>(i - from)] = euler_zyx(q[i])[axis];
        return p;
    }

    VectorXd pitch_of(const std::vector<Quaterniond>& q, std::size_t from)
    {
        return euler_of(q, from, 1);
    }

    Verdict attitude()
    {
        const auto& s = nominal();
        const auto& m = methods();
        const auto& e = m.errors;
        const double proposed = e[0].tilt_deg, raw = e[1].tilt_deg, centered = e[3].tilt_deg;
        double latency = 0.0;
        for (const auto& o : s.outputs)
            latency = std::max(latency, (o.t_emit - o.t) * s.config.fs);
        const std::size_t s0 = first_after(s.outputs, kWarmup);
        const int needed = static_cast<int>(std::ceil(s.config.fs / (2.0 * s.sim.f_flap)));
        // Delay of the trailing baseline's inputs against the centered ones,
        // with the same averaging period the baseline uses.
        std::vector<double> freqs;
        VectorXd roll_rate(static_cast<Eigen::Index>(s.outputs.size()));
        for (std::size_t i = 0; i < s.outputs.size(); ++i)
        {
            freqs.push_back(s.outputs[i].freq);
            roll_rate[static_cast<Eigen::Index>(i)] = s.outputs[i].gyro_raw.x();
        }
        std::nth_element(freqs.begin(), freqs.begin() + freqs.size() / 2, freqs.end());
        const double period = 1.0 / freqs[freqs.size() / 2];
        const auto tail = static_cast<Eigen::Index>(s.outputs.size() - s0);
        const VectorXd centered_in = centered_cycle_average(roll_rate, period, s.config.fs).tail(tail);
        const VectorXd trailing_in = trailing_cycle_average(roll_rate, period, s.config.fs).tail(tail);
        const int trailing_lag = xcorr_lag(centered_in, trailing_in, 2 * needed);
        // Mag and GPS updates are not delayed, so the filter output lags less.
        const int trailing_roll_lag = xcorr_lag(euler_of(m.tracks[3].attitude, s0, 0), euler_of(m.tracks[2].attitude, s0, 0), 2 * needed);
        const bool pass = proposed < raw && proposed <= 1.5 * centered && latency <= 2.0 && trailing_lag >= needed;
        return {pass, fmt("tilt RMS proposed %.3f deg, raw %.3f deg, centered average %.3f deg (ratio %.2f); latency %.2f ticks; trailing-average input lag %d ticks "
                          "(need >= %d), its EKF roll lag %d ticks",
                          proposed, raw, centered, proposed / centered, latency, trailing_lag, needed, trailing_roll_lag)};
    }

    Verdict reconstruction()
    {
        const auto& s = nominal();
        const auto& m = methods();
        const std::size_t s0 = first_after(s.outputs, kWarmup);
        const VectorXd truth_all = flapest::testing::true_pitch_oscillation(s);
        const auto n = static_cast<Eigen::Index>(s.outputs.size() - s0);
        const VectorXd truth = truth_all.tail(n);
        VectorXd rec(n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
            const auto& o = s.outputs[s0 + static_cast<std::size_t>(i)];
            rec[i] = euler_zyx(o.attitude_rec).y() - euler_zyx(o.attitude).y();
        }
        // raw-EKF pitch minus its own centered cycle average
        const VectorXd raw_all = pitch_of(m.tracks[1].attitude, 0);
        const VectorXd raw_avg = centered_cycle_average(raw_all, 1.0 / s.sim.f_flap, s.config.fs);
        const VectorXd raw = (raw_all - raw_avg).tail(n);
        const int rec_lag = xcorr_lag(truth, rec, 20);
        const int raw_lag = xcorr_lag(truth, raw, 20);
        const bool pass = std::abs(rec_lag) <= 1 && raw_lag >= 3;
        return {pass, fmt("reconstructed pitch lag %d samples (need 0 +/- 1), raw-EKF pitch oscillation lag %d samples (need >= 3)", rec_lag, raw_lag)};
    }

    Verdict internal_model()
    {
        const auto& s = nominal();
        const auto& out = s.outputs;
        const std::size_t s0 = first_after(out, kWarmup);
        double se = 0.0;
        long n = 0;
        for (std::size_t i = s0; i < out.size(); ++i)
        {
            se += (out[i].p_bar - truth_at(s.flight.truth, out[i].t).position).squaredNorm();
            ++n;
        }
        const double rms = std::sqrt(se / static_cast<double>(std::max(n, 1L)));
        const double limit = 2.0 * s.sim.gps_pos_noise;

        // Between GPS fixes v_bar moves only by the model's mean acceleration;
        // compare each tick's change with 3 sigma of the velocity process noise.
        std::vector<double> fixes;
        for (const auto& x : s.flight.log)
            if (x.channel == Channel::gps_pos || x.channel == Channel::gps_vel)
                fixes.push_back(x.t);
        const double dt = 1.0 / s.config.fs;
        const double sigma = std::sqrt(s.config.internal.accel_psd * dt);
        double worst = 0.0;
        long jumps = 0;
        std::size_t f = 0;
        for (std::size_t i = s0 + 1; i < out.size(); ++i)
        {
            bool fix = false;
            for (; f < fixes.size() && fixes[f] <= out[i].t; ++f)
                fix = fix || fixes[f] > out[i - 1].t;
            if (fix || !out[i - 1].internal_valid)
                continue;
            const double jump = (out[i].v_bar - out[i - 1].v_bar).cwiseAbs().maxCoeff();
            worst = std::max(worst, jump / sigma);
            jumps += jump > 3.0 * sigma;
        }
        const bool pass = n > 0 && rms <= limit && jumps == 0;
        return {pass, fmt("position RMS %.3f m (limit %.2f m); largest inter-fix velocity step %.2f sigma, %ld above 3 sigma", rms, limit, worst, jumps)};
    }

    Verdict determinism()
    {
        const auto& s = nominal();
        const auto rerun = run(s.sim, 60.0);
        bool same_sim = rerun.log == s.flight.log;
        Pipeline p(s.config);
        const auto again = run_pipeline(p, rerun.log);
        auto same = [](const PipelineOutput& a, const PipelineOutput& b) {
            return a.tick == b.tick && a.t == b.t && a.t_emit == b.t_emit && a.accel_free == b.accel_free && a.gyro_free == b.gyro_free &&
                   a.phase == b.phase && a.freq == b.freq && a.attitude.coeffs() == b.attitude.coeffs() &&
                   a.attitude_rec.coeffs() == b.attitude_rec.coeffs() && a.p_bar == b.p_bar && a.v_bar == b.v_bar && a.p_rec == b.p_rec &&
                   a.v_rec == b.v_rec && a.pattern_id == b.pattern_id;
        };
        bool identical = again.size() == s.outputs.size();
        for (std::size_t i = 0; identical && i < again.size(); ++i)
            identical = same(again[i], s.outputs[i]);

        std::vector<TimedSample> prefix;
        for (const auto& x : s.flight.log)
            if (x.t <= 30.0)
                prefix.push_back(x);
        Pipeline q(s.config);
        const auto head = run_pipeline(q, prefix);
        bool prefix_ok = !head.empty() && head.size() <= s.outputs.size();
        for (std::size_t i = 0; prefix_ok && i < head.size(); ++i)
            prefix_ok = same(head[i], s.outputs[i]);
        const bool pass = same_sim && identical && prefix_ok;
        return {pass, fmt("simulator rerun %s, pipeline rerun %s, 30 s prefix (%zu rows) %s", same_sim ? "identical" : "differs",
                          identical ? "identical" : "differs", head.size(), prefix_ok ? "reproduced" : "differs")};
    }
} // namespace

int main(int argc, char** argv)
{
    const std::function<Verdict()> criteria[] = {kernel_algebra, gp_correctness,  cycle_average,  frequency_tracking, oscillation_removal,
                                                 attitude,       reconstruction, internal_model, determinism};
    int only = 0;
    if (argc > 1)
    {
        only = std::atoi(argv[1]);
        if (only < 1 || only > 9)
        {
            std::fprintf(stderr, "usage: acceptance [criterion 1-9]\n");
            return 2;
        }
    }
    int failed = 0;
    for (int i = 1; i <= 9; ++i)
    {
        if (only && i != only)
            continue;
        Verdict v;
        try
        {
            v = criteria[i - 1]();
        }
        catch (const std::exception& e)
        {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", i, v.detail.c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed ? 1 : 0;
}
