// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "flapest/signal.hpp"

#include <chrono>

namespace flapest::testing
{
    PipelineConfig pipeline_for(const SimConfig& sim, const TrimResult& trim)
    {
        PipelineConfig pc;
        pc.aero = estimator_aero(sim, trim);
        pc.mag_declination = sim.mag_declination;
        pc.mag_inclination = sim.mag_inclination;
        return pc;
    }

    Scenario make_scenario(const SimConfig& sim, double duration)
    {
        using clock = std::chrono::steady_clock;
        Scenario s;
        s.sim = sim;
        const auto t0 = clock::now();
        s.flight = run(sim, duration);
        const auto t1 = clock::now();
        s.config = pipeline_for(sim, s.flight.trim);
        Pipeline p(s.config);
        s.outputs = run_pipeline(p, s.flight.log);
        s.counters = p.counters();
        const auto t2 = clock::now();
        s.sim_seconds = std::chrono::duration<double>(t1 - t0).count();
        s.pipeline_seconds = std::chrono::duration<double>(t2 - t1).count();
        return s;
    }

    const Scenario& nominal()
    {
        static const Scenario s = make_scenario(SimConfig{}, 60.0);
        return s;
    }

    std::vector<std::complex<double>> naive_dft(const std::vector<double>& x)
    {
        const std::size_t n = x.size();
        std::vector<std::complex<double>> out(n);
        for (std::size_t k = 0; k < n; ++k)
        {
            std::complex<double> acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
            {
                // reduce k*j mod n first so the angle stays small
                const double angle = -2.0 * kPi * static_cast<double>((k * j) % n) / static_cast<double>(n);
                acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
            }
            out[k] = acc;
        }
        return out;
    }

    VectorXd true_pitch_oscillation(const Scenario& s)
    {
        const auto& truth = s.flight.truth;
        VectorXd theta(static_cast<Eigen::Index>(truth.size()));
        for (std::size_t i = 0; i < truth.size(); ++i)
            theta[static_cast<Eigen::Index>(i)] = truth[i].theta;
        const double fs_truth = 1.0 / s.sim.dt;
        const VectorXd avg = centered_cycle_average(theta, 1.0 / s.sim.f_flap, fs_truth);
        VectorXd out(static_cast<Eigen::Index>(s.outputs.size()));
        for (std::size_t i = 0; i < s.outputs.size(); ++i)
        {
            const double x = (s.outputs[i].t - truth.front().t) * fs_truth;
            const auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), 0, theta.size() - 2);
            const double w = std::clamp(x - static_cast<double>(k), 0.0, 1.0);
            const double a = theta[k] - avg[k];
            const double b = theta[k + 1] - avg[k + 1];
            out[static_cast<Eigen::Index>(i)] = a + w * (b - a);
        }
        return out;
    }
} // namespace flapest::testing
