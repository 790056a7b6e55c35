// SPDX-License-Identifier: Apache-2.0
#include "flapest/pipeline.hpp"

#include <algorithm>

namespace flapest
{
    namespace
    {
        bool same_pattern(const PeriodicPattern& a, const PeriodicPattern& b)
        {
            return a.n_harm == b.n_harm && a.removed_mean == b.removed_mean && a.sigma_n2 == b.sigma_n2 && a.train_phis == b.train_phis &&
                   a.weights == b.weights && a.coeffs == b.coeffs && a.feature_cov == b.feature_cov;
        }

        double pattern_rms(const PeriodicPattern& p)
        {
            return p.fitted() ? std::sqrt(0.5 * p.coeffs.squaredNorm()) : 0.0;
        }

        std::size_t stack_capacity(const PipelineConfig& c, double f)
        {
            const auto cap = static_cast<std::size_t>(std::ceil(c.stack_cycles * c.fs / f));
            return std::max(cap, static_cast<std::size_t>(c.k_clusters));
        }
    } // namespace

    void PipelineConfig::validate() const
    {
        if (!(fs > 0.0))
            throw ParameterError("pipeline: fs must be positive");
        if (!(f_lo > 0.0) || !(f_hi > f_lo) || !(f_hi < 0.5 * fs))
            throw ParameterError("pipeline: frequency band must lie below Nyquist");
        if (!(f_init >= f_lo && f_init <= f_hi))
            throw ParameterError("pipeline: initial frequency must lie in the band");
        if (k_clusters < 1 || stack_cycles < 1 || n_harm < 1)
            throw ParameterError("pipeline: clusters, stack cycles and harmonics must be positive");
        if (static_cast<double>(stack_cycles) * fs / f_hi < k_clusters)
            throw ParameterError("pipeline: stack must hold at least k samples at the top of the band");
        if (!(lowpass_hz > 0.0 && lowpass_hz < 0.5 * fs))
            throw ParameterError("pipeline: low-pass cutoff must lie below Nyquist");
        if (!(max_out_of_order >= 0.0))
            throw ParameterError("pipeline: out-of-order tolerance must be non-negative");
        make_phase_state(0.0, 0.0, k_cc, phase_lower, phase_upper);
        attitude.validate();
        internal.validate();
        aero.validate();
    }

    bool operator==(const PipelineSnapshot& a, const PipelineSnapshot& b)
    {
        if (!(a.phase == b.phase && a.frequency == b.frequency && a.attitude == b.attitude && a.internal == b.internal && a.counters == b.counters))
            return false;
        for (std::size_t i = 0; i < a.patterns.size(); ++i)
            if (!same_pattern(a.patterns[i], b.patterns[i]))
                return false;
        return true;
    }

    Pipeline::Pipeline(PipelineConfig config)
        : config_((config.validate(), config)),
          accel_rs_(config_.fs),
          gyro_rs_(config_.fs),
          freq_(FrequencyTrackerConfig{config_.fs, config_.fft_window, config_.fft_hop, config_.f_lo, config_.f_hi, config_.freq_smoothing,
                                       config_.record_spectrogram}),
          phase_(make_phase_state(0.0, 0.0, config_.k_cc, config_.phase_lower, config_.phase_upper)),
          stack_(stack_capacity(config_, config_.f_init)),
          lp_accel_(config_.lowpass_hz, config_.fs),
          lp_gyro_(config_.lowpass_hz, config_.fs),
          attitude_(config_.attitude, mag_reference(config_.mag_declination, config_.mag_inclination)),
          internal_(config_.aero, config_.internal)
    {
        for (auto& p : patterns_)
            p = zero_pattern(config_.n_harm);
    }

    double Pipeline::current_frequency() const
    {
        return freq_.current() ? freq_.current()->f_freq : config_.f_init;
    }

    std::vector<PipelineOutput> Pipeline::ingest(const TimedSample& sample)
    {
        std::vector<PipelineOutput> out;
        if (!std::isfinite(sample.t) || !sample.value.allFinite())
        {
            ++counters_.dropped_samples;
            return out;
        }
        auto last = last_t_.find(sample.channel);
        if (last != last_t_.end() && sample.t < last->second)
        {
            // Late samples cannot be merged without holding back output, so
            // anything behind its channel is dropped.
            ++counters_.dropped_samples;
            return out;
        }
        last_t_[sample.channel] = sample.t;

        if (sample.channel != Channel::accel && sample.channel != Channel::gyro)
        {
            aux_.push_back(sample);
            return out;
        }
        if (!grid_set_)
        {
            accel_rs_.set_grid_origin(sample.t);
            gyro_rs_.set_grid_origin(sample.t);
            grid_set_ = true;
        }
        const bool is_accel = sample.channel == Channel::accel;
        for (const auto& tick : (is_accel ? accel_rs_ : gyro_rs_).push(sample.t, sample.value))
        {
            if (tick.index <= last_tick_)
                continue;
            auto& slot = pending_[tick.index];
            (is_accel ? slot.first : slot.second) = tick;
        }

        while (!pending_.empty())
        {
            auto it = pending_.begin();
            const auto& [a, g] = it->second;
            if (a && g)
            {
                out.push_back(process_tick(it->first, a->t, a->value, g->value, sample.t));
                last_tick_ = it->first;
                pending_.erase(it);
                continue;
            }
            // A channel that has already moved past this index will never fill it.
            const bool accel_past = accel_rs_.started() && accel_rs_.next_index() > it->first && !a;
            const bool gyro_past = gyro_rs_.started() && gyro_rs_.next_index() > it->first && !g;
            if (accel_past || gyro_past)
            {
                pending_.erase(it);
                continue;
            }
            break;
        }
        return out;
    }

    void Pipeline::apply_aux_until(double t)
    {
        while (!aux_.empty() && aux_.front().t <= t)
        {
            const TimedSample s = aux_.front();
            aux_.pop_front();
            switch (s.channel)
            {
            case Channel::mag:
                attitude_.on_mag(s.t, s.value);
                break;
            case Channel::gps_pos:
                internal_.update(s.value, std::nullopt);
                break;
            case Channel::gps_vel:
            {
                attitude_.on_gps_velocity(s.t, s.value);
                Vector3d v = s.value;
                if (patterns_ready_ && attitude_.initialized() && phase_started_)
                {
                    // Remove the flapping velocity so the fix observes the cycle mean.
                    const double f = current_frequency();
                    const double phi = phase_.phi + kTwoPi<double> * f * (s.t - phase_.t_last);
                    Vector3d dv;
                    for (int i = 0; i < 3; ++i)
                        dv[i] = integrate_pattern(patterns_[static_cast<std::size_t>(i)], phi, f, 1);
                    v -= attitude_.state().q * dv;
                }
                internal_.update(std::nullopt, v);
                break;
            }
            default:
                break;
            }
        }
    }

    void Pipeline::correct_phase(double f)
    {
        const auto n = static_cast<std::size_t>(std::lround(config_.fs / f));
        if (n < 4 || window_.size() < n)
            return;
        constexpr std::array<int, 2> kChannels{2, 4}; // accel z, gyro y
        std::vector<int> used;
        for (int ch : kChannels)
            if (pattern_rms(patterns_[static_cast<std::size_t>(ch)]) > 1e-9)
                used.push_back(ch);
        if (used.empty())
            return;

        MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(used.size()));
        MatrixXd s_hat(s.rows(), s.cols());
        const std::size_t first = window_.size() - n;
        for (std::size_t i = 0; i < n; ++i)
        {
            const RawEntry& e = window_[first + i];
            const double phi = phase_.phi - kTwoPi<double> * f * (phase_.t_last - e.t);
            for (std::size_t c = 0; c < used.size(); ++c)
            {
                const auto& p = patterns_[static_cast<std::size_t>(used[c])];
                const double scale = 1.0 / pattern_rms(p);
                s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = e.y[used[c]] * scale;
                s_hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = predict(p, phi).mean * scale;
            }
        }
        s.rowwise() -= s.colwise().mean();
        const int max_lag = std::max(1, static_cast<int>(n) / 4);
        phase_ = correct(phase_, cross_correlation(s, s_hat, max_lag), f, config_.fs);
    }

    void Pipeline::refit()
    {
        stack_.set_capacity(stack_capacity(config_, current_frequency()));
        if (!stack_.full())
            return;
        std::vector<double> phases;
        phases.reserve(stack_.size());
        for (const auto& e : stack_)
            phases.push_back(e.phi);
        const ClusterSet clusters = kmeans_phases(phases, config_.k_clusters);
        std::vector<double> values(stack_.size());
        for (std::size_t ch = 0; ch < patterns_.size(); ++ch)
        {
            std::size_t i = 0;
            for (const auto& e : stack_)
                values[i++] = e.y[static_cast<Eigen::Index>(ch)];
            try
            {
                patterns_[ch] = fit(summarize_clusters(clusters, values), config_.n_harm);
            }
            catch (const NumericError&)
            {
                // keep the previous pattern for this channel
            }
        }
        patterns_ready_ = true;
        ++counters_.refits;
    }

    PipelineOutput Pipeline::process_tick(std::int64_t index, double t, const Vector3d& accel, const Vector3d& gyro, double t_emit)
    {
        apply_aux_until(t);
        ++counters_.ticks;

        freq_.push(t, accel.z(), gyro.y());
        const double f = current_frequency();

        Vector6d y;
        y << accel, gyro;
        window_.push_back({t, y});
        const auto window_cap = static_cast<std::size_t>(std::ceil(config_.fs / config_.f_lo)) + 1;
        while (window_.size() > window_cap)
            window_.pop_front();

        bool wrapped = false;
        if (!phase_started_)
        {
            phase_ = make_phase_state(t, 0.0, config_.k_cc, config_.phase_lower, config_.phase_upper);
            phase_started_ = true;
        }
        else
        {
            const double before = phase_.phi;
            phase_ = advance(phase_, t, f);
            if (patterns_ready_)
                correct_phase(f);
            wrapped = before - phase_.phi > kPi;
        }

        stack_.push({phase_.phi, y});
        if (wrapped)
            refit();

        Vector3d a_free, g_free, a_pat, g_pat;
        double accel_var = 0.0;
        for (int i = 0; i < 3; ++i)
        {
            const Prediction pa = predict(patterns_[static_cast<std::size_t>(i)], phase_.phi);
            const Prediction pg = predict(patterns_[static_cast<std::size_t>(3 + i)], phase_.phi);
            a_pat[i] = pa.mean;
            g_pat[i] = pg.mean;
            a_free[i] = accel[i] - pa.mean;
            g_free[i] = gyro[i] - pg.mean;
            accel_var = std::max(accel_var, pa.var);
        }
        a_free = lp_accel_(a_free);
        g_free = lp_gyro_(g_free);

        if (config_.gp_variance_inflation && patterns_ready_)
            attitude_.set_accel_noise(std::sqrt(config_.attitude.accel * config_.attitude.accel + accel_var));
        const bool was_initialized = attitude_.initialized();
        attitude_.step(t, g_free, a_free);
        counters_.accel_gated = attitude_.counters().accel_gated;
        counters_.mag_skipped = attitude_.counters().mag_skipped;

        const Matrix3d r_bi = attitude_.state().q.toRotationMatrix();
        if (was_initialized && internal_.initialized())
        {
            const AirData ad = air_data(r_bi, internal_.state().v_bar);
            Vector3d f_w;
            if (ad.V_b > 1.0)
            {
                const FlightCondition cond = make_condition(config_.aero, ad.V_b, ad.alpha, f);
                OscillationParams osc;
                if (patterns_ready_)
                    osc = estimate_oscillation_params(patterns_[4], patterns_[2], cond, config_.aero).params;
                f_w = wind_force(cycle_avg_closed(cond, osc, config_.aero), cond.Q, config_.aero.S);
            }
            else
            {
                f_w = (r_bi * wind_to_body(ad.alpha)).transpose() * Vector3d(0.0, 0.0, config_.aero.m * config_.aero.g);
            }
            internal_.predict(r_bi, f_w, 1.0 / config_.fs);
        }
        counters_.gps_gated = internal_.counters().gated;

        PipelineOutput o;
        o.tick = index;
        o.t = t;
        o.t_emit = t_emit;
        o.accel_raw = accel;
        o.gyro_raw = gyro;
        o.accel_free = a_free;
        o.gyro_free = g_free;
        o.accel_pattern = a_pat;
        o.gyro_pattern = g_pat;
        o.phase = phase_.phi;
        o.freq = f;
        o.freq_var = freq_.current() ? freq_.current()->var_freq : 0.0;
        o.attitude = attitude_.state().q;
        o.internal_valid = internal_.initialized();
        o.p_bar = internal_.state().p_bar;
        o.v_bar = internal_.state().v_bar;
        const ReconstructedState rec = reconstruct_state(internal_.state(), o.attitude, patterns_, phase_.phi, f);
        o.attitude_rec = rec.q;
        o.v_rec = rec.v;
        o.p_rec = rec.p;
        o.pattern_id = counters_.refits;
        return o;
    }

    PipelineSnapshot Pipeline::snapshot() const
    {
        PipelineSnapshot s;
        s.phase = phase_;
        s.frequency = freq_.current();
        s.patterns = patterns_;
        s.attitude = attitude_.state();
        s.internal = internal_.state();
        s.counters = counters_;
        return s;
    }

    std::vector<PipelineOutput> run_pipeline(Pipeline& pipeline, std::vector<TimedSample> log)
    {
        std::stable_sort(log.begin(), log.end(), [](const TimedSample& a, const TimedSample& b) { return a.t < b.t; });
        std::vector<PipelineOutput> out;
        for (const auto& s : log)
        {
            auto rows = pipeline.ingest(s);
            out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
        }
        return out;
    }
} // namespace flapest
