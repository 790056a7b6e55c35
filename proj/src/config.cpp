// SPDX-License-Identifier: Apache-2.0
#include "flapest/config.hpp"

#include "flapest/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <variant>

namespace flapest
{
    namespace
    {
        using Target = std::variant<double*, int*, bool*, std::uint64_t*, Vector3d*>;

        struct Field
        {
            std::string key;
            Target target;
            std::string doc;
        };

        void add_aero(std::vector<Field>& f, const std::string& p, AeroConfig& a)
        {
            f.push_back({p + "m", &a.m, "vehicle mass, kg"});
            f.push_back({p + "I_p", &a.I_p, "pitch moment of inertia, kg m^2"});
            f.push_back({p + "l_w", &a.l_w, "wing center of pressure behind the CoM, m"});
            f.push_back({p + "l_t", &a.l_t, "tail arm behind the CoM, m"});
            f.push_back({p + "S", &a.S, "wing reference area, m^2"});
            f.push_back({p + "C_L_alpha", &a.C_L_alpha, "lift slope, 1/rad"});
            f.push_back({p + "C_D0", &a.C_D0, "zero-lift drag coefficient"});
            f.push_back({p + "A", &a.A, "aspect ratio"});
            f.push_back({p + "C_Th", &a.C_Th, "flapping thrust coefficient"});
            f.push_back({p + "h0", &a.h0, "plunge amplitude, m"});
            f.push_back({p + "rho", &a.rho, "air density, kg/m^3"});
            f.push_back({p + "g", &a.g, "gravity, m/s^2"});
            f.push_back({p + "chord", &a.chord, "reference length in the reduced frequency"});
        }

        std::vector<Field> fields(ConfigBundle& c)
        {
            std::vector<Field> f;
            SimConfig& s = c.sim;
            f.push_back({"sim.f_flap", &s.f_flap, "flapping frequency, Hz"});
            f.push_back({"sim.phase0", &s.phase0, "flapping phase at t = 0, rad"});
            f.push_back({"sim.C_L_osc", &s.C_L_osc, "oscillatory lift coefficient amplitude"});
            f.push_back({"sim.phi_L", &s.phi_L, "lift phase offset, rad"});
            f.push_back({"sim.airspeed", &s.airspeed, "trim airspeed, m/s"});
            f.push_back({"sim.tail_drag", &s.tail_drag, "tail drag coefficient referenced to S"});
            f.push_back({"sim.dt", &s.dt, "integrator step, s"});
            f.push_back({"sim.imu_rate", &s.imu_rate, "accel and gyro rate, Hz"});
            f.push_back({"sim.mag_rate", &s.mag_rate, "magnetometer rate, Hz"});
            f.push_back({"sim.gps_rate", &s.gps_rate, "GPS rate, Hz"});
            f.push_back({"sim.jitter", &s.jitter, "maximum timestamp jitter, s"});
            f.push_back({"sim.accel_noise", &s.accel_noise, "accelerometer white noise, m/s^2"});
            f.push_back({"sim.gyro_noise", &s.gyro_noise, "gyro white noise, rad/s"});
            f.push_back({"sim.mag_noise", &s.mag_noise, "magnetometer noise, normalized"});
            f.push_back({"sim.gps_pos_noise", &s.gps_pos_noise, "GPS position noise, m"});
            f.push_back({"sim.gps_vel_noise", &s.gps_vel_noise, "GPS velocity noise, m/s"});
            f.push_back({"sim.accel_bias", &s.accel_bias, "accelerometer bias, m/s^2"});
            f.push_back({"sim.gyro_bias", &s.gyro_bias, "gyro bias, rad/s"});
            f.push_back({"sim.roll_sigma", &s.roll_sigma, "stationary roll disturbance std, rad"});
            f.push_back({"sim.roll_freq", &s.roll_freq, "roll disturbance natural frequency, Hz"});
            f.push_back({"sim.roll_damping", &s.roll_damping, "roll disturbance damping ratio"});
            f.push_back({"sim.gust_roll_gain", &s.gust_roll_gain, "roll acceleration per m/s of lateral gust"});
            f.push_back({"sim.heading", &s.heading, "flight heading, rad"});
            f.push_back({"sim.mag_declination", &s.mag_declination, "field declination, rad"});
            f.push_back({"sim.mag_inclination", &s.mag_inclination, "field inclination, rad"});
            f.push_back({"sim.wind", &s.wind, "steady inertial wind, m/s"});
            f.push_back({"sim.seed", &s.seed, "random seed"});
            add_aero(f, "sim.aero.", s.aero);

            PipelineConfig& p = c.pipeline;
            f.push_back({"pipeline.fs", &p.fs, "resampling rate, Hz"});
            f.push_back({"pipeline.fft_window", &p.fft_window, "spectral window, samples"});
            f.push_back({"pipeline.fft_hop", &p.fft_hop, "spectral hop, samples"});
            f.push_back({"pipeline.f_lo", &p.f_lo, "lower edge of the flapping band, Hz"});
            f.push_back({"pipeline.f_hi", &p.f_hi, "upper edge of the flapping band, Hz"});
            f.push_back({"pipeline.freq_smoothing", &p.freq_smoothing, "frequency smoothing window, s"});
            f.push_back({"pipeline.f_init", &p.f_init, "phase rate before the first estimate, Hz"});
            f.push_back({"pipeline.k_clusters", &p.k_clusters, "phase clusters"});
            f.push_back({"pipeline.stack_cycles", &p.stack_cycles, "cycles held in the memory stack"});
            f.push_back({"pipeline.n_harm", &p.n_harm, "Fourier harmonics in the kernel"});
            f.push_back({"pipeline.k_cc", &p.k_cc, "phase correction gain"});
            f.push_back({"pipeline.phase_lower", &p.phase_lower, "lower clamp of one phase correction, rad"});
            f.push_back({"pipeline.phase_upper", &p.phase_upper, "upper clamp of one phase correction, rad"});
            f.push_back({"pipeline.lowpass_hz", &p.lowpass_hz, "low-pass cutoff on oscillation-free streams, Hz"});
            f.push_back({"pipeline.max_out_of_order", &p.max_out_of_order, "out-of-order tolerance, s"});
            f.push_back({"pipeline.gp_variance_inflation", &p.gp_variance_inflation, "add pattern variance to the accel noise"});
            f.push_back({"pipeline.record_spectrogram", &p.record_spectrogram, "keep spectra for export"});
            f.push_back({"pipeline.mag_declination", &p.mag_declination, "field declination, rad (ignored when aero_from_sim)"});
            f.push_back({"pipeline.mag_inclination", &p.mag_inclination, "field inclination, rad (ignored when aero_from_sim)"});
            AttitudeNoise& a = p.attitude;
            f.push_back({"pipeline.attitude.gyro", &a.gyro, "gyro noise, rad/s/sqrt(Hz)"});
            f.push_back({"pipeline.attitude.accel", &a.accel, "accel observation noise, m/s^2"});
            f.push_back({"pipeline.attitude.mag", &a.mag, "magnetometer noise, normalized"});
            f.push_back({"pipeline.attitude.bias_walk", &a.bias_walk, "gyro bias random walk"});
            f.push_back({"pipeline.attitude.gate_fraction", &a.gate_fraction, "accel gate on the gravity norm, fraction of g"});
            f.push_back({"pipeline.attitude.max_dyn_accel", &a.max_dyn_accel, "clamp on dynamic acceleration, g"});
            f.push_back({"pipeline.attitude.init_tilt", &a.init_tilt, "initial tilt std, rad"});
            f.push_back({"pipeline.attitude.init_yaw", &a.init_yaw, "initial yaw std, rad"});
            f.push_back({"pipeline.attitude.init_bias", &a.init_bias, "initial gyro bias std, rad/s"});
            f.push_back({"pipeline.attitude.g", &a.g, "gravity, m/s^2"});
            InternalNoise& n = p.internal;
            f.push_back({"pipeline.internal.accel_psd", &n.accel_psd, "process noise on v_bar, (m/s^2)^2/Hz"});
            f.push_back({"pipeline.internal.gps_pos", &n.gps_pos, "GPS position noise, m"});
            f.push_back({"pipeline.internal.gps_vel", &n.gps_vel, "GPS velocity noise, m/s"});
            f.push_back({"pipeline.internal.gate_sigma", &n.gate_sigma, "innovation gate, sigma"});
            f.push_back({"pipeline.internal.init_pos", &n.init_pos, "initial position std, m"});
            f.push_back({"pipeline.internal.init_vel", &n.init_vel, "initial velocity std, m/s"});
            add_aero(f, "pipeline.aero.", p.aero);
            f.push_back({"estimate.aero_from_sim", &c.aero_from_sim, "derive estimator aero and field geometry from the sim section"});
            return f;
        }

        template <typename T>
        T parse_integer(std::string_view text)
        {
            T value{};
            const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
            if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
                throw ParameterError("invalid integer '" + std::string(text) + "'");
            return value;
        }

        std::vector<double> parse_numbers(std::string_view text)
        {
            std::vector<double> out;
            std::istringstream in{std::string(text)};
            std::string token;
            while (in >> token)
            {
                try
                {
                    out.push_back(parse_double(token));
                }
                catch (const DataError& e)
                {
                    throw ParameterError(e.what());
                }
            }
            return out;
        }

        void assign(const Target& target, std::string_view text)
        {
            std::visit(
                [&](auto* p) {
                    using T = std::remove_pointer_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, bool>)
                    {
                        if (text == "true")
                            *p = true;
                        else if (text == "false")
                            *p = false;
                        else
                            throw ParameterError("expected true or false, got '" + std::string(text) + "'");
                    }
                    else if constexpr (std::is_same_v<T, Vector3d>)
                    {
                        const auto v = parse_numbers(text);
                        if (v.size() != 3)
                            throw ParameterError("expected three numbers");
                        *p = Vector3d(v[0], v[1], v[2]);
                    }
                    else if constexpr (std::is_same_v<T, double>)
                    {
                        const auto v = parse_numbers(text);
                        if (v.size() != 1)
                            throw ParameterError("expected one number");
                        *p = v[0];
                    }
                    else
                        *p = parse_integer<T>(text);
                },
                target);
        }

        std::string render(const Target& target)
        {
            return std::visit(
                [](auto* p) -> std::string {
                    using T = std::remove_pointer_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, bool>)
                        return *p ? "true" : "false";
                    else if constexpr (std::is_same_v<T, Vector3d>)
                        return format_double(p->x()) + " " + format_double(p->y()) + " " + format_double(p->z());
                    else if constexpr (std::is_same_v<T, double>)
                        return format_double(*p);
                    else
                        return std::to_string(*p);
                },
                target);
        }

        std::string_view trim(std::string_view s)
        {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
                s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.remove_suffix(1);
            return s;
        }
    } // namespace

    void ConfigBundle::validate() const
    {
        sim.validate();
        pipeline.validate();
    }

    ConfigBundle parse_config(std::istream& in, const std::string& source)
    {
        ConfigBundle config;
        auto table = fields(config);
        std::set<std::string> seen;
        bool gusts_seen = false;
        std::string line;
        long number = 0;
        while (std::getline(in, line))
        {
            ++number;
            std::string_view view = line;
            if (const auto hash = view.find('#'); hash != std::string_view::npos)
                view = view.substr(0, hash);
            view = trim(view);
            if (view.empty())
                continue;
            const auto where = [&] { return source + ":" + std::to_string(number) + ": "; };
            const auto eq = view.find('=');
            if (eq == std::string_view::npos)
                throw ParameterError(where() + "expected key = value");
            const std::string key(trim(view.substr(0, eq)));
            const std::string_view value = trim(view.substr(eq + 1));
            try
            {
                if (key == "sim.gust")
                {
                    if (!gusts_seen)
                        config.sim.gusts.clear();
                    gusts_seen = true;
                    const auto v = parse_numbers(value);
                    if (v.size() != 5)
                        throw ParameterError("gust needs t_start duration wx wy wz");
                    config.sim.gusts.push_back({v[0], v[1], Vector3d(v[2], v[3], v[4])});
                    continue;
                }
                auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
                if (it == table.end())
                    throw ParameterError("unknown key '" + key + "'");
                if (!seen.insert(key).second)
                    throw ParameterError("duplicate key '" + key + "'");
                assign(it->target, value);
            }
            catch (const ParameterError& e)
            {
                throw ParameterError(where() + e.what());
            }
        }
        config.validate();
        return config;
    }

    ConfigBundle load_config(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw ParameterError("cannot open config '" + path + "'");
        return parse_config(in, path);
    }

    void write_config(std::ostream& out, const ConfigBundle& config)
    {
        ConfigBundle copy = config;
        for (const auto& f : fields(copy))
            out << "# " << f.doc << '\n' << f.key << " = " << render(f.target) << '\n';
        out << "# gust events, repeatable: t_start duration wx wy wz (inertial wind at the peak)\n";
        for (const auto& g : copy.sim.gusts)
            out << "sim.gust = " << format_double(g.t_start) << ' ' << format_double(g.duration) << ' ' << format_double(g.wind.x()) << ' '
                << format_double(g.wind.y()) << ' ' << format_double(g.wind.z()) << '\n';
    }

    PipelineConfig effective_pipeline(const ConfigBundle& config)
    {
        PipelineConfig p = config.pipeline;
        if (config.aero_from_sim)
        {
            p.aero = estimator_aero(config.sim, trim_periodic(config.sim));
            p.mag_declination = config.sim.mag_declination;
            p.mag_inclination = config.sim.mag_inclination;
        }
        p.validate();
        return p;
    }
} // namespace flapest
