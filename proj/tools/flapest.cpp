// SPDX-License-Identifier: Apache-2.0
// flapest: simulate, estimate and compare from the command line.

#include "flapest/config.hpp"
#include "flapest/evaluation.hpp"
#include "flapest/io.hpp"
#include "flapest/pipeline.hpp"
#include "flapest/sim.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace flapest;

namespace
{
    enum ExitCode
    {
        ok = 0,
        usage = 1,
        data = 2,
        numeric = 3
    };

    struct Options
    {
        std::string config_path;
        std::optional<std::uint64_t> seed;
        double duration = 60.0;
        std::string out = ".";
        std::string in;
        std::string truth;
    };

    void setup_logging()
    {
        auto logger = spdlog::stderr_logger_st("flapest");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        spdlog::set_level(spdlog::level::warn);
        if (const char* env = std::getenv("FLAPEST_LOG_LEVEL"))
        {
            const std::string level = env;
            if (level == "error")
                spdlog::set_level(spdlog::level::err);
            else if (level == "warn")
                spdlog::set_level(spdlog::level::warn);
            else if (level == "info")
                spdlog::set_level(spdlog::level::info);
            else if (level == "debug")
                spdlog::set_level(spdlog::level::debug);
            else
                throw ParameterError("FLAPEST_LOG_LEVEL must be one of error, warn, info, debug");
        }
    }

    ConfigBundle load(const Options& o)
    {
        ConfigBundle c = o.config_path.empty() ? ConfigBundle{} : load_config(o.config_path);
        if (o.seed)
            c.sim.seed = *o.seed;
        c.validate();
        return c;
    }

    fs::path out_dir(const Options& o)
    {
        fs::path dir(o.out);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
        return dir;
    }

    std::vector<TimedSample> read_log_file(const std::string& path)
    {
        auto in = open_input(path);
        auto log = read_log(in, path);
        bool accel = false, gyro = false;
        for (const auto& s : log)
        {
            accel = accel || s.channel == Channel::accel;
            gyro = gyro || s.channel == Channel::gyro;
        }
        if (!log.empty() && !(accel && gyro))
            throw DataError(path + ": insufficient channels: accel and gyro are required");
        spdlog::info("read {} samples from {}", log.size(), path);
        return log;
    }

    std::vector<TruthRecord> read_truth_file(const std::string& path)
    {
        auto in = open_input(path);
        return read_truth(in, path);
    }

    int cmd_sim(const Options& o)
    {
        if (!(o.duration >= 0.0))
            throw ParameterError("duration must be non-negative");
        const ConfigBundle c = load(o);
        const fs::path dir = out_dir(o);
        spdlog::info("simulating {} s with seed {}", o.duration, c.sim.seed);
        const SimOutput sim = run(c.sim, o.duration);
        auto log = open_output(dir / "log.csv");
        write_log(log, sim.log);
        auto truth = open_output(dir / "truth.csv");
        write_truth(truth, sim.truth);
        spdlog::info("wrote {} log rows and {} truth rows to {}", sim.log.size(), sim.truth.size(), dir.string());
        return ok;
    }

    struct Estimate
    {
        PipelineConfig config;
        std::vector<TimedSample> log;
        Pipeline pipeline;
        std::vector<PipelineOutput> outputs;
    };

    Estimate estimate(const ConfigBundle& c, const std::string& in_path, bool spectrogram)
    {
        Estimate e;
        e.config = effective_pipeline(c);
        e.config.record_spectrogram = e.config.record_spectrogram || spectrogram;
        e.log = read_log_file(in_path);
        e.pipeline = Pipeline(e.config);
        e.outputs = run_pipeline(e.pipeline, e.log);
        const auto& n = e.pipeline.counters();
        spdlog::info("{} ticks, {} refits, {} dropped, {} accel gated, {} gps gated", n.ticks, n.refits, n.dropped_samples, n.accel_gated, n.gps_gated);
        if (n.dropped_samples > 0)
            spdlog::warn("dropped {} out-of-order samples", n.dropped_samples);
        return e;
    }

    void report_metrics(const ConfigBundle& c, const Estimate& e, const std::vector<TruthRecord>& truth, const fs::path& dir)
    {
        if (e.outputs.empty())
            throw DataError("no estimator output to compare");
        const auto methods = attitude_methods(e.outputs, e.log, e.config);
        const auto reference = reference_euler(e.outputs, truth, c.sim.f_flap);
        const double t_start = std::min(10.0, 0.5 * (e.outputs.front().t + e.outputs.back().t));
        const auto rows = attitude_errors(methods, e.outputs, reference, t_start);
        std::cout << format_table(rows);
        auto csv = open_output(dir / "metrics.csv");
        csv << format_csv(rows);
    }

    int cmd_estimate(const Options& o)
    {
        const ConfigBundle c = load(o);
        const fs::path dir = out_dir(o);
        const Estimate e = estimate(c, o.in, true);
        {
            auto f = open_output(dir / "oscillation_free.csv");
            write_oscillation_free(f, e.outputs);
        }
        {
            auto f = open_output(dir / "attitude.csv");
            write_attitude(f, e.outputs);
            auto g = open_output(dir / "attitude_reconstructed.csv");
            write_attitude(g, e.outputs, true);
        }
        {
            auto f = open_output(dir / "trajectory.csv");
            write_trajectory(f, e.outputs);
        }
        {
            auto f = open_output(dir / "patterns.csv");
            write_patterns(f, e.pipeline.patterns());
            auto az = open_output(dir / "spectrogram_az.csv");
            write_spectrogram(az, e.pipeline.frequency_tracker().spectrogram(), false);
            auto wy = open_output(dir / "spectrogram_wy.csv");
            write_spectrogram(wy, e.pipeline.frequency_tracker().spectrogram(), true);
        }
        if (!o.truth.empty())
            report_metrics(c, e, read_truth_file(o.truth), dir);
        return ok;
    }

    int cmd_compare(const Options& o)
    {
        if (o.truth.empty())
            throw DataError("compare needs --truth");
        const ConfigBundle c = load(o);
        const fs::path dir = out_dir(o);
        const auto truth = read_truth_file(o.truth);
        const Estimate e = estimate(c, o.in, false);
        report_metrics(c, e, truth, dir);
        return ok;
    }

    int cmd_config(const Options& o)
    {
        write_config(std::cout, load(o));
        return ok;
    }
} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Flapping-wing state estimation: simulate, estimate, compare"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override sim.seed");
    };

    auto* sim = app.add_subcommand("sim", "simulate a flight; writes log.csv and truth.csv");
    common(sim);
    sim->add_option("--duration", o.duration, "seconds")->capture_default_str();
    sim->add_option("--out", o.out, "output directory")->capture_default_str();

    auto* est = app.add_subcommand("estimate", "run the estimator over a log");
    common(est);
    est->add_option("--in", o.in, "sensor log CSV")->required();
    est->add_option("--out", o.out, "output directory")->capture_default_str();
    est->add_option("--truth", o.truth, "truth CSV; prints attitude metrics when given");

    auto* cmp = app.add_subcommand("compare", "attitude error of the proposed filter and the baselines");
    common(cmp);
    cmp->add_option("--in", o.in, "sensor log CSV")->required();
    cmp->add_option("--truth", o.truth, "truth CSV")->required();
    cmp->add_option("--out", o.out, "directory for metrics.csv")->capture_default_str();

    auto* cfg = app.add_subcommand("config", "print the effective configuration with defaults");
    common(cfg);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try
    {
        setup_logging();
        if (*sim)
            return cmd_sim(o);
        if (*est)
            return cmd_estimate(o);
        if (*cmp)
            return cmd_compare(o);
        return cmd_config(o);
    }
    catch (const ParameterError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    }
    catch (const DataError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return data;
    }
    catch (const NumericError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return numeric;
    }
}
