// SPDX-License-Identifier: Apache-2.0
#include "flapest/config.hpp"
#include "flapest/io.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <sstream>

using namespace flapest;

namespace
{
    const flapest::testing::Scenario& flight()
    {
        static const auto s = [] {
            SimConfig c;
            return flapest::testing::make_scenario(c, 6.0);
        }();
        return s;
    }

    std::string message_of(const std::function<void()>& f)
    {
        try
        {
            f();
        }
        catch (const Error& e)
        {
            return e.what();
        }
        return {};
    }
} // namespace

TEST(Numbers, FormatParseRoundTrip)
{
    for (double v : {0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 5e-324})
        EXPECT_EQ(parse_double(format_double(v)), v);
    EXPECT_EQ(parse_double(" +1.5 "), 1.5);
    EXPECT_THROW(parse_double(""), DataError);
    EXPECT_THROW(parse_double("1.5x"), DataError);
    EXPECT_THROW(parse_double("abc"), DataError);
}

TEST(LogCsv, RoundTripIsLossless)
{
    const auto& log = flight().flight.log;
    std::stringstream s;
    write_log(s, log);
    EXPECT_EQ(read_log(s), log);
}

TEST(LogCsv, ErrorsNameTheLine)
{
    std::istringstream bad_number("t_sec,channel,v0,v1,v2\n0,accel,1,2,3\n0.1,gyro,1,x,3\n");
    EXPECT_EQ(message_of([&] { read_log(bad_number, "f.csv"); }), "f.csv:3: invalid number 'x'");
    std::istringstream bad_channel("t_sec,channel,v0,v1,v2\n0,baro,1,2,3\n");
    EXPECT_TRUE(message_of([&] { read_log(bad_channel, "f.csv"); }).starts_with("f.csv:2: "));
    std::istringstream short_row("t_sec,channel,v0,v1,v2\n0,accel,1,2\n");
    EXPECT_TRUE(message_of([&] { read_log(short_row, "f.csv"); }).starts_with("f.csv:2: "));
    std::istringstream backwards("t_sec,channel,v0,v1,v2\n1,accel,1,2,3\n0.5,gyro,1,2,3\n0.9,accel,1,2,3\n");
    EXPECT_TRUE(message_of([&] { read_log(backwards, "f.csv"); }).starts_with("f.csv:4: "));
    std::istringstream nonfinite("t_sec,channel,v0,v1,v2\n0,accel,nan,2,3\n");
    EXPECT_THROW(read_log(nonfinite), DataError);
    std::istringstream wrong_header("time,channel,v0,v1,v2\n");
    EXPECT_THROW(read_log(wrong_header), DataError);
    std::istringstream empty("");
    EXPECT_THROW(read_log(empty), DataError);
}

TEST(LogCsv, ToleratesBomAndCrlf)
{
    std::istringstream in("\xEF\xBB\xBFt_sec,channel,v0,v1,v2\r\n0.5,mag,1,2,3\r\n");
    const auto log = read_log(in);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log[0].channel, Channel::mag);
    EXPECT_EQ(log[0].value, Vector3d(1, 2, 3));
}

TEST(TruthCsv, RoundTripIsLossless)
{
    const auto& truth = flight().flight.truth;
    std::stringstream s;
    write_truth(s, truth);
    const auto back = read_truth(s);
    ASSERT_EQ(back.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); i += 97)
    {
        EXPECT_EQ(back[i].t, truth[i].t);
        EXPECT_EQ(back[i].theta, truth[i].theta);
        EXPECT_EQ(back[i].position, truth[i].position);
        EXPECT_EQ(back[i].accel_osc, truth[i].accel_osc);
        EXPECT_EQ(back[i].gyro_osc, truth[i].gyro_osc);
        EXPECT_EQ(back[i].C_D, truth[i].C_D);
    }
}

TEST(OutputCsv, EveryFileReparses)
{
    const auto& s = flight();
    Pipeline p(s.config);
    const auto out = run_pipeline(p, s.flight.log);
    const auto check = [](const std::string& text, std::size_t columns, bool label) {
        std::istringstream in(text);
        const CsvTable t = read_table(in, "out", label);
        EXPECT_EQ(t.header.size(), columns);
        EXPECT_FALSE(t.rows.empty());
        for (const auto& r : t.rows)
            EXPECT_EQ(r.size() + (label ? 1 : 0), columns);
        return t;
    };
    std::ostringstream a, b, c, d, e;
    write_oscillation_free(a, out);
    const auto free = check(a.str(), 10, false);
    EXPECT_EQ(free.rows.size(), out.size());
    write_attitude(b, out, true);
    check(b.str(), 8, false);
    write_trajectory(c, out);
    check(c.str(), 13, false);
    write_patterns(d, p.patterns(), 32);
    const auto pats = check(d.str(), 4, true);
    EXPECT_EQ(pats.rows.size(), 6u * 32u);
    EXPECT_EQ(pats.labels.front(), "accel_x");
    EXPECT_EQ(pats.labels.back(), "gyro_z");
    std::ostringstream spec;
    FrequencyTracker ft(FrequencyTrackerConfig{200.0, 512, 32, 1.0, 8.0, 1.0, true});
    for (const auto& o : out)
        ft.push(o.t, o.accel_raw.z(), o.gyro_raw.y());
    write_spectrogram(spec, ft.spectrogram(), true);
    const auto sp = check(spec.str(), 3, false);
    EXPECT_EQ(sp.rows.size(), ft.spectrogram().size() * 257u);
}

TEST(Config, DefaultRoundTrip)
{
    const ConfigBundle c;
    std::stringstream s;
    write_config(s, c);
    EXPECT_TRUE(parse_config(s) == c);
}

TEST(Config, ModifiedRoundTrip)
{
    ConfigBundle c;
    c.sim.seed = 123456789012345ULL;
    c.sim.f_flap = 4.2;
    c.sim.accel_bias = Vector3d(0.1, 0.2, 1.0 / 3.0);
    c.sim.gusts = {{10.0, 2.0, Vector3d(0.0, 3.0, -1.0)}, {30.0, 0.5, Vector3d(1, 1, 1)}};
    c.pipeline.k_clusters = 12;
    c.pipeline.gp_variance_inflation = true;
    c.pipeline.attitude.accel = 0.7;
    c.aero_from_sim = false;
    std::stringstream s;
    write_config(s, c);
    const ConfigBundle back = parse_config(s);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(back.sim.gusts.size(), 2u);
}

TEST(Config, PartialFileKeepsDefaults)
{
    std::istringstream in("# flight\nsim.seed = 9   # trailing comment\n\nsim.gust = 5 1 0 2 0\n");
    const ConfigBundle c = parse_config(in);
    EXPECT_EQ(c.sim.seed, 9u);
    ASSERT_EQ(c.sim.gusts.size(), 1u);
    EXPECT_EQ(c.sim.gusts[0].wind, Vector3d(0, 2, 0));
    EXPECT_EQ(c.pipeline, PipelineConfig{});
}

TEST(Config, Errors)
{
    std::istringstream unknown("sim.seed = 1\nsim.sed = 2\n");
    EXPECT_EQ(message_of([&] { parse_config(unknown, "c.ini"); }), "c.ini:2: unknown key 'sim.sed'");
    std::istringstream dup("sim.seed = 1\n\nsim.seed = 2\n");
    EXPECT_EQ(message_of([&] { parse_config(dup, "c.ini"); }), "c.ini:3: duplicate key 'sim.seed'");
    std::istringstream no_eq("sim.seed 1\n");
    EXPECT_THROW(parse_config(no_eq), ParameterError);
    std::istringstream bad_value("pipeline.k_clusters = many\n");
    EXPECT_THROW(parse_config(bad_value), ParameterError);
    std::istringstream bad_gust("sim.gust = 1 2 3\n");
    EXPECT_THROW(parse_config(bad_gust), ParameterError);
    std::istringstream invalid("sim.dt = 0.5\n");
    EXPECT_THROW(parse_config(invalid), ParameterError);
    EXPECT_THROW(load_config("/nonexistent/flapest.ini"), ParameterError);
}

TEST(Config, EffectivePipelineUsesSimulatorAero)
{
    ConfigBundle c;
    const PipelineConfig p = effective_pipeline(c);
    EXPECT_NE(p.aero.C_L_alpha, c.pipeline.aero.C_L_alpha);
    EXPECT_EQ(p.mag_inclination, c.sim.mag_inclination);
    c.aero_from_sim = false;
    EXPECT_EQ(effective_pipeline(c), c.pipeline);
}
