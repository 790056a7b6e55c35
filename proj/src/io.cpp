// SPDX-License-Identifier: Apache-2.0
#include "flapest/io.hpp"

#include "flapest/attitude_ekf.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace flapest
{
    namespace
    {
        constexpr std::array<std::string_view, 6> kPatternNames = {"accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z"};

        std::string_view trim(std::string_view s)
        {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
                s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.remove_suffix(1);
            return s;
        }

        std::vector<std::string_view> split(std::string_view line)
        {
            std::vector<std::string_view> fields;
            std::size_t start = 0;
            while (true)
            {
                const std::size_t comma = line.find(',', start);
                fields.push_back(trim(line.substr(start, comma - start)));
                if (comma == std::string_view::npos)
                    break;
                start = comma + 1;
            }
            return fields;
        }

        [[noreturn]] void fail(const std::string& source, long line, const std::string& what)
        {
            throw DataError(source + ":" + std::to_string(line) + ": " + what);
        }

        // Reads the header, then calls row(fields, line_number) for each non-empty line.
        template <typename F>
        std::vector<std::string> for_each_row(std::istream& in, const std::string& source, F&& row)
        {
            std::string line;
            long number = 0;
            std::vector<std::string> header;
            while (std::getline(in, line))
            {
                ++number;
                if (number == 1 && line.starts_with("\xEF\xBB\xBF"))
                    line.erase(0, 3);
                if (trim(line).empty())
                    continue;
                if (header.empty())
                {
                    for (auto f : split(line))
                        header.emplace_back(f);
                    continue;
                }
                const auto fields = split(line);
                if (fields.size() != header.size())
                    fail(source, number, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
                try
                {
                    row(fields, number);
                }
                catch (const DataError& e)
                {
                    fail(source, number, e.what());
                }
            }
            if (header.empty())
                throw DataError(source + ": missing header row");
            return header;
        }

        void expect_header(const std::vector<std::string>& got, std::span<const std::string_view> want, const std::string& source)
        {
            bool ok = got.size() == want.size();
            for (std::size_t i = 0; ok && i < want.size(); ++i)
                ok = got[i] == want[i];
            if (!ok)
                throw DataError(source + ":1: unexpected header");
        }

        void put(std::ostream& out, double v)
        {
            out << ',' << format_double(v);
        }

        void put(std::ostream& out, const Vector3d& v)
        {
            put(out, v.x());
            put(out, v.y());
            put(out, v.z());
        }

        constexpr std::array<std::string_view, 5> kLogHeader = {"t_sec", "channel", "v0", "v1", "v2"};
        constexpr std::array<std::string_view, 32> kTruthHeader = {
            "t",  "phase", "u",  "w",  "theta", "q",  "roll", "roll_rate", "yaw",    "px",     "py",     "pz",     "vx",     "vy",     "vz",     "alpha",
            "V",  "C_L",   "C_T", "C_D", "ax",   "ay", "az",   "gx",        "gy",     "gz",     "ax_osc", "ay_osc", "az_osc", "gx_osc", "gy_osc", "gz_osc"};

        template <std::size_t N>
        void write_header(std::ostream& out, const std::array<std::string_view, N>& names)
        {
            for (std::size_t i = 0; i < N; ++i)
                out << (i ? "," : "") << names[i];
            out << '\n';
        }

        Vector3d vec(std::span<const double> v, std::size_t at)
        {
            return {v[at], v[at + 1], v[at + 2]};
        }
    } // namespace

    std::string format_double(double value)
    {
        std::array<char, 32> buf{};
        const auto result = std::to_chars(buf.data(), buf.data() + buf.size(), value);
        return {buf.data(), result.ptr};
    }

    double parse_double(std::string_view text)
    {
        text = trim(text);
        if (!text.empty() && text.front() == '+')
            text.remove_prefix(1);
        double value = 0.0;
        const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
        if (text.empty() || result.ec != std::errc() || result.ptr != text.data() + text.size())
            throw DataError("invalid number '" + std::string(text) + "'");
        return value;
    }

    void write_log(std::ostream& out, std::span<const TimedSample> log)
    {
        write_header(out, kLogHeader);
        for (const auto& s : log)
        {
            out << format_double(s.t) << ',' << to_string(s.channel);
            put(out, s.value);
            out << '\n';
        }
    }

    std::vector<TimedSample> read_log(std::istream& in, const std::string& source)
    {
        std::vector<TimedSample> log;
        std::map<Channel, double> last;
        const auto header = for_each_row(in, source, [&](const std::vector<std::string_view>& f, long) {
            if (f.size() != kLogHeader.size())
                throw DataError("unexpected column count");
            TimedSample s;
            s.t = parse_double(f[0]);
            s.channel = channel_from_string(f[1]);
            s.value = {parse_double(f[2]), parse_double(f[3]), parse_double(f[4])};
            if (!std::isfinite(s.t) || !s.value.allFinite())
                throw DataError("non-finite value");
            auto it = last.find(s.channel);
            if (it != last.end() && s.t < it->second)
                throw DataError("timestamp goes backwards within channel " + std::string(to_string(s.channel)));
            last[s.channel] = s.t;
            log.push_back(s);
        });
        expect_header(header, kLogHeader, source);
        return log;
    }

    void write_truth(std::ostream& out, std::span<const TruthRecord> truth)
    {
        write_header(out, kTruthHeader);
        for (const auto& r : truth)
        {
            out << format_double(r.t);
            for (double v : {r.phase, r.u, r.w, r.theta, r.q, r.roll, r.roll_rate, r.yaw})
                put(out, v);
            put(out, r.position);
            put(out, r.velocity);
            for (double v : {r.alpha, r.V, r.C_L, r.C_T, r.C_D})
                put(out, v);
            put(out, r.accel);
            put(out, r.gyro);
            put(out, r.accel_osc);
            put(out, r.gyro_osc);
            out << '\n';
        }
    }

    std::vector<TruthRecord> read_truth(std::istream& in, const std::string& source)
    {
        std::vector<TruthRecord> truth;
        const auto header = for_each_row(in, source, [&](const std::vector<std::string_view>& f, long) {
            if (f.size() != kTruthHeader.size())
                throw DataError("unexpected column count");
            std::array<double, kTruthHeader.size()> v{};
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = parse_double(f[i]);
            TruthRecord r;
            r.t = v[0];
            r.phase = v[1];
            r.u = v[2];
            r.w = v[3];
            r.theta = v[4];
            r.q = v[5];
            r.roll = v[6];
            r.roll_rate = v[7];
            r.yaw = v[8];
            r.position = vec(v, 9);
            r.velocity = vec(v, 12);
            r.alpha = v[15];
            r.V = v[16];
            r.C_L = v[17];
            r.C_T = v[18];
            r.C_D = v[19];
            r.accel = vec(v, 20);
            r.gyro = vec(v, 23);
            r.accel_osc = vec(v, 26);
            r.gyro_osc = vec(v, 29);
            if (!truth.empty() && r.t < truth.back().t)
                throw DataError("truth timestamps must be non-decreasing");
            truth.push_back(r);
        });
        expect_header(header, kTruthHeader, source);
        return truth;
    }

    CsvTable read_table(std::istream& in, const std::string& source, bool leading_label)
    {
        CsvTable table;
        table.header = for_each_row(in, source, [&](const std::vector<std::string_view>& f, long) {
            std::vector<double> row;
            std::size_t first = 0;
            if (leading_label)
            {
                table.labels.emplace_back(f[0]);
                first = 1;
            }
            for (std::size_t i = first; i < f.size(); ++i)
                row.push_back(parse_double(f[i]));
            table.rows.push_back(std::move(row));
        });
        return table;
    }

    void write_oscillation_free(std::ostream& out, std::span<const PipelineOutput> rows)
    {
        out << "t,ax,ay,az,gx,gy,gz,phase,freq,pattern_id\n";
        for (const auto& r : rows)
        {
            out << format_double(r.t);
            put(out, r.accel_free);
            put(out, r.gyro_free);
            put(out, r.phase);
            put(out, r.freq);
            out << ',' << r.pattern_id << '\n';
        }
    }

    void write_attitude(std::ostream& out, std::span<const PipelineOutput> rows, bool reconstructed)
    {
        out << "t,qw,qx,qy,qz,roll,pitch,yaw\n";
        for (const auto& r : rows)
        {
            const Quaterniond& q = reconstructed ? r.attitude_rec : r.attitude;
            out << format_double(r.t);
            for (double v : {q.w(), q.x(), q.y(), q.z()})
                put(out, v);
            put(out, euler_zyx(q));
            out << '\n';
        }
    }

    void write_trajectory(std::ostream& out, std::span<const PipelineOutput> rows)
    {
        out << "t,p_bar_x,p_bar_y,p_bar_z,v_bar_x,v_bar_y,v_bar_z,p_x,p_y,p_z,v_x,v_y,v_z\n";
        for (const auto& r : rows)
        {
            if (!r.internal_valid)
                continue;
            out << format_double(r.t);
            put(out, r.p_bar);
            put(out, r.v_bar);
            put(out, r.p_rec);
            put(out, r.v_rec);
            out << '\n';
        }
    }

    void write_patterns(std::ostream& out, const PatternSet& patterns, int n_points)
    {
        if (n_points < 1)
            throw ParameterError("pattern grid needs at least one point");
        out << "channel,phi,mean,std\n";
        for (std::size_t c = 0; c < patterns.size(); ++c)
        {
            for (int i = 0; i < n_points; ++i)
            {
                const double phi = kTwoPi<double> * i / n_points;
                const Prediction p = predict(patterns[c], phi);
                out << kPatternNames[c];
                put(out, phi);
                put(out, p.mean);
                put(out, std::sqrt(p.var));
                out << '\n';
            }
        }
    }

    void write_spectrogram(std::ostream& out, std::span<const FrequencyTracker::SpectrogramRow> rows, bool gyro)
    {
        out << "t,bin_freq,magnitude\n";
        for (const auto& r : rows)
        {
            const Spectrum& s = gyro ? r.gyro_y : r.accel_z;
            for (Eigen::Index i = 0; i < s.bin_freqs.size(); ++i)
            {
                out << format_double(r.t);
                put(out, s.bin_freqs[i]);
                put(out, s.magnitudes[i]);
                out << '\n';
            }
        }
    }

    std::ofstream open_output(const std::filesystem::path& path)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw DataError("cannot open '" + path.string() + "' for writing");
        return out;
    }

    std::ifstream open_input(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw DataError("cannot open '" + path.string() + "' for reading");
        return in;
    }
} // namespace flapest
