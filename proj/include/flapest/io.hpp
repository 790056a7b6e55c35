// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/freq_tracker.hpp"
#include "flapest/internal_model.hpp"
#include "flapest/pipeline.hpp"
#include "flapest/sim.hpp"
#include "flapest/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace flapest
{
    /// Shortest decimal text that parses back to exactly the same double.
    std::string format_double(double value);

    /// Strict decimal parse of a whole field; throws DataError otherwise.
    double parse_double(std::string_view text);

    /// Sensor log CSV: header `t_sec,channel,v0,v1,v2`. Rows may interleave
    /// channels but each channel must be non-decreasing in time.
    void write_log(std::ostream& out, std::span<const TimedSample> log);
    /// Throws DataError naming the source and line for any malformed row.
    std::vector<TimedSample> read_log(std::istream& in, const std::string& source = "log");

    void write_truth(std::ostream& out, std::span<const TruthRecord> truth);
    std::vector<TruthRecord> read_truth(std::istream& in, const std::string& source = "truth");

    /// Header plus numeric rows; every emitted output CSV parses with this.
    /// A leading text column (patterns.csv) is kept in `labels`.
    struct CsvTable
    {
        std::vector<std::string> header;
        std::vector<std::string> labels;
        std::vector<std::vector<double>> rows;
    };
    CsvTable read_table(std::istream& in, const std::string& source = "csv", bool leading_label = false);

    void write_oscillation_free(std::ostream& out, std::span<const PipelineOutput> rows);
    /// Columns t, qw, qx, qy, qz, roll, pitch, yaw; `reconstructed` selects
    /// the oscillation-restored attitude instead of the internal one.
    void write_attitude(std::ostream& out, std::span<const PipelineOutput> rows, bool reconstructed = false);
    void write_trajectory(std::ostream& out, std::span<const PipelineOutput> rows);
    /// Mean and standard deviation of each channel's pattern on an n-point phase grid.
    void write_patterns(std::ostream& out, const PatternSet& patterns, int n_points = 256);
    /// Rows (t, bin_freq, magnitude); `gyro` selects omega_y instead of a_z.
    void write_spectrogram(std::ostream& out, std::span<const FrequencyTracker::SpectrogramRow> rows, bool gyro);

    /// Opens a file for writing or reading; failures raise DataError with the path.
    std::ofstream open_output(const std::filesystem::path& path);
    std::ifstream open_input(const std::filesystem::path& path);
} // namespace flapest
