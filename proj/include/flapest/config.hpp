// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/pipeline.hpp"
#include "flapest/sim.hpp"

#include <iosfwd>
#include <string>
#include <string_view>

namespace flapest
{
    /// Everything a command can be configured with.
    struct ConfigBundle
    {
        SimConfig sim;
        PipelineConfig pipeline;
        /// Derive the estimator's lift slope and zero-lift drag from the
        /// simulator's trimmed orbit instead of using pipeline.aero.*.
        bool aero_from_sim = true;

        void validate() const;
        friend bool operator==(const ConfigBundle&, const ConfigBundle&) = default;
    };

    /// Flat `key = value` text. `#` starts a comment; vectors are three
    /// space-separated numbers; `sim.gust = t_start duration wx wy wz` may
    /// repeat. Unknown keys, bad values and duplicates raise ParameterError
    /// naming the line.
    ConfigBundle parse_config(std::istream& in, const std::string& source = "config");
    ConfigBundle load_config(const std::string& path);

    /// Every key with its current value, each preceded by a one-line
    /// description. parse_config(write_config(c)) == c.
    void write_config(std::ostream& out, const ConfigBundle& config);

    /// Estimator configuration for a run: applies aero_from_sim and copies
    /// the magnetic field geometry from the simulator section.
    PipelineConfig effective_pipeline(const ConfigBundle& config);
} // namespace flapest
