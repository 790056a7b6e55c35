// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/evaluation.hpp"
#include "flapest/pipeline.hpp"
#include "flapest/sim.hpp"

#include <complex>
#include <vector>

namespace flapest::testing
{
    /// The default simulator flight fed through a pipeline configured for it.
    struct Scenario
    {
        SimConfig sim;
        SimOutput flight;
        PipelineConfig config;
        std::vector<PipelineOutput> outputs;
        PipelineCounters counters;
        double sim_seconds = 0.0;
        double pipeline_seconds = 0.0;
    };

    Scenario make_scenario(const SimConfig& sim, double duration);
    /// 60 s nominal flight, computed once per process.
    const Scenario& nominal();

    PipelineConfig pipeline_for(const SimConfig& sim, const TrimResult& trim);

    /// O(n^2) DFT straight from the definition.
    std::vector<std::complex<double>> naive_dft(const std::vector<double>& x);

    /// Oscillatory pitch, in rad, at every output tick: truth minus its
    /// centered cycle average.
    VectorXd true_pitch_oscillation(const Scenario& s);
} // namespace flapest::testing
