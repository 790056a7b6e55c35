// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flapest/types.hpp"

#include <span>
#include <vector>

namespace flapest
{
    /// A channel value observed at a flapping phase.
    struct PhaseSample
    {
        double phi = 0.0;
        double y = 0.0;
    };

    /// Zero-mean part of Y and the removed mean. Throws DataError when empty.
    std::pair<VectorXd, double> detrend(const VectorXd& y);

    /// Half-angle cosine distance 1 - cos(wrap_pi(a - b) / 2), in [0, 1].
    template <typename Scalar>
    Scalar cosine_distance(Scalar phi_a, Scalar phi_b)
    {
        return Scalar(1) - std::cos(wrap_pi(phi_a - phi_b) / Scalar(2));
    }

    /// [sin phi, cos phi, ..., sin n phi, cos n phi].
    template <typename Scalar>
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fourier_features(Scalar phi, int n_harm)
    {
        if (n_harm < 1)
            throw ParameterError("fourier_features: n_harm must be >= 1");
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f(2 * n_harm);
        for (int j = 1; j <= n_harm; ++j)
        {
            f[2 * j - 2] = std::sin(Scalar(j) * phi);
            f[2 * j - 1] = std::cos(Scalar(j) * phi);
        }
        return f;
    }

    /// Reproducing kernel of the truncated Fourier space:
    /// 2 F(a)^T F(b) = 2 sum_j cos(j (a - b)).
    template <typename Scalar>
    Scalar kernel(Scalar phi_a, Scalar phi_b, int n_harm)
    {
        if (n_harm < 1)
            throw ParameterError("kernel: n_harm must be >= 1");
        const Scalar d = wrap_pi(phi_a - phi_b);
        Scalar acc(0);
        for (int j = 1; j <= n_harm; ++j)
            acc += std::cos(Scalar(j) * d);
        return Scalar(2) * acc;
    }

    /// Gram matrix K_ij = kernel(a_i, b_j).
    MatrixXd kernel_matrix(const VectorXd& phis_a, const VectorXd& phis_b, int n_harm);

    /// Outcome of clustering phases on the circle.
    struct ClusterSet
    {
        int k = 0;
        VectorXd centroids;
        VectorXd means;
        VectorXd variances;
        Eigen::VectorXi counts;
        std::vector<int> labels; ///< per input sample
        std::vector<double> cost_history; ///< clustering cost after each iteration
        int iterations = 0;

        [[nodiscard]] double cost() const { return cost_history.empty() ? 0.0 : cost_history.back(); }
    };

    /// Clustering cost: sum of cosine distances from each phase to its centroid.
    double cluster_cost(std::span<const double> phases, const VectorXd& centroids, std::span<const int> labels);

    /// Lloyd iterations on the circle under cosine_distance.
    ///
    /// Centroids start uniformly spaced on [0, 2pi) and move to the circular mean
    /// of their members (a move that would raise the cost is skipped). An empty
    /// cluster is re-seeded at the member of the largest cluster farthest from
    /// that cluster's centroid. Stops at an assignment fixpoint or after
    /// max_iter iterations. Output statistics are left empty.
    ClusterSet kmeans_phases(std::span<const double> phases, int k, int max_iter = 50);

    /// Per-cluster output means, population variances and counts for one channel
    /// given the labels of kmeans_phases.
    ClusterSet summarize_clusters(const ClusterSet& clustering, std::span<const double> values);

    /// kmeans_phases followed by summarize_clusters. Throws DataError when there
    /// are fewer samples than clusters.
    ClusterSet kmeans_fit(std::span<const PhaseSample> samples, int k, int max_iter = 50);

    /// Learned zero-mean periodic function of phase for one channel.
    struct PeriodicPattern
    {
        VectorXd train_phis;
        VectorXd weights;
        double removed_mean = 0.0;
        int n_harm = 5;
        double sigma_n2 = 0.0;

        // Derived at fit time: the posterior mean is coeffs^T F(phi) and the
        // posterior variance F(phi)^T feature_cov F(phi).
        VectorXd coeffs;
        MatrixXd feature_cov;

        [[nodiscard]] bool fitted() const { return coeffs.size() == 2 * n_harm; }
    };

    /// A pattern that predicts zero everywhere with unit-free zero variance.
    PeriodicPattern zero_pattern(int n_harm);

    struct FitOptions
    {
        double noise_floor_ratio = 1e-6; ///< sigma_n^2 floor relative to the output variance
        double absolute_floor = 1e-12;
        double max_condition = 1e12;
        int max_jitter_steps = 8;
    };

    /// GP fit on cluster centroids and detrended cluster means.
    ///
    /// sigma_n^2 is the mean per-cluster variance, floored; weights solve
    /// (K + sigma_n^2 I) w = Y_osc through a Cholesky factorisation. If the
    /// system is too ill-conditioned, sigma_n^2 is raised tenfold per step and
    /// NumericError is thrown once the steps run out.
    PeriodicPattern fit(const ClusterSet& clusters, int n_harm, const FitOptions& options = {});

    /// Same solve with an explicit noise variance (no flooring).
    PeriodicPattern fit_exact(const VectorXd& phis, const VectorXd& y, int n_harm, double sigma_n2, const FitOptions& options = {});

    struct Prediction
    {
        double mean = 0.0;
        double var = 0.0;
    };

    /// Posterior mean and variance at phi_star (variance clipped at zero).
    Prediction predict(const PeriodicPattern& pattern, double phi_star);

    /// Oscillation-free value: raw minus the pattern's posterior mean.
    inline double subtract_pattern(double raw, const PeriodicPattern& pattern, double phi)
    {
        return raw - predict(pattern, phi).mean;
    }

    /// Amplitude and phase of harmonic j of the posterior mean, written as
    /// amplitude * sin(j phi + phase).
    struct Harmonic
    {
        double amplitude = 0.0;
        double phase = 0.0;
    };
    Harmonic harmonic(const PeriodicPattern& pattern, int j);

    /// Periodic time integral of the posterior mean at flapping frequency f:
    /// each a sin(j phi + c) becomes -a / (2 pi f j) cos(j phi + c).
    /// order 2 integrates twice. Every term is zero-mean over the cycle.
    double integrate_pattern(const PeriodicPattern& pattern, double phi, double f, int order = 1);
} // namespace flapest
