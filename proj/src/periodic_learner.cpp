// SPDX-License-Identifier: Apache-2.0
#include "flapest/periodic_learner.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <limits>
#include <numeric>

namespace flapest
{
    std::pair<VectorXd, double> detrend(const VectorXd& y)
    {
        if (y.size() == 0)
            throw DataError("detrend: empty input");
        const double mean = y.mean();
        return {(y.array() - mean).matrix(), mean};
    }

    MatrixXd kernel_matrix(const VectorXd& phis_a, const VectorXd& phis_b, int n_harm)
    {
        MatrixXd k(phis_a.size(), phis_b.size());
        for (Eigen::Index i = 0; i < phis_a.size(); ++i)
            for (Eigen::Index j = 0; j < phis_b.size(); ++j)
                k(i, j) = kernel(phis_a[i], phis_b[j], n_harm);
        return k;
    }

    namespace
    {
        int nearest_centroid(double phi, const VectorXd& centroids)
        {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < centroids.size(); ++c)
            {
                const double d = cosine_distance(phi, centroids[c]);
                if (d < best_d)
                {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            return best;
        }

        std::vector<int> assign(std::span<const double> phases, const VectorXd& centroids)
        {
            std::vector<int> labels(phases.size());
            for (std::size_t i = 0; i < phases.size(); ++i)
                labels[i] = nearest_centroid(phases[i], centroids);
            return labels;
        }

        double member_cost(std::span<const double> phases, std::span<const int> labels, int cluster, double centroid)
        {
            double cost = 0.0;
            for (std::size_t i = 0; i < phases.size(); ++i)
                if (labels[i] == cluster)
                    cost += cosine_distance(phases[i], centroid);
            return cost;
        }
    } // namespace

    double cluster_cost(std::span<const double> phases, const VectorXd& centroids, std::span<const int> labels)
    {
        double cost = 0.0;
        for (std::size_t i = 0; i < phases.size(); ++i)
            cost += cosine_distance(phases[i], centroids[labels[i]]);
        return cost;
    }

    ClusterSet kmeans_phases(std::span<const double> phases, int k, int max_iter)
    {
        if (k < 1)
            throw ParameterError("kmeans: k must be positive");
        if (phases.size() < static_cast<std::size_t>(k))
            throw DataError("kmeans: fewer samples than clusters");

        ClusterSet out;
        out.k = k;
        out.centroids.resize(k);
        for (int c = 0; c < k; ++c)
            out.centroids[c] = kTwoPi<double> * c / k;

        std::vector<double> wrapped(phases.size());
        std::transform(phases.begin(), phases.end(), wrapped.begin(), [](double p) { return wrap_two_pi(p); });

        std::vector<int> labels = assign(wrapped, out.centroids);
        out.cost_history.push_back(cluster_cost(wrapped, out.centroids, labels));

        int iter = 0;
        while (iter < max_iter)
        {
            ++iter;
            VectorXd next = out.centroids;
            std::vector<int> counts(k, 0);
            std::vector<double> sum_sin(k, 0.0), sum_cos(k, 0.0);
            for (std::size_t i = 0; i < wrapped.size(); ++i)
            {
                ++counts[labels[i]];
                sum_sin[labels[i]] += std::sin(wrapped[i]);
                sum_cos[labels[i]] += std::cos(wrapped[i]);
            }
            for (int c = 0; c < k; ++c)
            {
                if (counts[c] == 0)
                    continue;
                const double resultant = std::hypot(sum_sin[c], sum_cos[c]);
                if (resultant < 1e-12 * counts[c])
                    continue;
                const double candidate = wrap_two_pi(std::atan2(sum_sin[c], sum_cos[c]));
                if (member_cost(wrapped, labels, c, candidate) <= member_cost(wrapped, labels, c, out.centroids[c]))
                    next[c] = candidate;
            }

            // Re-seed empty clusters from the outskirts of the largest one.
            std::vector<bool> used(wrapped.size(), false);
            for (int c = 0; c < k; ++c)
            {
                if (counts[c] != 0)
                    continue;
                const int largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
                double far_d = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < wrapped.size(); ++i)
                {
                    if (labels[i] != largest || used[i])
                        continue;
                    const double d = cosine_distance(wrapped[i], next[largest]);
                    if (d > far_d)
                    {
                        far_d = d;
                        far_i = i;
                    }
                }
                if (far_d >= 0.0)
                {
                    used[far_i] = true;
                    next[c] = wrapped[far_i];
                }
            }

            std::vector<int> next_labels = assign(wrapped, next);
            out.centroids = next;
            out.cost_history.push_back(cluster_cost(wrapped, out.centroids, next_labels));
            const bool fixpoint = next_labels == labels;
            labels = std::move(next_labels);
            if (fixpoint)
                break;
        }
        out.iterations = iter;
        out.labels = std::move(labels);
        out.counts = Eigen::VectorXi::Zero(k);
        for (int l : out.labels)
            ++out.counts[l];
        return out;
    }

    ClusterSet summarize_clusters(const ClusterSet& clustering, std::span<const double> values)
    {
        if (values.size() != clustering.labels.size())
            throw DataError("summarize_clusters: value count does not match labels");
        ClusterSet out = clustering;
        const int k = clustering.k;
        out.means = VectorXd::Zero(k);
        out.variances = VectorXd::Zero(k);
        out.counts = Eigen::VectorXi::Zero(k);
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            const int c = clustering.labels[i];
            ++out.counts[c];
            out.means[c] += values[i];
        }
        for (int c = 0; c < k; ++c)
            if (out.counts[c] > 0)
                out.means[c] /= out.counts[c];
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            const int c = clustering.labels[i];
            const double d = values[i] - out.means[c];
            out.variances[c] += d * d;
        }
        for (int c = 0; c < k; ++c)
            if (out.counts[c] > 0)
                out.variances[c] /= out.counts[c];
        return out;
    }

    ClusterSet kmeans_fit(std::span<const PhaseSample> samples, int k, int max_iter)
    {
        std::vector<double> phases(samples.size()), values(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            phases[i] = samples[i].phi;
            values[i] = samples[i].y;
        }
        return summarize_clusters(kmeans_phases(phases, k, max_iter), values);
    }

    PeriodicPattern zero_pattern(int n_harm)
    {
        if (n_harm < 1)
            throw ParameterError("pattern: n_harm must be >= 1");
        PeriodicPattern p;
        p.n_harm = n_harm;
        p.coeffs = VectorXd::Zero(2 * n_harm);
        p.feature_cov = MatrixXd::Zero(2 * n_harm, 2 * n_harm);
        return p;
    }

    PeriodicPattern fit_exact(const VectorXd& phis, const VectorXd& y, int n_harm, double sigma_n2, const FitOptions& options)
    {
        if (n_harm < 1)
            throw ParameterError("fit: n_harm must be >= 1");
        if (phis.size() == 0 || phis.size() != y.size())
            throw DataError("fit: training phases and targets must be non-empty and aligned");
        if (!(sigma_n2 >= 0.0))
            throw ParameterError("fit: noise variance must be non-negative");

        const Eigen::Index n = phis.size();
        const MatrixXd k = kernel_matrix(phis, phis, n_harm);
        double s2 = sigma_n2;
        Eigen::LLT<MatrixXd> llt;
        for (int step = 0;; ++step)
        {
            llt.compute(k + s2 * MatrixXd::Identity(n, n));
            const bool ok = llt.info() == Eigen::Success && llt.rcond() > 0.0 && 1.0 / llt.rcond() <= options.max_condition;
            if (ok)
                break;
            if (step >= options.max_jitter_steps)
                throw NumericError("fit: kernel system is ill-conditioned");
            const double base = std::max(options.absolute_floor, 1e-12 * k.diagonal().mean());
            s2 = std::max(10.0 * s2, base);
        }

        PeriodicPattern p;
        p.train_phis = phis;
        p.n_harm = n_harm;
        p.sigma_n2 = s2;
        p.weights = llt.solve(y);
        // one step of iterative refinement
        const MatrixXd a = k + s2 * MatrixXd::Identity(n, n);
        p.weights += llt.solve(y - a * p.weights);

        MatrixXd features(2 * n_harm, n);
        for (Eigen::Index i = 0; i < n; ++i)
            features.col(i) = fourier_features(phis[i], n_harm);
        p.coeffs = 2.0 * features * p.weights;
        const MatrixXd x = llt.matrixL().solve(features.transpose());
        p.feature_cov = 2.0 * MatrixXd::Identity(2 * n_harm, 2 * n_harm) - 4.0 * x.transpose() * x;
        return p;
    }

    PeriodicPattern fit(const ClusterSet& clusters, int n_harm, const FitOptions& options)
    {
        std::vector<Eigen::Index> occupied;
        for (Eigen::Index c = 0; c < clusters.counts.size(); ++c)
            if (clusters.counts[c] > 0)
                occupied.push_back(c);
        if (occupied.empty() || clusters.means.size() != clusters.centroids.size())
            throw DataError("fit: no populated clusters");

        VectorXd phis(static_cast<Eigen::Index>(occupied.size()));
        VectorXd means(phis.size());
        double within = 0.0;
        double total_count = 0.0;
        for (Eigen::Index i = 0; i < phis.size(); ++i)
        {
            const auto c = occupied[static_cast<std::size_t>(i)];
            phis[i] = clusters.centroids[c];
            means[i] = clusters.means[c];
            within += clusters.variances[c];
        }
        auto [y_osc, removed] = detrend(means);

        // Output variance by the law of total variance, for the noise floor.
        double output_var = 0.0;
        for (Eigen::Index i = 0; i < phis.size(); ++i)
        {
            const auto c = occupied[static_cast<std::size_t>(i)];
            const double w = clusters.counts[c];
            output_var += w * (clusters.variances[c] + y_osc[i] * y_osc[i]);
            total_count += w;
        }
        output_var /= total_count;

        const double noise = within / static_cast<double>(phis.size());
        const double floor = std::max(options.absolute_floor, options.noise_floor_ratio * output_var);
        PeriodicPattern p = fit_exact(phis, y_osc, n_harm, std::max(noise, floor), options);
        p.removed_mean = removed;
        return p;
    }

    Prediction predict(const PeriodicPattern& pattern, double phi_star)
    {
        if (!pattern.fitted())
            throw DataError("predict: pattern is not fitted");
        const VectorXd f = fourier_features(phi_star, pattern.n_harm);
        const double var = f.dot(pattern.feature_cov * f);
        return {pattern.coeffs.dot(f), std::max(var, 0.0)};
    }

    Harmonic harmonic(const PeriodicPattern& pattern, int j)
    {
        if (j < 1 || j > pattern.n_harm || !pattern.fitted())
            return {};
        const double bs = pattern.coeffs[2 * j - 2];
        const double bc = pattern.coeffs[2 * j - 1];
        return {std::hypot(bs, bc), std::atan2(bc, bs)};
    }

    double integrate_pattern(const PeriodicPattern& pattern, double phi, double f, int order)
    {
        if (!pattern.fitted())
            return 0.0;
        if (!(f > 0.0))
            throw ParameterError("integrate_pattern: frequency must be positive");
        const double omega = kTwoPi<double> * f;
        double acc = 0.0;
        for (int j = 1; j <= pattern.n_harm; ++j)
        {
            const double bs = pattern.coeffs[2 * j - 2];
            const double bc = pattern.coeffs[2 * j - 1];
            const double s = std::sin(j * phi);
            const double c = std::cos(j * phi);
            const double w = omega * j;
            if (order == 1)
                acc += (-bs * c + bc * s) / w;
            else if (order == 2)
                acc += -(bs * s + bc * c) / (w * w);
            else
                throw ParameterError("integrate_pattern: order must be 1 or 2");
        }
        return acc;
    }
} // namespace flapest
