#pragma once

#include <cstdint>
#include <vector>

namespace percept {

/// Univariate Gaussian mixture: K weighted normal components.
///
/// Invariants are enforced at construction: weights non-negative and summing
/// to one (1e-9 tolerance), standard deviations strictly positive, all three
/// parameter lists of equal length K >= 1. Instances are immutable, so every
/// operation on them is safe to call concurrently.
class GaussianMixture {
public:
    GaussianMixture(std::vector<double> weights,
                    std::vector<double> means,
                    std::vector<double> stds);

    int size() const { return static_cast<int>(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& means() const { return means_; }
    const std::vector<double>& stds() const { return stds_; }

private:
    std::vector<double> weights_;
    std::vector<double> means_;
    std::vector<double> stds_;
};

struct ModeResult {
    int index;
    double value;
};

/// log p(y), evaluated with log-sum-exp so extreme components neither
/// overflow nor underflow.
double log_density(const GaussianMixture& gmm, double y);

/// Mixture mean: sum_i alpha_i * mu_i.
double conditional_mean(const GaussianMixture& gmm);

/// Mode approximation using the highest-density component,
/// argmax_i alpha_i / sigma_i. Ties break to the lowest index.
ModeResult conditional_mode_density(const GaussianMixture& gmm);

/// Mode approximation using the most probable component, argmax_i alpha_i.
/// Ties break to the lowest index.
ModeResult conditional_mode_weight(const GaussianMixture& gmm);

/// Total variance: within-component plus between-component spread.
double conditional_variance(const GaussianMixture& gmm);

/// sqrt(conditional_variance)
double conditional_std(const GaussianMixture& gmm);

/// Entropy approximation via a component-wise first-order expansion:
/// -sum_i alpha_i log p(mu_i).
double conditional_entropy(const GaussianMixture& gmm);

/// Deterministic draws: component chosen by weight, then a normal variate.
std::vector<double> sample(const GaussianMixture& gmm, int count, std::uint64_t seed);

}  // namespace percept
