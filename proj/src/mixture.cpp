#include "percept/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "percept/rng.hpp"

namespace percept {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

inline double log_normal_pdf(double y, double mean, double std) {
    const double z = (y - mean) / std;
    return -0.5 * kLogTwoPi - std::log(std) - 0.5 * z * z;
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<double> weights,
                                 std::vector<double> means,
                                 std::vector<double> stds)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
    if (weights_.empty()) {
        throw std::invalid_argument("GaussianMixture: needs at least one component");
    }
    if (weights_.size() != means_.size() || weights_.size() != stds_.size()) {
        throw std::invalid_argument("GaussianMixture: weights/means/stds length mismatch");
    }
    double sum = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("GaussianMixture: negative weight");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("GaussianMixture: weights must sum to 1");
    }
    for (double s : stds_) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw std::invalid_argument("GaussianMixture: stds must be strictly positive");
        }
    }
}

double log_density(const GaussianMixture& gmm, double y) {
    const int k = gmm.size();
    const auto& w = gmm.weights();
    const auto& mu = gmm.means();
    const auto& sd = gmm.stds();

    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double t = (w[i] > 0.0)
                             ? std::log(w[i]) + log_normal_pdf(y, mu[i], sd[i])
                             : -std::numeric_limits<double>::infinity();
        terms[static_cast<std::size_t>(i)] = t;
        max_term = std::max(max_term, t);
    }
    if (!std::isfinite(max_term)) {
        return max_term;
    }
    double acc = 0.0;
    for (double t : terms) {
        acc += std::exp(t - max_term);
    }
    return max_term + std::log(acc);
}

double conditional_mean(const GaussianMixture& gmm) {
    double acc = 0.0;
    for (int i = 0; i < gmm.size(); ++i) {
        acc += gmm.weights()[i] * gmm.means()[i];
    }
    return acc;
}

ModeResult conditional_mode_density(const GaussianMixture& gmm) {
    int best = 0;
    double best_ratio = gmm.weights()[0] / gmm.stds()[0];
    for (int i = 1; i < gmm.size(); ++i) {
        const double ratio = gmm.weights()[i] / gmm.stds()[i];
        if (ratio > best_ratio) {
            best = i;
            best_ratio = ratio;
        }
    }
    return {best, gmm.means()[best]};
}

ModeResult conditional_mode_weight(const GaussianMixture& gmm) {
    int best = 0;
    for (int i = 1; i < gmm.size(); ++i) {
        if (gmm.weights()[i] > gmm.weights()[best]) {
            best = i;
        }
    }
    return {best, gmm.means()[best]};
}

double conditional_variance(const GaussianMixture& gmm) {
    const double mean = conditional_mean(gmm);
    double within = 0.0;
    double between = 0.0;
    for (int i = 0; i < gmm.size(); ++i) {
        const double d = gmm.means()[i] - mean;
        within += gmm.weights()[i] * gmm.stds()[i] * gmm.stds()[i];
        between += gmm.weights()[i] * d * d;
    }
    return within + between;
}

double conditional_std(const GaussianMixture& gmm) {
    return std::sqrt(conditional_variance(gmm));
}

double conditional_entropy(const GaussianMixture& gmm) {
    double acc = 0.0;
    for (int i = 0; i < gmm.size(); ++i) {
        if (gmm.weights()[i] > 0.0) {
            acc -= gmm.weights()[i] * log_density(gmm, gmm.means()[i]);
        }
    }
    return acc;
}

std::vector<double> sample(const GaussianMixture& gmm, int count, std::uint64_t seed) {
    if (count < 0) {
        throw std::invalid_argument("sample: count must be non-negative");
    }
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const double u = rng.uniform01();
        double cum = 0.0;
        int comp = gmm.size() - 1;
        for (int i = 0; i < gmm.size(); ++i) {
            cum += gmm.weights()[i];
            if (u < cum) {
                comp = i;
                break;
            }
        }
        out.push_back(rng.normal(gmm.means()[comp], gmm.stds()[comp]));
    }
    return out;
}

}  // namespace percept
