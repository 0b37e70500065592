#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace percept {

/// sign(x) * log(1 + |x|); compresses extreme objective values while
/// preserving ordering.
double logmod(double x);

/// Expected improvement under a Gaussian posterior, minimization convention:
/// EI = (best - mu - xi) Phi(z) + s phi(z), z = (best - mu - xi)/s.
/// Degenerates to max(best - mu - xi, 0) when s == 0.
double expected_improvement(double mu, double s, double best, double xi);

enum class DimensionKind { continuous, log_continuous, integer, categorical };

struct Dimension {
    std::string name;
    DimensionKind kind = DimensionKind::continuous;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::string> categories;  // categorical only
};

struct SearchSpace {
    std::vector<Dimension> dims;
};

/// A configuration is one value per dimension; categorical entries hold the
/// category index.
using BoConfig = std::vector<double>;

struct TrialRecord {
    BoConfig config;
    double raw_loss = 0.0;
    double transformed_loss = 0.0;
    double seconds = 0.0;
    std::uint64_t seed = 0;
};

struct BoResult {
    BoConfig best_config;
    double best_raw_loss = 0.0;
    int best_trial = -1;
    std::vector<TrialRecord> trace;
};

/// Objective: maps (configuration, seed) to a loss to minimize. Must be
/// deterministic for a fixed pair.
using BoObjective = std::function<double(const BoConfig&, std::uint64_t)>;

/// Sequential surrogate-based minimization. The first ceil(budget/4) trials
/// are seeded-random; the rest maximize expected improvement of an SE-kernel
/// GP fit to the logmod-transformed losses over normalized coordinates
/// (categoricals one-hot, log dimensions in log space), scored on 2048 seeded
/// candidates per trial. Fully reproducible for a fixed (space, seed,
/// objective).
BoResult optimize(const BoObjective& objective, const SearchSpace& space, int budget,
                  std::uint64_t seed);

/// Trial trace as CSV: trial index, one column per dimension, raw loss,
/// logmod loss, seconds.
std::string trace_csv(const SearchSpace& space, const std::vector<TrialRecord>& trace);

}  // namespace percept
