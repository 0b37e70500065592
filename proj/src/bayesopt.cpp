#include "percept/bayesopt.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "percept/gp.hpp"
#include "percept/rng.hpp"

namespace percept {

namespace {

constexpr double kSqrtTwoPi = 2.5066282746310002;

// Losses that come back non-finite are recorded at this clamp so the trace
// stays finite and the surrogate keeps working.
constexpr double kWorstLoss = 1e300;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrtTwoPi; }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

int encoded_width(const SearchSpace& space) {
    int w = 0;
    for (const auto& d : space.dims) {
        w += d.kind == DimensionKind::categorical ? static_cast<int>(d.categories.size()) : 1;
    }
    return w;
}

void validate_space(const SearchSpace& space) {
    if (space.dims.empty()) {
        throw std::invalid_argument("SearchSpace: needs at least one dimension");
    }
    for (const auto& d : space.dims) {
        if (d.kind == DimensionKind::categorical) {
            if (d.categories.empty()) {
                throw std::invalid_argument("SearchSpace: categorical dimension '" + d.name +
                                            "' has no categories");
            }
            continue;
        }
        if (!std::isfinite(d.lo) || !std::isfinite(d.hi) || !(d.lo < d.hi)) {
            throw std::invalid_argument("SearchSpace: bad bounds on dimension '" + d.name + "'");
        }
        if (d.kind == DimensionKind::log_continuous && !(d.lo > 0.0)) {
            throw std::invalid_argument("SearchSpace: log dimension '" + d.name +
                                        "' needs positive bounds");
        }
    }
}

BoConfig random_config(const SearchSpace& space, Rng& rng) {
    BoConfig cfg;
    cfg.reserve(space.dims.size());
    for (const auto& d : space.dims) {
        switch (d.kind) {
            case DimensionKind::continuous:
                cfg.push_back(rng.uniform(d.lo, d.hi));
                break;
            case DimensionKind::log_continuous:
                cfg.push_back(std::exp(rng.uniform(std::log(d.lo), std::log(d.hi))));
                break;
            case DimensionKind::integer: {
                const auto lo = static_cast<long>(std::ceil(d.lo));
                const auto hi = static_cast<long>(std::floor(d.hi));
                cfg.push_back(static_cast<double>(
                    lo + static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)))));
                break;
            }
            case DimensionKind::categorical:
                cfg.push_back(static_cast<double>(rng.uniform_index(d.categories.size())));
                break;
        }
    }
    return cfg;
}

Eigen::VectorXd encode(const SearchSpace& space, const BoConfig& cfg) {
    Eigen::VectorXd out(encoded_width(space));
    int pos = 0;
    for (std::size_t i = 0; i < space.dims.size(); ++i) {
        const auto& d = space.dims[i];
        const double v = cfg[i];
        switch (d.kind) {
            case DimensionKind::continuous:
            case DimensionKind::integer:
                out(pos++) = (v - d.lo) / (d.hi - d.lo);
                break;
            case DimensionKind::log_continuous:
                out(pos++) = (std::log(v) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo));
                break;
            case DimensionKind::categorical:
                for (std::size_t c = 0; c < d.categories.size(); ++c) {
                    out(pos++) = (static_cast<std::size_t>(v) == c) ? 1.0 : 0.0;
                }
                break;
        }
    }
    return out;
}

}  // namespace

double logmod(double x) {
    if (!std::isfinite(x)) {
        throw std::invalid_argument("logmod: input must be finite");
    }
    const double mag = std::log1p(std::abs(x));
    return x < 0.0 ? -mag : mag;
}

double expected_improvement(double mu, double s, double best, double xi) {
    if (s < 0.0 || xi < 0.0) {
        throw std::invalid_argument("expected_improvement: s and xi must be non-negative");
    }
    const double gap = best - mu - xi;
    if (s == 0.0) {
        return std::max(gap, 0.0);
    }
    const double z = gap / s;
    return gap * normal_cdf(z) + s * normal_pdf(z);
}

BoResult optimize(const BoObjective& objective, const SearchSpace& space, int budget,
                  std::uint64_t seed) {
    validate_space(space);
    if (budget < 1) {
        throw std::invalid_argument("optimize: budget must be >= 1");
    }

    Rng rng(derive_seed(seed, 11));
    const std::uint64_t objective_seed = derive_seed(seed, 12);
    const int n_random = (budget + 3) / 4;
    const int n_candidates = 2048;

    BoResult result;
    result.trace.reserve(static_cast<std::size_t>(budget));

    std::vector<Eigen::VectorXd> encoded;
    std::vector<double> transformed;

    auto run_trial = [&](const BoConfig& cfg) {
        const auto t0 = std::chrono::steady_clock::now();
        double raw = objective(cfg, objective_seed);
        const auto t1 = std::chrono::steady_clock::now();
        if (!std::isfinite(raw)) {
            raw = kWorstLoss;
        }
        TrialRecord rec;
        rec.config = cfg;
        rec.raw_loss = raw;
        rec.transformed_loss = logmod(raw);
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        rec.seed = objective_seed;
        result.trace.push_back(rec);
        encoded.push_back(encode(space, cfg));
        transformed.push_back(rec.transformed_loss);
        if (result.best_trial < 0 || raw < result.best_raw_loss) {
            result.best_trial = static_cast<int>(result.trace.size()) - 1;
            result.best_raw_loss = raw;
            result.best_config = cfg;
        }
    };

    for (int t = 0; t < std::min(n_random, budget); ++t) {
        run_trial(random_config(space, rng));
    }

    for (int t = n_random; t < budget; ++t) {
        const auto n = static_cast<Eigen::Index>(encoded.size());
        Eigen::MatrixXd x(n, encoded.front().size());
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x.row(i) = encoded[static_cast<std::size_t>(i)];
            z(i) = transformed[static_cast<std::size_t>(i)];
        }
        const double z_mean = z.mean();
        Eigen::VectorXd zc = z.array() - z_mean;
        const double spread = z.maxCoeff() - z.minCoeff();
        const double nugget = std::max(1e-3 * spread, 1e-9);

        GpModel surrogate;
        bool have_surrogate = false;
        if (spread > 0.0) {
            HyperFitOptions hopt;
            hopt.optimize_noise = false;
            hopt.initial_noise = nugget;
            hopt.restarts = 3;
            hopt.max_iterations = 40;
            hopt.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(t));
            try {
                HyperFitResult fit =
                    optimize_hypers(x, zc, KernelKind::squared_exponential, hopt);
                surrogate = fit_exact(x, zc, fit.kernel, fit.sigma_n);
                have_surrogate = true;
            } catch (const std::exception&) {
                have_surrogate = false;
            }
        }

        if (!have_surrogate) {
            run_trial(random_config(space, rng));
            continue;
        }

        const double best_z = z.minCoeff();
        const double xi = 0.01 * std::abs(best_z);

        std::vector<BoConfig> candidates;
        candidates.reserve(n_candidates);
        Eigen::MatrixXd cand_enc(n_candidates, x.cols());
        for (int c = 0; c < n_candidates; ++c) {
            candidates.push_back(random_config(space, rng));
            cand_enc.row(c) = encode(space, candidates.back());
        }
        Eigen::VectorXd mean, variance;
        predict_batch(surrogate, cand_enc, mean, variance);

        int best_cand = 0;
        double best_ei = -1.0;
        double std_sum = 0.0;
        for (int c = 0; c < n_candidates; ++c) {
            const double s = std::sqrt(std::max(variance(c), 0.0));
            std_sum += s;
            const double ei = expected_improvement(mean(c) + z_mean, s, best_z, xi);
            if (ei > best_ei) {
                best_ei = ei;
                best_cand = c;
            }
        }

        // anti-overexploitation rule: when the surrogate is still unsure about
        // the incumbent itself, spend the trial on a fresh random point
        const Eigen::VectorXd incumbent = encode(space, result.best_config);
        Eigen::VectorXd inc_mean, inc_var;
        predict_batch(surrogate, incumbent.transpose(), inc_mean, inc_var);
        const double incumbent_std = std::sqrt(std::max(inc_var(0), 0.0));
        if (incumbent_std > std_sum / n_candidates) {
            run_trial(random_config(space, rng));
        } else {
            run_trial(candidates[static_cast<std::size_t>(best_cand)]);
        }
    }
    return result;
}

std::string trace_csv(const SearchSpace& space, const std::vector<TrialRecord>& trace) {
    std::ostringstream out;
    out << "trial";
    for (const auto& d : space.dims) {
        out << ',' << d.name;
    }
    out << ",raw_loss,logmod_loss,seconds\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i;
        for (std::size_t d = 0; d < space.dims.size(); ++d) {
            const auto& dim = space.dims[d];
            if (dim.kind == DimensionKind::categorical) {
                out << ',' << dim.categories[static_cast<std::size_t>(trace[i].config[d])];
            } else {
                out << ',' << fmt(trace[i].config[d]);
            }
        }
        out << ',' << fmt(trace[i].raw_loss) << ',' << fmt(trace[i].transformed_loss) << ','
            << fmt(trace[i].seconds) << '\n';
    }
    return out.str();
}

}  // namespace percept
