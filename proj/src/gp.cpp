#include "percept/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "percept/rng.hpp"

namespace percept {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void check_kernel(const Kernel& k) {
    if (!(k.sigma_s > 0.0) || !(k.length > 0.0) || !(k.alpha_rq > 0.0)) {
        throw std::invalid_argument("Kernel: parameters must be strictly positive");
    }
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::VectorXd a2 = a.rowwise().squaredNorm();
    Eigen::VectorXd b2 = b.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * a * b.transpose());
    d2.colwise() += a2;
    d2.rowwise() += b2.transpose();
    return d2.cwiseMax(0.0).cwiseSqrt();
}

// Cholesky with escalating diagonal jitter, up to max_jitter. Returns the
// jitter actually used, or a negative value on failure.
double robust_cholesky(const Eigen::MatrixXd& m, double max_jitter, Eigen::MatrixXd& lower) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
        lower = llt.matrixL();
        return 0.0;
    }
    double jitter = max_jitter * 1e-4;
    while (jitter <= max_jitter * (1.0 + 1e-12)) {
        Eigen::MatrixXd jittered = m;
        jittered.diagonal().array() += jitter;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            return jitter;
        }
        jitter *= 10.0;
    }
    return -1.0;
}

}  // namespace

std::string kernel_kind_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::exponential: return "exponential";
        case KernelKind::matern32: return "matern32";
        case KernelKind::matern52: return "matern52";
        case KernelKind::rational_quadratic: return "rational_quadratic";
        case KernelKind::squared_exponential: return "squared_exponential";
    }
    throw std::invalid_argument("unknown kernel kind");
}

KernelKind kernel_kind_from_name(const std::string& name) {
    if (name == "exponential") return KernelKind::exponential;
    if (name == "matern32") return KernelKind::matern32;
    if (name == "matern52") return KernelKind::matern52;
    if (name == "rational_quadratic") return KernelKind::rational_quadratic;
    if (name == "squared_exponential") return KernelKind::squared_exponential;
    throw std::invalid_argument("unknown kernel kind: " + name);
}

double kernel_at_distance(const Kernel& k, double r) {
    const double s2 = k.sigma_s * k.sigma_s;
    switch (k.kind) {
        case KernelKind::squared_exponential:
            return s2 * std::exp(-r * r / (2.0 * k.length * k.length));
        case KernelKind::exponential:
            return s2 * std::exp(-r / k.length);
        case KernelKind::matern32: {
            const double a = std::sqrt(3.0) * r / k.length;
            return s2 * (1.0 + a) * std::exp(-a);
        }
        case KernelKind::matern52: {
            const double a = std::sqrt(5.0) * r / k.length;
            return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
        }
        case KernelKind::rational_quadratic: {
            const double u = 1.0 + r * r / (2.0 * k.alpha_rq * k.length * k.length);
            return s2 * std::pow(u, -k.alpha_rq);
        }
    }
    throw std::invalid_argument("unknown kernel kind");
}

double kernel_eval(const Kernel& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    check_kernel(k);
    if (a.size() != b.size()) {
        throw std::invalid_argument("kernel_eval: dimension mismatch");
    }
    return kernel_at_distance(k, (a - b).norm());
}

Eigen::MatrixXd kernel_matrix(const Kernel& k, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
    check_kernel(k);
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("kernel_matrix: dimension mismatch");
    }
    Eigen::MatrixXd r = pairwise_distances(a, b);
    return r.unaryExpr([&](double d) { return kernel_at_distance(k, d); });
}

GpModel fit_exact(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Kernel& kernel,
                  double sigma_n) {
    check_kernel(kernel);
    if (x.rows() < 1 || x.rows() != y.size()) {
        throw std::invalid_argument("fit_exact: need n >= 1 rows with matching targets");
    }
    if (sigma_n < 0.0) {
        throw std::invalid_argument("fit_exact: sigma_n must be non-negative");
    }
    GpModel model;
    model.kernel = kernel;
    model.sigma_n = sigma_n;
    model.sparse = false;
    model.basis = x;

    Eigen::MatrixXd gram = kernel_matrix(kernel, x, x);
    gram.diagonal().array() += sigma_n * sigma_n;
    const double max_jitter = 1e-8 * kernel.sigma_s * kernel.sigma_s;
    model.jitter = robust_cholesky(gram, max_jitter, model.chol_lower);
    if (model.jitter < 0.0) {
        throw std::runtime_error(
            "fit_exact: Cholesky failed even with jitter " + std::to_string(max_jitter) +
            "; Gram matrix is numerically singular");
    }
    model.weights = model.chol_lower.triangularView<Eigen::Lower>().solve(y);
    model.chol_lower.triangularView<Eigen::Lower>().transpose().solveInPlace(model.weights);
    model.fitted = true;
    return model;
}

GpModel fit_sor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Kernel& kernel,
                double sigma_n, const std::vector<int>& inducing) {
    check_kernel(kernel);
    if (x.rows() < 1 || x.rows() != y.size()) {
        throw std::invalid_argument("fit_sor: need n >= 1 rows with matching targets");
    }
    if (inducing.empty()) {
        throw std::invalid_argument("fit_sor: inducing set must be non-empty");
    }
    if (static_cast<Eigen::Index>(inducing.size()) > x.rows()) {
        throw std::invalid_argument("fit_sor: inducing set larger than the training set");
    }
    for (int idx : inducing) {
        if (idx < 0 || idx >= x.rows()) {
            throw std::invalid_argument("fit_sor: inducing index out of range");
        }
    }

    GpModel model;
    model.kernel = kernel;
    model.sigma_n = sigma_n;
    model.sparse = true;
    model.inducing = inducing;

    const auto m = static_cast<Eigen::Index>(inducing.size());
    model.basis.resize(m, x.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
        model.basis.row(i) = x.row(inducing[static_cast<std::size_t>(i)]);
    }

    Eigen::MatrixXd k_uf = kernel_matrix(kernel, model.basis, x);
    Eigen::MatrixXd k_uu = kernel_matrix(kernel, model.basis, model.basis);
    Eigen::MatrixXd system = sigma_n * sigma_n * k_uu;
    system.noalias() += k_uf * k_uf.transpose();

    const double scale = system.diagonal().mean();
    model.jitter = robust_cholesky(system, 1e-8 * std::max(scale, 1.0), model.chol_lower);
    if (model.jitter < 0.0) {
        throw std::runtime_error("fit_sor: inducing system is numerically singular");
    }
    model.weights = model.chol_lower.triangularView<Eigen::Lower>().solve(k_uf * y);
    model.chol_lower.triangularView<Eigen::Lower>().transpose().solveInPlace(model.weights);
    model.fitted = true;
    return model;
}

void predict_batch(const GpModel& model, const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                   Eigen::VectorXd& variance) {
    if (!model.fitted) {
        throw std::logic_error("predict: model not fitted");
    }
    if (x.cols() != model.basis.cols()) {
        throw std::invalid_argument("predict: input dimension mismatch");
    }
    Eigen::MatrixXd k_star = kernel_matrix(model.kernel, model.basis, x);  // basis x points
    mean = k_star.transpose() * model.weights;
    Eigen::MatrixXd v = model.chol_lower.triangularView<Eigen::Lower>().solve(k_star);
    if (model.sparse) {
        // SoR latent variance: sigma_n^2 k_u^T A^-1 k_u
        variance =
            (model.sigma_n * model.sigma_n) * v.array().square().colwise().sum().transpose();
    } else {
        const double prior = model.kernel.sigma_s * model.kernel.sigma_s;
        variance = prior - v.array().square().colwise().sum().transpose().array();
        variance = variance.cwiseMax(0.0);
    }
}

std::pair<double, double> predict(const GpModel& model, const Eigen::VectorXd& x) {
    Eigen::VectorXd mean, variance;
    predict_batch(model, x.transpose(), mean, variance);
    return {mean(0), variance(0)};
}

Eigen::VectorXd predict_mean(const GpModel& model, const Eigen::MatrixXd& x) {
    Eigen::VectorXd mean, variance;
    predict_batch(model, x, mean, variance);
    return mean;
}

namespace {

struct LmlState {
    double value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad;  // over active log-parameters
    bool ok = false;
};

// Log-parameter vector layout: [log sigma_s, log sigma_n, (log length)]
LmlState evaluate_lml(const Eigen::MatrixXd& r, const Eigen::VectorXd& y, KernelKind kind,
                      double alpha_rq, const Eigen::VectorXd& p, bool with_length,
                      double fixed_length, bool need_grad) {
    LmlState out;
    const double sigma_s = std::exp(p(0));
    const double sigma_n = std::exp(p(1));
    const double length = with_length ? std::exp(p(2)) : fixed_length;
    Kernel k{kind, sigma_s, length, alpha_rq};

    const auto n = y.size();
    Eigen::MatrixXd kf = r.unaryExpr([&](double d) { return kernel_at_distance(k, d); });
    Eigen::MatrixXd gram = kf;
    gram.diagonal().array() += sigma_n * sigma_n;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        return out;
    }
    Eigen::VectorXd alpha = llt.solve(y);
    double log_det = 0.0;
    Eigen::MatrixXd lower = llt.matrixL();
    for (Eigen::Index i = 0; i < n; ++i) {
        log_det += std::log(lower(i, i));
    }
    out.value = -0.5 * y.dot(alpha) - log_det - 0.5 * static_cast<double>(n) * kLogTwoPi;
    out.ok = std::isfinite(out.value);
    if (!out.ok || !need_grad) {
        return out;
    }

    Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd inner = alpha * alpha.transpose() - kinv;

    auto trace_product = [&](const Eigen::MatrixXd& dk) {
        return 0.5 * inner.cwiseProduct(dk).sum();
    };

    out.grad.resize(with_length ? 3 : 2);
    out.grad(0) = trace_product(2.0 * kf);
    Eigen::MatrixXd dnoise = Eigen::MatrixXd::Zero(n, n);
    dnoise.diagonal().array() = 2.0 * sigma_n * sigma_n;
    out.grad(1) = trace_product(dnoise);
    if (with_length) {
        // dk / dlog(l) per kernel kind, assembled from the distance matrix
        const double s2 = sigma_s * sigma_s;
        Eigen::MatrixXd dl(n, n);
        switch (kind) {
            case KernelKind::squared_exponential:
                dl = kf.array() * r.array().square() / (length * length);
                break;
            case KernelKind::exponential:
                dl = kf.array() * r.array() / length;
                break;
            case KernelKind::matern32:
                dl = r.unaryExpr([&](double d) {
                    const double a = std::sqrt(3.0) * d / length;
                    return s2 * a * a * std::exp(-a);
                });
                break;
            case KernelKind::matern52:
                dl = r.unaryExpr([&](double d) {
                    const double a = std::sqrt(5.0) * d / length;
                    return s2 * (a * a / 3.0) * (1.0 + a) * std::exp(-a);
                });
                break;
            case KernelKind::rational_quadratic:
                dl = r.unaryExpr([&](double d) {
                    const double u = 1.0 + d * d / (2.0 * alpha_rq * length * length);
                    return s2 * std::pow(u, -alpha_rq - 1.0) * d * d / (length * length);
                });
                break;
        }
        out.grad(2) = trace_product(dl);
    }
    return out;
}

}  // namespace

double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Kernel& kernel, double sigma_n) {
    check_kernel(kernel);
    Eigen::MatrixXd r = pairwise_distances(x, x);
    Eigen::VectorXd p(3);
    p << std::log(kernel.sigma_s), std::log(std::max(sigma_n, 1e-300)), std::log(kernel.length);
    LmlState state = evaluate_lml(r, y, kernel.kind, kernel.alpha_rq, p, true, 0.0, false);
    if (!state.ok) {
        throw std::runtime_error("log_marginal_likelihood: factorization failed");
    }
    return state.value;
}

double median_distance(const Eigen::MatrixXd& x, std::uint64_t seed, int max_rows) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd sub;
    if (n > max_rows) {
        Rng rng(seed);
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        rng.shuffle(idx);
        sub.resize(max_rows, x.cols());
        for (int i = 0; i < max_rows; ++i) sub.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
    } else {
        sub = x;
    }
    Eigen::MatrixXd r = pairwise_distances(sub, sub);
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(sub.rows() * (sub.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < sub.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < sub.rows(); ++j) {
            vals.push_back(r(i, j));
        }
    }
    if (vals.empty()) return 1.0;
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    const double med = vals[vals.size() / 2];
    return med > 0.0 ? med : 1.0;
}

HyperFitResult optimize_hypers(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               KernelKind kind, const HyperFitOptions& options) {
    if (x.rows() < 2 || x.rows() != y.size()) {
        throw std::invalid_argument("optimize_hypers: need n >= 2 rows with matching targets");
    }
    Eigen::MatrixXd r = pairwise_distances(x, x);

    const double mean_y = y.mean();
    double std_y = std::sqrt((y.array() - mean_y).square().mean());
    const double rms_y = std::sqrt(y.array().square().mean());
    const double scale_y = std::max({std_y, rms_y, 1e-9});
    const double d_med = median_distance(x, derive_seed(options.seed, 99));

    const int dim = options.optimize_length ? 3 : 2;
    const double lo_s = std::log(1e-6 * scale_y), hi_s = std::log(1e3 * scale_y);
    const double lo_n = std::log(1e-9 * scale_y), hi_n = std::log(1e3 * scale_y);
    const double lo_l = std::log(1e-3 * d_med), hi_l = std::log(1e4 * d_med);

    auto clamp_params = [&](Eigen::VectorXd& p) {
        p(0) = std::clamp(p(0), lo_s, hi_s);
        p(1) = std::clamp(p(1), lo_n, hi_n);
        if (dim == 3) p(2) = std::clamp(p(2), lo_l, hi_l);
    };

    auto eval = [&](const Eigen::VectorXd& p, bool grad) {
        return evaluate_lml(r, y, kind, options.alpha_rq, p, options.optimize_length,
                            options.fixed_length, grad);
    };

    const double noise0 = options.initial_noise > 0.0 ? options.initial_noise : 0.1 * scale_y;

    bool any_ok = false;
    Eigen::VectorXd best_p;
    double best_value = -std::numeric_limits<double>::infinity();
    Rng rng(derive_seed(options.seed, 7));

    for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
        Eigen::VectorXd p(dim);
        p(0) = std::log(scale_y);
        p(1) = std::log(noise0);
        if (dim == 3) p(2) = std::log(d_med);
        if (restart > 0) {
            for (int i = 0; i < dim; ++i) p(i) += rng.uniform(-2.0, 2.0);
        }
        clamp_params(p);

        LmlState cur = eval(p, true);
        if (!cur.ok) continue;
        double step = 0.1;
        for (int it = 0; it < options.max_iterations; ++it) {
            if (!options.optimize_noise) cur.grad(1) = 0.0;
            const double gnorm2 = cur.grad.squaredNorm();
            if (gnorm2 < 1e-12) break;
            bool moved = false;
            double t = step;
            for (int half = 0; half < 30; ++half) {
                Eigen::VectorXd cand = p + t * cur.grad;
                clamp_params(cand);
                LmlState next = eval(cand, false);
                if (next.ok && next.value > cur.value + 1e-4 * t * gnorm2) {
                    p = cand;
                    cur = eval(p, true);
                    step = t * 1.5;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!moved) break;
        }
        if (cur.ok && cur.value > best_value) {
            best_value = cur.value;
            best_p = p;
            any_ok = true;
        }
    }
    if (!any_ok) {
        throw std::runtime_error("optimize_hypers: every restart failed to factorize");
    }

    HyperFitResult result;
    result.kernel.kind = kind;
    result.kernel.sigma_s = std::exp(best_p(0));
    result.kernel.length = options.optimize_length ? std::exp(best_p(2)) : options.fixed_length;
    result.kernel.alpha_rq = options.alpha_rq;
    result.sigma_n = options.optimize_noise ? std::exp(best_p(1)) : noise0;
    result.log_marginal = best_value;
    return result;
}

}  // namespace percept
