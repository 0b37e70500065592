#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace percept {

enum class KernelKind {
    exponential,
    matern32,
    matern52,
    rational_quadratic,
    squared_exponential,
};

std::string kernel_kind_name(KernelKind kind);
KernelKind kernel_kind_from_name(const std::string& name);

/// Isotropic stationary kernel over Euclidean distance.
struct Kernel {
    KernelKind kind = KernelKind::squared_exponential;
    double sigma_s = 1.0;
    double length = 1.0;
    double alpha_rq = 1.0;  // rational-quadratic shape; ignored elsewhere
};

double kernel_eval(const Kernel& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// k evaluated at a given distance r >= 0.
double kernel_at_distance(const Kernel& k, double r);

/// Cross-Gram matrix K(A, B), rows of A against rows of B.
Eigen::MatrixXd kernel_matrix(const Kernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// GP regression posterior. Exact mode caches the Cholesky factor of
/// K + sigma_n^2 I; SoR mode caches the factor of
/// sigma_n^2 K_uu + K_uf K_fu over the inducing subset.
struct GpModel {
    Kernel kernel;
    double sigma_n = 0.0;
    bool sparse = false;
    std::vector<int> inducing;   // indices into the training rows (SoR)
    Eigen::MatrixXd basis;       // rows the predictor correlates against
    Eigen::MatrixXd chol_lower;  // L with L L^T = system matrix
    Eigen::VectorXd weights;     // solved representer weights
    double jitter = 0.0;         // diagonal jitter added to factorize, if any
    bool fitted = false;

    bool is_fitted() const { return fitted; }
};

GpModel fit_exact(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Kernel& kernel,
                  double sigma_n);

GpModel fit_sor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Kernel& kernel,
                double sigma_n, const std::vector<int>& inducing);

/// Posterior mean and latent predictive variance at one point. The variance
/// is the uncertainty of the latent mean only; it does not include the
/// output noise sigma_n^2.
std::pair<double, double> predict(const GpModel& model, const Eigen::VectorXd& x);

void predict_batch(const GpModel& model, const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                   Eigen::VectorXd& variance);
Eigen::VectorXd predict_mean(const GpModel& model, const Eigen::MatrixXd& x);

/// Exact-GP log marginal likelihood of (x, y) under the kernel + noise.
double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Kernel& kernel, double sigma_n);

struct HyperFitOptions {
    bool optimize_length = true;
    bool optimize_noise = true;
    double fixed_length = 1.0;   // used when optimize_length is false
    double initial_noise = -1.0; // < 0 -> heuristic
    double alpha_rq = 1.0;
    int restarts = 5;
    int max_iterations = 60;
    std::uint64_t seed = 0;
};

struct HyperFitResult {
    Kernel kernel;
    double sigma_n = 0.0;
    double log_marginal = 0.0;
};

/// Maximize the exact-GP log marginal likelihood over (sigma_s, sigma_n) and,
/// unless fixed, the length scale. Gradient ascent in log-parameter space
/// with Armijo backtracking; the best of `restarts` seeded starts wins.
HyperFitResult optimize_hypers(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               KernelKind kind, const HyperFitOptions& options = {});

/// Median pairwise distance of (a subsample of) the rows; length-scale heuristic.
double median_distance(const Eigen::MatrixXd& x, std::uint64_t seed, int max_rows = 512);

}  // namespace percept
