#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "percept/model_io.hpp"
#include "percept/tactile.hpp"

namespace percept {

/// Requesting something a model cannot provide (e.g. uncertainty from a
/// point-prediction regressor).
class CapabilityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

double rms_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// The label column for a given prediction target.
Eigen::VectorXd dataset_targets(const TactileDataset& data, TargetKind target);

/// Ground-truth "this row is aliased" flag for a target, from the simulator's
/// annotations: position/orientation are ambiguous on flat or no-contact taps,
/// curvature on saturated or no-contact taps.
std::vector<bool> aliased_flags(const TactileDataset& data, TargetKind target);

enum class PredictionRule { mode_density, mode_weight, mean };
enum class UncertaintyRule { entropy, stddev };

std::string prediction_rule_name(PredictionRule rule);
PredictionRule prediction_rule_from_name(const std::string& name);
std::string uncertainty_rule_name(UncertaintyRule rule);
UncertaintyRule uncertainty_rule_from_name(const std::string& name);

struct PredictionTable {
    Eigen::VectorXd prediction;
    Eigen::VectorXd uncertainty;  // empty unless a rule was requested
    bool has_uncertainty = false;
};

/// Row-wise predictions, plus uncertainties when requested. Only MDN models
/// can provide uncertainty; asking a GP or NN for it raises CapabilityError.
PredictionTable predict_with_uncertainty(const TrainedModel& model, const TactileDataset& data,
                                         PredictionRule rule,
                                         std::optional<UncertaintyRule> uncertainty);

/// Everything needed to fit one model of any kind.
struct ModelTrainOptions {
    // nn / mdn5
    std::vector<int> hidden = {32};
    double dropout_rate = 0.0;
    TrainConfig train;
    // gp
    KernelKind gp_kernel = KernelKind::squared_exponential;
    int gp_inducing = 512;
    int gp_ml_subsample = 256;
    int gp_restarts = 3;
};

/// Standardizes on the training set, fits the requested model kind, and
/// returns it bundled with the preprocessing state.
TrainedModel train_model(ModelKind kind, TargetKind target, const TactileDataset& train_data,
                         std::uint64_t seed, const ModelTrainOptions& options);

struct ExperimentProtocol {
    ModelKind model = ModelKind::nn;
    TargetKind target = TargetKind::position;
    const TactileDataset* train_data = nullptr;
    std::string train_tag;
    std::vector<std::pair<std::string, const TactileDataset*>> test_sets;
    int runs = 10;
    std::uint64_t base_seed = 0;
    ModelTrainOptions options;
    PredictionRule rule = PredictionRule::mode_density;
};

struct RunReport {
    std::string model;
    std::string target;
    std::string train_tag;
    std::string test_tag;
    std::vector<double> run_rms;  // completed runs only
    double mean_rms = 0.0;
    double std_rms = 0.0;
    int requested_runs = 0;
    int completed_runs = 0;
    int failed_runs = 0;
};

/// Trains `runs` independently seeded models and reports RMS per test set.
/// Runs may execute in parallel (ALIASED_PERCEPT_THREADS caps the workers);
/// results do not depend on scheduling. A run that throws is recorded as
/// failed and aggregation continues over the rest.
std::vector<RunReport> run_experiment(const ExperimentProtocol& protocol);

/// Also returns the trained models of the final protocol run for downstream
/// analysis (SDM sweeps, aliasing separation).
struct ExperimentResult {
    std::vector<RunReport> reports;
    std::vector<TrainedModel> models;  // one per completed run
};
ExperimentResult run_experiment_keep_models(const ExperimentProtocol& protocol);

struct SdmPoint {
    double threshold = 0.0;
    double rejection_rate = 0.0;
    std::optional<double> rms;  // empty when nothing was accepted
};

struct SdmCurve {
    std::vector<SdmPoint> points;
};

/// Accept rows with uncertainty strictly below each threshold; report the
/// rejection rate and the RMS over accepted rows.
SdmCurve sdm_sweep(const Eigen::VectorXd& predictions, const Eigen::VectorXd& uncertainties,
                   const Eigen::VectorXd& targets, const std::vector<double>& thresholds);

/// 64 thresholds spanning [min, max] of the uncertainties.
std::vector<double> default_threshold_grid(const Eigen::VectorXd& uncertainties, int count = 64);

/// ROC area of uncertainty as a score for the aliased class, via the rank
/// statistic; ties contribute 1/2. Needs both classes present.
double aliasing_separation(const Eigen::VectorXd& uncertainties,
                           const std::vector<bool>& is_aliased);

/// Table-style CSV: one line per (model, target, train, test) cell.
std::string report_csv(const std::vector<RunReport>& reports);
/// Full per-run detail for the plotter and downstream tooling.
std::string report_json(const std::vector<RunReport>& reports);
std::vector<RunReport> report_from_csv(const std::string& text);

/// Worker cap from ALIASED_PERCEPT_THREADS, defaulting to the hardware count.
int worker_count();

}  // namespace percept
