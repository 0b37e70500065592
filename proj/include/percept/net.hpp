#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "percept/mixture.hpp"
#include "percept/rng.hpp"

namespace percept {

enum class ActivationKind { elu, softplus, softmax, linear };
enum class Mode { train, eval };
enum class HeadKind { regression, mdn };

/// Element-wise (or, for softmax, vector-wise) activation. softplus is
/// overflow-safe, softmax subtracts the max before exponentiating.
Eigen::VectorXd activation(ActivationKind kind, const Eigen::VectorXd& input);

double elu(double x);
double softplus(double x);

// Standard deviations emitted by the MDN head get this added on top of
// softplus so the NLL never sees a singular component.
constexpr double kSigmaFloor = 1e-6;

struct DenseLayer {
    Eigen::MatrixXd weights;  // in x out
    Eigen::VectorXd bias;     // out
};

struct BatchNorm {
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
    double momentum = 0.99;
    double epsilon = 1e-5;
};

/// One hidden block: dense -> batch norm -> activation -> dropout.
struct HiddenBlock {
    DenseLayer dense;
    BatchNorm bn;
    double dropout_rate = 0.0;
};

struct RegressionHead {
    DenseLayer out;  // width x 1
};

struct MdnHead {
    DenseLayer weight_layer;  // width x K, softmax
    DenseLayer mean_layer;    // width x K, linear
    DenseLayer std_layer;     // width x K, softplus + floor
    int components = 5;
};

struct NetworkConfig {
    int input_dim = 254;
    std::vector<int> hidden = {32};
    double dropout_rate = 0.0;
    HeadKind head = HeadKind::regression;
    int mdn_components = 5;
    // MDN mean-head biases are spread over [target_min, target_max] so the
    // components start apart instead of collapsed on one value.
    double target_min = -1.0;
    double target_max = 1.0;
};

struct Network {
    int input_dim = 0;
    std::vector<HiddenBlock> blocks;
    HeadKind head_kind = HeadKind::regression;
    RegressionHead reg_head;
    MdnHead mdn_head;

    int hidden_output_dim() const;
    long parameter_count() const;
};

struct TrainConfig {
    int epochs = 2000;
    int batch_size = 256;
    double learning_rate = 0.001;
    double decay_rate = 0.5;
    double decay_steps = 10000;
    double l2 = 0.1;
    std::uint64_t seed = 0;
};

/// He-style fan-in uniform init for dense layers; batch-norm starts at
/// identity; MDN mean biases spread over the configured target range.
Network build_network(const NetworkConfig& config, std::uint64_t seed);

// Flat parameter vector <-> structured network. Running batch-norm statistics
// are state, not parameters, and are excluded.
Eigen::VectorXd pack_parameters(const Network& net);
void unpack_parameters(Network& net, const Eigen::VectorXd& params);

/// Per-block dropout masks for one batch, already scaled by 1/(1-rate).
/// Empty matrices mean "no dropout on this block".
struct DropoutMasks {
    std::vector<Eigen::MatrixXd> block_masks;
};

DropoutMasks make_dropout_masks(const Network& net, int batch_rows, Rng& rng);

/// Batched forward pass through the hidden stack. In train mode the batch
/// statistics are used for normalization and, when `update_running` is set,
/// folded into the running averages. Eval mode is deterministic.
Eigen::MatrixXd forward_hidden(Network& net, const Eigen::MatrixXd& input, Mode mode,
                               const DropoutMasks* masks = nullptr,
                               bool update_running = false);

/// Eval-mode scalar prediction for a regression-head network.
double forward_regression(const Network& net, const Eigen::VectorXd& input);
Eigen::VectorXd forward_regression_batch(const Network& net, const Eigen::MatrixXd& input);

/// Eval-mode conditional mixture for an MDN-head network.
GaussianMixture forward_mdn(const Network& net, const Eigen::VectorXd& input);
std::vector<GaussianMixture> forward_mdn_batch(const Network& net, const Eigen::MatrixXd& input);

/// Training objective: MSE (regression head) or mean per-sample negative log
/// density (MDN head), plus l2 * (sum of squared dense weights + batch-norm
/// gammas). Biases and batch-norm shifts are not penalized.
double loss(Network& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
            double l2, Mode mode, const DropoutMasks* masks = nullptr);

/// Loss plus reverse-mode gradients for every parameter, in pack order.
/// Train mode only (batch statistics are part of the differentiated graph).
std::pair<double, Eigen::VectorXd> loss_and_gradient(Network& net, const Eigen::MatrixXd& inputs,
                                                     const Eigen::VectorXd& targets, double l2,
                                                     const DropoutMasks* masks = nullptr,
                                                     bool update_running = false);

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(long parameter_count);

/// lr(t) = learning_rate * decay_rate^(t / decay_steps), smooth in t.
double learning_rate_at(const TrainConfig& cfg, long step);

/// One Adam update; advances state.step and returns the updated parameters.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grads, const TrainConfig& cfg);

struct TrainResult {
    std::vector<double> epoch_loss;
};

/// Thrown when a training loss turns non-finite; carries where it happened.
class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(int epoch, int batch_index, const std::string& what)
        : std::runtime_error(what), epoch(epoch), batch_index(batch_index) {}
    int epoch;
    int batch_index;
};

/// Seeded mini-batch training with the Adam optimizer. Shuffles every epoch,
/// updates batch-norm running statistics, and records the per-epoch mean
/// training loss. Deterministic for a fixed seed.
TrainResult train(Network& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                  const TrainConfig& cfg);

}  // namespace percept
