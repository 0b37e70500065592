#include "percept/net.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace percept {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// exp evaluated only on the negative part keeps the vectorized path
// overflow-free; exp(min(x,0)) serves both the value and the derivative
Eigen::MatrixXd elu_mat(const Eigen::MatrixXd& x) {
    Eigen::ArrayXXd e = x.array().min(0.0).exp();
    return (x.array() > 0.0).select(x.array(), e - 1.0);
}

Eigen::MatrixXd elu_deriv_mat(const Eigen::MatrixXd& pre) {
    Eigen::ArrayXXd e = pre.array().min(0.0).exp();
    return (pre.array() > 0.0).select(Eigen::ArrayXXd::Ones(pre.rows(), pre.cols()), e);
}

Eigen::MatrixXd softplus_mat(const Eigen::MatrixXd& x) {
    return x.unaryExpr([](double v) { return softplus(v); });
}

void he_uniform_init(Eigen::MatrixXd& w, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            w(i, j) = rng.uniform(-limit, limit);
        }
    }
}

struct BlockCache {
    const Eigen::MatrixXd* input = nullptr;  // owned by the caller's stack
    Eigen::MatrixXd z;
    Eigen::VectorXd mu;
    Eigen::VectorXd var;
    Eigen::MatrixXd centered;
    Eigen::MatrixXd xhat;
    Eigen::MatrixXd pre_act;
    Eigen::MatrixXd out;
};

// Forward through one hidden block, caching what the backward pass needs.
void forward_block(const HiddenBlock& block, const Eigen::MatrixXd& x, Mode mode,
                   const Eigen::MatrixXd* mask, bool update_running, BlockCache& cache,
                   BatchNorm* running_sink) {
    const auto rows = x.rows();
    cache.input = &x;
    cache.z.noalias() = x * block.dense.weights;
    cache.z.rowwise() += block.dense.bias.transpose();

    const BatchNorm& bn = block.bn;
    if (mode == Mode::train) {
        cache.mu = cache.z.colwise().mean();
        cache.centered = cache.z.rowwise() - cache.mu.transpose();
        cache.var = cache.centered.array().square().colwise().mean();
        Eigen::ArrayXd inv_std = (cache.var.array() + bn.epsilon).sqrt().inverse();
        cache.xhat = cache.centered.array().rowwise() * inv_std.transpose();
        if (update_running && running_sink != nullptr) {
            running_sink->running_mean =
                bn.momentum * bn.running_mean + (1.0 - bn.momentum) * cache.mu;
            running_sink->running_var =
                bn.momentum * bn.running_var + (1.0 - bn.momentum) * cache.var;
        }
    } else {
        cache.mu = bn.running_mean;
        cache.var = bn.running_var;
        Eigen::ArrayXd inv_std = (cache.var.array() + bn.epsilon).sqrt().inverse();
        cache.xhat = (cache.z.rowwise() - cache.mu.transpose()).array().rowwise() *
                     inv_std.transpose();
    }

    cache.pre_act = cache.xhat.array().rowwise() * bn.gamma.transpose().array();
    cache.pre_act.rowwise() += bn.beta.transpose();
    cache.out = elu_mat(cache.pre_act);
    if (mask != nullptr && mask->size() > 0) {
        if (mask->rows() != rows || mask->cols() != cache.out.cols()) {
            throw std::invalid_argument("dropout mask shape mismatch");
        }
        cache.out.array() *= mask->array();
    }
}

struct BlockGrads {
    Eigen::MatrixXd d_weights;
    Eigen::VectorXd d_bias;
    Eigen::VectorXd d_gamma;
    Eigen::VectorXd d_beta;
};

// Backward through one hidden block (train-mode batch statistics).
// need_input_grad is false for the first block, whose input gradient nobody uses.
Eigen::MatrixXd backward_block(const HiddenBlock& block, const BlockCache& cache,
                               const Eigen::MatrixXd* mask, const Eigen::MatrixXd& d_out,
                               BlockGrads& grads, bool need_input_grad) {
    const double n = static_cast<double>(cache.z.rows());
    Eigen::MatrixXd d_act = d_out;
    if (mask != nullptr && mask->size() > 0) {
        d_act.array() *= mask->array();
    }
    Eigen::MatrixXd d_pre = d_act.array() * elu_deriv_mat(cache.pre_act).array();

    grads.d_gamma = (d_pre.array() * cache.xhat.array()).colwise().sum();
    grads.d_beta = d_pre.colwise().sum();

    Eigen::MatrixXd d_xhat = d_pre.array().rowwise() * block.bn.gamma.transpose().array();

    Eigen::ArrayXd inv_std = (cache.var.array() + block.bn.epsilon).sqrt().inverse();
    const Eigen::MatrixXd& centered = cache.centered;

    Eigen::ArrayXd d_var = (d_xhat.array() * centered.array()).colwise().sum().transpose() *
                           (-0.5) * inv_std.pow(3);
    Eigen::ArrayXd d_mu = -(d_xhat.array().colwise().sum().transpose()) * inv_std +
                          d_var * (-2.0 / n) * centered.array().colwise().sum().transpose();

    Eigen::MatrixXd d_z = d_xhat.array().rowwise() * inv_std.transpose();
    d_z.array() += centered.array().rowwise() * (d_var.transpose() * (2.0 / n));
    d_z.array().rowwise() += d_mu.transpose() / n;

    grads.d_weights.noalias() = cache.input->transpose() * d_z;
    grads.d_bias = d_z.colwise().sum();
    if (!need_input_grad) {
        return {};
    }
    return d_z * block.dense.weights.transpose();
}

struct MdnBatch {
    Eigen::MatrixXd log_alpha;
    Eigen::MatrixXd alpha;
    Eigen::MatrixXd mu;
    Eigen::MatrixXd z_sigma;
    Eigen::MatrixXd sigma;
};

MdnBatch mdn_head_forward(const MdnHead& head, const Eigen::MatrixXd& hidden) {
    MdnBatch out;
    Eigen::MatrixXd z_alpha = hidden * head.weight_layer.weights;
    z_alpha.rowwise() += head.weight_layer.bias.transpose();
    out.log_alpha.resize(z_alpha.rows(), z_alpha.cols());
    for (Eigen::Index i = 0; i < z_alpha.rows(); ++i) {
        const double m = z_alpha.row(i).maxCoeff();
        const double lse = std::log((z_alpha.row(i).array() - m).exp().sum());
        out.log_alpha.row(i) = z_alpha.row(i).array() - m - lse;
    }
    out.alpha = out.log_alpha.array().exp();
    out.mu = hidden * head.mean_layer.weights;
    out.mu.rowwise() += head.mean_layer.bias.transpose();
    out.z_sigma = hidden * head.std_layer.weights;
    out.z_sigma.rowwise() += head.std_layer.bias.transpose();
    out.sigma = softplus_mat(out.z_sigma).array() + kSigmaFloor;
    return out;
}

double l2_penalty(const Network& net) {
    double acc = 0.0;
    for (const auto& block : net.blocks) {
        acc += block.dense.weights.squaredNorm();
        acc += block.bn.gamma.squaredNorm();
    }
    if (net.head_kind == HeadKind::regression) {
        acc += net.reg_head.out.weights.squaredNorm();
    } else {
        acc += net.mdn_head.weight_layer.weights.squaredNorm();
        acc += net.mdn_head.mean_layer.weights.squaredNorm();
        acc += net.mdn_head.std_layer.weights.squaredNorm();
    }
    return acc;
}

}  // namespace

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Eigen::VectorXd activation(ActivationKind kind, const Eigen::VectorXd& input) {
    switch (kind) {
        case ActivationKind::elu:
            return input.unaryExpr([](double v) { return elu(v); });
        case ActivationKind::softplus:
            return input.unaryExpr([](double v) { return softplus(v); });
        case ActivationKind::softmax: {
            const double m = input.maxCoeff();
            Eigen::VectorXd e = (input.array() - m).exp();
            return e / e.sum();
        }
        case ActivationKind::linear:
            return input;
    }
    throw std::invalid_argument("unknown activation kind");
}

int Network::hidden_output_dim() const {
    if (blocks.empty()) return input_dim;
    return static_cast<int>(blocks.back().dense.weights.cols());
}

long Network::parameter_count() const {
    long count = 0;
    for (const auto& block : blocks) {
        count += block.dense.weights.size() + block.dense.bias.size();
        count += block.bn.gamma.size() + block.bn.beta.size();
    }
    if (head_kind == HeadKind::regression) {
        count += reg_head.out.weights.size() + reg_head.out.bias.size();
    } else {
        count += mdn_head.weight_layer.weights.size() + mdn_head.weight_layer.bias.size();
        count += mdn_head.mean_layer.weights.size() + mdn_head.mean_layer.bias.size();
        count += mdn_head.std_layer.weights.size() + mdn_head.std_layer.bias.size();
    }
    return count;
}

Network build_network(const NetworkConfig& config, std::uint64_t seed) {
    if (config.input_dim <= 0) {
        throw std::invalid_argument("build_network: input_dim must be positive");
    }
    if (config.dropout_rate < 0.0 || config.dropout_rate > 0.5) {
        throw std::invalid_argument("build_network: dropout rate must lie in [0, 0.5]");
    }
    Rng rng(derive_seed(seed, 0));
    Network net;
    net.input_dim = config.input_dim;
    int in_dim = config.input_dim;
    for (int width : config.hidden) {
        if (width <= 0) throw std::invalid_argument("build_network: hidden width must be positive");
        HiddenBlock block;
        block.dense.weights.resize(in_dim, width);
        he_uniform_init(block.dense.weights, rng);
        block.dense.bias = Eigen::VectorXd::Zero(width);
        block.bn.gamma = Eigen::VectorXd::Ones(width);
        block.bn.beta = Eigen::VectorXd::Zero(width);
        block.bn.running_mean = Eigen::VectorXd::Zero(width);
        block.bn.running_var = Eigen::VectorXd::Ones(width);
        block.dropout_rate = config.dropout_rate;
        net.blocks.push_back(std::move(block));
        in_dim = width;
    }
    net.head_kind = config.head;
    if (config.head == HeadKind::regression) {
        net.reg_head.out.weights.resize(in_dim, 1);
        he_uniform_init(net.reg_head.out.weights, rng);
        net.reg_head.out.bias = Eigen::VectorXd::Zero(1);
    } else {
        const int k = config.mdn_components;
        if (k < 1) throw std::invalid_argument("build_network: mdn_components must be >= 1");
        auto init_dense = [&](DenseLayer& layer) {
            layer.weights.resize(in_dim, k);
            he_uniform_init(layer.weights, rng);
            layer.bias = Eigen::VectorXd::Zero(k);
        };
        init_dense(net.mdn_head.weight_layer);
        init_dense(net.mdn_head.mean_layer);
        init_dense(net.mdn_head.std_layer);
        net.mdn_head.components = k;
        const double span = config.target_max - config.target_min;
        // start the components apart with spreads matched to the target range,
        // so no single component has to cover everything early on
        const double sigma0 = std::max(0.05 * span, 0.5);
        const double bias_sigma = sigma0 + std::log1p(-std::exp(-sigma0));
        for (int i = 0; i < k; ++i) {
            const double frac = (k == 1) ? 0.5 : static_cast<double>(i) / (k - 1);
            net.mdn_head.mean_layer.bias(i) = config.target_min + frac * span;
            net.mdn_head.std_layer.bias(i) = bias_sigma;
        }
    }
    return net;
}

Eigen::VectorXd pack_parameters(const Network& net) {
    Eigen::VectorXd out(net.parameter_count());
    Eigen::Index pos = 0;
    auto put_mat = [&](const Eigen::MatrixXd& m) {
        out.segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        pos += m.size();
    };
    auto put_vec = [&](const Eigen::VectorXd& v) {
        out.segment(pos, v.size()) = v;
        pos += v.size();
    };
    for (const auto& block : net.blocks) {
        put_mat(block.dense.weights);
        put_vec(block.dense.bias);
        put_vec(block.bn.gamma);
        put_vec(block.bn.beta);
    }
    if (net.head_kind == HeadKind::regression) {
        put_mat(net.reg_head.out.weights);
        put_vec(net.reg_head.out.bias);
    } else {
        put_mat(net.mdn_head.weight_layer.weights);
        put_vec(net.mdn_head.weight_layer.bias);
        put_mat(net.mdn_head.mean_layer.weights);
        put_vec(net.mdn_head.mean_layer.bias);
        put_mat(net.mdn_head.std_layer.weights);
        put_vec(net.mdn_head.std_layer.bias);
    }
    return out;
}

void unpack_parameters(Network& net, const Eigen::VectorXd& params) {
    if (params.size() != net.parameter_count()) {
        throw std::invalid_argument("unpack_parameters: size mismatch");
    }
    Eigen::Index pos = 0;
    auto get_mat = [&](Eigen::MatrixXd& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = params.segment(pos, m.size());
        pos += m.size();
    };
    auto get_vec = [&](Eigen::VectorXd& v) {
        v = params.segment(pos, v.size());
        pos += v.size();
    };
    for (auto& block : net.blocks) {
        get_mat(block.dense.weights);
        get_vec(block.dense.bias);
        get_vec(block.bn.gamma);
        get_vec(block.bn.beta);
    }
    if (net.head_kind == HeadKind::regression) {
        get_mat(net.reg_head.out.weights);
        get_vec(net.reg_head.out.bias);
    } else {
        get_mat(net.mdn_head.weight_layer.weights);
        get_vec(net.mdn_head.weight_layer.bias);
        get_mat(net.mdn_head.mean_layer.weights);
        get_vec(net.mdn_head.mean_layer.bias);
        get_mat(net.mdn_head.std_layer.weights);
        get_vec(net.mdn_head.std_layer.bias);
    }
}

DropoutMasks make_dropout_masks(const Network& net, int batch_rows, Rng& rng) {
    DropoutMasks masks;
    masks.block_masks.resize(net.blocks.size());
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        const double rate = net.blocks[b].dropout_rate;
        if (rate <= 0.0) continue;
        const double keep = 1.0 - rate;
        Eigen::MatrixXd m(batch_rows, net.blocks[b].dense.weights.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                m(i, j) = rng.uniform01() < keep ? 1.0 / keep : 0.0;
            }
        }
        masks.block_masks[b] = std::move(m);
    }
    return masks;
}

Eigen::MatrixXd forward_hidden(Network& net, const Eigen::MatrixXd& input, Mode mode,
                               const DropoutMasks* masks, bool update_running) {
    if (input.cols() != net.input_dim) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    Eigen::MatrixXd x = input;
    BlockCache cache;
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        const Eigen::MatrixXd* mask = nullptr;
        if (mode == Mode::train && masks != nullptr && b < masks->block_masks.size() &&
            masks->block_masks[b].size() > 0) {
            mask = &masks->block_masks[b];
        }
        forward_block(net.blocks[b], x, mode, mask, update_running, cache,
                      update_running ? &net.blocks[b].bn : nullptr);
        x = cache.out;
    }
    return x;
}

double forward_regression(const Network& net, const Eigen::VectorXd& input) {
    return forward_regression_batch(net, input.transpose())(0);
}

Eigen::VectorXd forward_regression_batch(const Network& net, const Eigen::MatrixXd& input) {
    if (net.head_kind != HeadKind::regression) {
        throw std::logic_error("forward_regression: network has no regression head");
    }
    Eigen::MatrixXd hidden =
        forward_hidden(const_cast<Network&>(net), input, Mode::eval, nullptr, false);
    Eigen::VectorXd out = hidden * net.reg_head.out.weights;
    out.array() += net.reg_head.out.bias(0);
    return out;
}

GaussianMixture forward_mdn(const Network& net, const Eigen::VectorXd& input) {
    return forward_mdn_batch(net, input.transpose()).front();
}

std::vector<GaussianMixture> forward_mdn_batch(const Network& net, const Eigen::MatrixXd& input) {
    if (net.head_kind != HeadKind::mdn) {
        throw std::logic_error("forward_mdn: network has no MDN head");
    }
    Eigen::MatrixXd hidden =
        forward_hidden(const_cast<Network&>(net), input, Mode::eval, nullptr, false);
    MdnBatch batch = mdn_head_forward(net.mdn_head, hidden);
    std::vector<GaussianMixture> out;
    out.reserve(static_cast<std::size_t>(input.rows()));
    const int k = net.mdn_head.components;
    for (Eigen::Index i = 0; i < input.rows(); ++i) {
        std::vector<double> w(k), m(k), s(k);
        for (int j = 0; j < k; ++j) {
            w[j] = batch.alpha(i, j);
            m[j] = batch.mu(i, j);
            s[j] = batch.sigma(i, j);
        }
        // softmax sums to 1 up to roundoff; renormalize the last ulp so the
        // mixture invariant holds exactly
        double sum = 0.0;
        for (double v : w) sum += v;
        for (double& v : w) v /= sum;
        out.emplace_back(std::move(w), std::move(m), std::move(s));
    }
    return out;
}

namespace {

// Shared forward for loss / loss_and_gradient; fills block caches in train mode.
struct LossForward {
    double data_loss = 0.0;
    Eigen::MatrixXd hidden;
    std::vector<BlockCache> caches;
    // regression
    Eigen::VectorXd pred;
    // mdn
    MdnBatch mdn;
    Eigen::MatrixXd resp;  // posterior responsibilities
};

LossForward loss_forward(Network& net, const Eigen::MatrixXd& inputs,
                         const Eigen::VectorXd& targets, Mode mode, const DropoutMasks* masks,
                         bool update_running, bool need_caches) {
    if (inputs.rows() == 0) {
        throw std::invalid_argument("loss: empty batch");
    }
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("loss: inputs/targets row mismatch");
    }
    LossForward fw;
    if (need_caches) {
        fw.caches.resize(net.blocks.size());
        for (std::size_t b = 0; b < net.blocks.size(); ++b) {
            const Eigen::MatrixXd* mask = nullptr;
            if (mode == Mode::train && masks != nullptr && b < masks->block_masks.size() &&
                masks->block_masks[b].size() > 0) {
                mask = &masks->block_masks[b];
            }
            const Eigen::MatrixXd& block_input = (b == 0) ? inputs : fw.caches[b - 1].out;
            forward_block(net.blocks[b], block_input, mode, mask, update_running, fw.caches[b],
                          update_running ? &net.blocks[b].bn : nullptr);
        }
        fw.hidden = net.blocks.empty() ? inputs : fw.caches.back().out;
    } else {
        fw.hidden = forward_hidden(net, inputs, mode, masks, update_running);
    }

    const double n = static_cast<double>(inputs.rows());
    if (net.head_kind == HeadKind::regression) {
        fw.pred = fw.hidden * net.reg_head.out.weights;
        fw.pred.array() += net.reg_head.out.bias(0);
        fw.data_loss = (fw.pred - targets).squaredNorm() / n;
    } else {
        fw.mdn = mdn_head_forward(net.mdn_head, fw.hidden);
        const int k = net.mdn_head.components;
        fw.resp.resize(inputs.rows(), k);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
            double max_t = -std::numeric_limits<double>::infinity();
            Eigen::ArrayXd t(k);
            for (int j = 0; j < k; ++j) {
                const double z = (targets(i) - fw.mdn.mu(i, j)) / fw.mdn.sigma(i, j);
                t(j) = fw.mdn.log_alpha(i, j) - 0.5 * kLogTwoPi - std::log(fw.mdn.sigma(i, j)) -
                       0.5 * z * z;
                max_t = std::max(max_t, t(j));
            }
            const double lse = max_t + std::log((t - max_t).exp().sum());
            acc -= lse;
            fw.resp.row(i) = (t - lse).exp().transpose();
        }
        fw.data_loss = acc / n;
    }
    return fw;
}

}  // namespace

double loss(Network& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
            double l2, Mode mode, const DropoutMasks* masks) {
    LossForward fw = loss_forward(net, inputs, targets, mode, masks, false, false);
    return fw.data_loss + l2 * l2_penalty(net);
}

std::pair<double, Eigen::VectorXd> loss_and_gradient(Network& net, const Eigen::MatrixXd& inputs,
                                                     const Eigen::VectorXd& targets, double l2,
                                                     const DropoutMasks* masks,
                                                     bool update_running) {
    LossForward fw =
        loss_forward(net, inputs, targets, Mode::train, masks, update_running, true);
    const double total_loss = fw.data_loss + l2 * l2_penalty(net);
    const double n = static_cast<double>(inputs.rows());

    // head backward
    Eigen::MatrixXd d_hidden;
    DenseLayer d_reg;
    DenseLayer d_alpha, d_mu_layer, d_sigma_layer;
    if (net.head_kind == HeadKind::regression) {
        Eigen::VectorXd d_pred = 2.0 * (fw.pred - targets) / n;
        d_reg.weights.noalias() = fw.hidden.transpose() * d_pred;
        d_reg.bias = Eigen::VectorXd::Constant(1, d_pred.sum());
        d_hidden.noalias() = d_pred * net.reg_head.out.weights.transpose();
    } else {
        const int k = net.mdn_head.components;
        Eigen::MatrixXd d_z_alpha = (fw.mdn.alpha - fw.resp) / n;
        Eigen::MatrixXd d_z_mu(inputs.rows(), k);
        Eigen::MatrixXd d_z_sigma(inputs.rows(), k);
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
            for (int j = 0; j < k; ++j) {
                const double sig = fw.mdn.sigma(i, j);
                const double diff = targets(i) - fw.mdn.mu(i, j);
                const double r = fw.resp(i, j);
                d_z_mu(i, j) = -r * diff / (sig * sig) / n;
                const double d_sigma = -r * (diff * diff / (sig * sig * sig) - 1.0 / sig) / n;
                d_z_sigma(i, j) = d_sigma * sigmoid(fw.mdn.z_sigma(i, j));
            }
        }
        d_alpha.weights.noalias() = fw.hidden.transpose() * d_z_alpha;
        d_alpha.bias = d_z_alpha.colwise().sum();
        d_mu_layer.weights.noalias() = fw.hidden.transpose() * d_z_mu;
        d_mu_layer.bias = d_z_mu.colwise().sum();
        d_sigma_layer.weights.noalias() = fw.hidden.transpose() * d_z_sigma;
        d_sigma_layer.bias = d_z_sigma.colwise().sum();
        d_hidden.noalias() = d_z_alpha * net.mdn_head.weight_layer.weights.transpose();
        d_hidden.noalias() += d_z_mu * net.mdn_head.mean_layer.weights.transpose();
        d_hidden.noalias() += d_z_sigma * net.mdn_head.std_layer.weights.transpose();
    }

    // hidden stack backward
    std::vector<BlockGrads> block_grads(net.blocks.size());
    Eigen::MatrixXd d_x = std::move(d_hidden);
    for (int b = static_cast<int>(net.blocks.size()) - 1; b >= 0; --b) {
        const Eigen::MatrixXd* mask = nullptr;
        if (masks != nullptr && static_cast<std::size_t>(b) < masks->block_masks.size() &&
            masks->block_masks[b].size() > 0) {
            mask = &masks->block_masks[b];
        }
        d_x = backward_block(net.blocks[b], fw.caches[b], mask, d_x, block_grads[b], b > 0);
    }

    // L2 contributions
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        block_grads[b].d_weights += 2.0 * l2 * net.blocks[b].dense.weights;
        block_grads[b].d_gamma += 2.0 * l2 * net.blocks[b].bn.gamma;
    }
    if (net.head_kind == HeadKind::regression) {
        d_reg.weights += 2.0 * l2 * net.reg_head.out.weights;
    } else {
        d_alpha.weights += 2.0 * l2 * net.mdn_head.weight_layer.weights;
        d_mu_layer.weights += 2.0 * l2 * net.mdn_head.mean_layer.weights;
        d_sigma_layer.weights += 2.0 * l2 * net.mdn_head.std_layer.weights;
    }

    // pack in the same order as pack_parameters
    Eigen::VectorXd grad(net.parameter_count());
    Eigen::Index pos = 0;
    auto put_mat = [&](const Eigen::MatrixXd& m) {
        grad.segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        pos += m.size();
    };
    auto put_vec = [&](const Eigen::VectorXd& v) {
        grad.segment(pos, v.size()) = v;
        pos += v.size();
    };
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        put_mat(block_grads[b].d_weights);
        put_vec(block_grads[b].d_bias);
        put_vec(block_grads[b].d_gamma);
        put_vec(block_grads[b].d_beta);
    }
    if (net.head_kind == HeadKind::regression) {
        put_mat(d_reg.weights);
        put_vec(d_reg.bias);
    } else {
        put_mat(d_alpha.weights);
        put_vec(d_alpha.bias);
        put_mat(d_mu_layer.weights);
        put_vec(d_mu_layer.bias);
        put_mat(d_sigma_layer.weights);
        put_vec(d_sigma_layer.bias);
    }
    return {total_loss, std::move(grad)};
}

AdamState make_adam_state(long parameter_count) {
    AdamState state;
    state.m = Eigen::VectorXd::Zero(parameter_count);
    state.v = Eigen::VectorXd::Zero(parameter_count);
    return state;
}

double learning_rate_at(const TrainConfig& cfg, long step) {
    return cfg.learning_rate * std::pow(cfg.decay_rate, static_cast<double>(step) / cfg.decay_steps);
}

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grads, const TrainConfig& cfg) {
    if (params.size() != state.m.size() || grads.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    const double lr = learning_rate_at(cfg, state.step);
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.array().square().matrix();
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    Eigen::ArrayXd m_hat = state.m.array() / bc1;
    Eigen::ArrayXd v_hat = state.v.array() / bc2;
    return params.array() - lr * m_hat / (v_hat.sqrt() + state.epsilon);
}

TrainResult train(Network& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                  const TrainConfig& cfg) {
    if (inputs.rows() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("train: inputs/targets row mismatch");
    }
    if (cfg.epochs < 0 || cfg.batch_size <= 0) {
        throw std::invalid_argument("train: bad epoch/batch configuration");
    }
    TrainResult result;
    if (cfg.epochs == 0) {
        return result;
    }

    const Eigen::Index n = inputs.rows();
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    Rng dropout_rng(derive_seed(cfg.seed, 2));
    bool any_dropout = false;
    for (const auto& block : net.blocks) {
        any_dropout = any_dropout || block.dropout_rate > 0.0;
    }

    Eigen::VectorXd params = pack_parameters(net);
    AdamState adam = make_adam_state(params.size());

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
    Eigen::MatrixXd batch_x;
    Eigen::VectorXd batch_y;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_acc = 0.0;
        int batch_index = 0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const Eigen::Index rows = std::min<Eigen::Index>(cfg.batch_size, n - start);
            batch_x.resize(rows, inputs.cols());
            batch_y.resize(rows);
            for (Eigen::Index r = 0; r < rows; ++r) {
                batch_x.row(r) = inputs.row(order[static_cast<std::size_t>(start + r)]);
                batch_y(r) = targets(order[static_cast<std::size_t>(start + r)]);
            }
            DropoutMasks masks;
            const DropoutMasks* mask_ptr = nullptr;
            if (any_dropout) {
                masks = make_dropout_masks(net, static_cast<int>(rows), dropout_rng);
                mask_ptr = &masks;
            }
            auto [batch_loss, grads] =
                loss_and_gradient(net, batch_x, batch_y, cfg.l2, mask_ptr, true);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "training loss became non-finite at epoch " << epoch << ", batch "
                    << batch_index;
                throw TrainingDivergedError(epoch, batch_index, msg.str());
            }
            params = adam_step(adam, params, grads, cfg);
            unpack_parameters(net, params);
            epoch_acc += batch_loss * static_cast<double>(rows);
        }
        result.epoch_loss.push_back(epoch_acc / static_cast<double>(n));
    }
    return result;
}

}  // namespace percept
