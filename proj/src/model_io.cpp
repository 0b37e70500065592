#include "percept/model_io.hpp"

#include <json.hpp>
#include <stdexcept>

#include "percept/fs_util.hpp"

namespace percept {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "aliased-percept-model";
constexpr int kFormatVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out;
    out["rows"] = m.rows();
    out["cols"] = m.cols();
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::MatrixXd>(data.data(), m.rows(), m.cols()) = m;
    out["data"] = data;
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw std::runtime_error("model file: matrix size mismatch");
    }
    Eigen::MatrixXd m(rows, cols);
    Eigen::Map<Eigen::MatrixXd>(m.data(), rows, cols) =
        Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                             static_cast<Eigen::Index>(data.size()));
}

json dense_to_json(const DenseLayer& layer) {
    json out;
    out["weights"] = matrix_to_json(layer.weights);
    out["bias"] = vector_to_json(layer.bias);
    return out;
}

DenseLayer dense_from_json(const json& j) {
    DenseLayer layer;
    layer.weights = matrix_from_json(j.at("weights"));
    layer.bias = vector_from_json(j.at("bias"));
    return layer;
}

json network_to_json(const Network& net) {
    json out;
    out["input_dim"] = net.input_dim;
    out["head_kind"] = net.head_kind == HeadKind::regression ? "regression" : "mdn";
    json blocks = json::array();
    for (const auto& block : net.blocks) {
        json b;
        b["dense"] = dense_to_json(block.dense);
        b["gamma"] = vector_to_json(block.bn.gamma);
        b["beta"] = vector_to_json(block.bn.beta);
        b["running_mean"] = vector_to_json(block.bn.running_mean);
        b["running_var"] = vector_to_json(block.bn.running_var);
        b["momentum"] = block.bn.momentum;
        b["epsilon"] = block.bn.epsilon;
        b["dropout_rate"] = block.dropout_rate;
        blocks.push_back(b);
    }
    out["blocks"] = blocks;
    if (net.head_kind == HeadKind::regression) {
        out["reg_head"] = dense_to_json(net.reg_head.out);
    } else {
        out["mdn_head"] = {{"weight_layer", dense_to_json(net.mdn_head.weight_layer)},
                           {"mean_layer", dense_to_json(net.mdn_head.mean_layer)},
                           {"std_layer", dense_to_json(net.mdn_head.std_layer)},
                           {"components", net.mdn_head.components}};
    }
    return out;
}

Network network_from_json(const json& j) {
    Network net;
    net.input_dim = j.at("input_dim").get<int>();
    net.head_kind = j.at("head_kind").get<std::string>() == "regression" ? HeadKind::regression
                                                                         : HeadKind::mdn;
    for (const auto& b : j.at("blocks")) {
        HiddenBlock block;
        block.dense = dense_from_json(b.at("dense"));
        block.bn.gamma = vector_from_json(b.at("gamma"));
        block.bn.beta = vector_from_json(b.at("beta"));
        block.bn.running_mean = vector_from_json(b.at("running_mean"));
        block.bn.running_var = vector_from_json(b.at("running_var"));
        block.bn.momentum = b.at("momentum").get<double>();
        block.bn.epsilon = b.at("epsilon").get<double>();
        block.dropout_rate = b.at("dropout_rate").get<double>();
        net.blocks.push_back(std::move(block));
    }
    if (net.head_kind == HeadKind::regression) {
        net.reg_head.out = dense_from_json(j.at("reg_head"));
    } else {
        const auto& h = j.at("mdn_head");
        net.mdn_head.weight_layer = dense_from_json(h.at("weight_layer"));
        net.mdn_head.mean_layer = dense_from_json(h.at("mean_layer"));
        net.mdn_head.std_layer = dense_from_json(h.at("std_layer"));
        net.mdn_head.components = h.at("components").get<int>();
    }
    return net;
}

json train_config_to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"decay_rate", cfg.decay_rate},
            {"decay_steps", cfg.decay_steps},
            {"l2", cfg.l2},
            {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.decay_rate = j.at("decay_rate").get<double>();
    cfg.decay_steps = j.at("decay_steps").get<double>();
    cfg.l2 = j.at("l2").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

json gp_to_json(const GpModel& gp) {
    json out;
    out["kernel"] = {{"kind", kernel_kind_name(gp.kernel.kind)},
                     {"sigma_s", gp.kernel.sigma_s},
                     {"length", gp.kernel.length},
                     {"alpha_rq", gp.kernel.alpha_rq}};
    out["sigma_n"] = gp.sigma_n;
    out["sparse"] = gp.sparse;
    out["inducing"] = gp.inducing;
    out["basis"] = matrix_to_json(gp.basis);
    out["chol_lower"] = matrix_to_json(gp.chol_lower);
    out["weights"] = vector_to_json(gp.weights);
    out["jitter"] = gp.jitter;
    return out;
}

GpModel gp_from_json(const json& j) {
    GpModel gp;
    gp.kernel.kind = kernel_kind_from_name(j.at("kernel").at("kind").get<std::string>());
    gp.kernel.sigma_s = j.at("kernel").at("sigma_s").get<double>();
    gp.kernel.length = j.at("kernel").at("length").get<double>();
    gp.kernel.alpha_rq = j.at("kernel").at("alpha_rq").get<double>();
    gp.sigma_n = j.at("sigma_n").get<double>();
    gp.sparse = j.at("sparse").get<bool>();
    gp.inducing = j.at("inducing").get<std::vector<int>>();
    gp.basis = matrix_from_json(j.at("basis"));
    gp.chol_lower = matrix_from_json(j.at("chol_lower"));
    gp.weights = vector_from_json(j.at("weights"));
    gp.jitter = j.at("jitter").get<double>();
    gp.fitted = true;
    return gp;
}

json arch_to_json(const NetworkConfig& arch) {
    return {{"input_dim", arch.input_dim},
            {"hidden", arch.hidden},
            {"dropout_rate", arch.dropout_rate},
            {"head", arch.head == HeadKind::regression ? "regression" : "mdn"},
            {"mdn_components", arch.mdn_components},
            {"target_min", arch.target_min},
            {"target_max", arch.target_max}};
}

NetworkConfig arch_from_json(const json& j) {
    NetworkConfig arch;
    arch.input_dim = j.at("input_dim").get<int>();
    arch.hidden = j.at("hidden").get<std::vector<int>>();
    arch.dropout_rate = j.at("dropout_rate").get<double>();
    arch.head = j.at("head").get<std::string>() == "regression" ? HeadKind::regression
                                                                : HeadKind::mdn;
    arch.mdn_components = j.at("mdn_components").get<int>();
    arch.target_min = j.at("target_min").get<double>();
    arch.target_max = j.at("target_max").get<double>();
    return arch;
}

}  // namespace

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) {
        throw std::invalid_argument("Standardizer: empty input");
    }
    Standardizer s;
    s.mean = x.colwise().mean();
    Eigen::VectorXd var =
        (x.rowwise() - s.mean.transpose()).array().square().colwise().mean();
    s.scale = var.array().sqrt();
    for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
        if (s.scale(i) < 1e-12) s.scale(i) = 1.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) {
        throw std::invalid_argument("Standardizer: dimension mismatch");
    }
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply_row(const Eigen::VectorXd& x) const {
    if (x.size() != mean.size()) {
        throw std::invalid_argument("Standardizer: dimension mismatch");
    }
    return ((x - mean).array() / scale.array()).matrix();
}

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::gp: return "gp";
        case ModelKind::nn: return "nn";
        case ModelKind::mdn5: return "mdn5";
    }
    throw std::invalid_argument("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "gp") return ModelKind::gp;
    if (name == "nn") return ModelKind::nn;
    if (name == "mdn5") return ModelKind::mdn5;
    throw std::invalid_argument("unknown model kind: " + name);
}

std::string target_kind_name(TargetKind kind) {
    switch (kind) {
        case TargetKind::position: return "position";
        case TargetKind::orientation: return "orientation";
        case TargetKind::curvature: return "curvature";
    }
    throw std::invalid_argument("unknown target kind");
}

TargetKind target_kind_from_name(const std::string& name) {
    if (name == "position") return TargetKind::position;
    if (name == "orientation") return TargetKind::orientation;
    if (name == "curvature") return TargetKind::curvature;
    throw std::invalid_argument("unknown target kind: " + name);
}

void save_model(const TrainedModel& model, const std::string& path) {
    json out;
    out["format"] = kFormatName;
    out["version"] = kFormatVersion;
    out["kind"] = model_kind_name(model.kind);
    out["target"] = target_kind_name(model.target);
    out["standardizer"] = {{"mean", vector_to_json(model.standardizer.mean)},
                           {"scale", vector_to_json(model.standardizer.scale)}};
    if (model.kind == ModelKind::gp) {
        out["gp"] = gp_to_json(model.gp);
    } else {
        out["network"] = network_to_json(model.net);
        out["arch"] = arch_to_json(model.arch);
        out["train_config"] = train_config_to_json(model.train_config);
    }
    atomic_write_text(path, out.dump());
}

TrainedModel load_model(const std::string& path) {
    json j = json::parse(read_text_file(path));
    if (j.at("format").get<std::string>() != kFormatName) {
        throw std::runtime_error("not a model file: " + path);
    }
    if (j.at("version").get<int>() != kFormatVersion) {
        throw std::runtime_error("unsupported model file version in " + path);
    }
    TrainedModel model;
    model.kind = model_kind_from_name(j.at("kind").get<std::string>());
    model.target = target_kind_from_name(j.at("target").get<std::string>());
    model.standardizer.mean = vector_from_json(j.at("standardizer").at("mean"));
    model.standardizer.scale = vector_from_json(j.at("standardizer").at("scale"));
    if (model.kind == ModelKind::gp) {
        model.gp = gp_from_json(j.at("gp"));
    } else {
        model.net = network_from_json(j.at("network"));
        model.arch = arch_from_json(j.at("arch"));
        model.train_config = train_config_from_json(j.at("train_config"));
    }
    return model;
}

}  // namespace percept
