#pragma once

#include <Eigen/Dense>
#include <string>

#include "percept/gp.hpp"
#include "percept/net.hpp"

namespace percept {

/// Per-feature z-scoring. Features with (near-)zero spread are centered and
/// passed through with unit scale instead of dividing by zero.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd apply_row(const Eigen::VectorXd& x) const;
};

enum class ModelKind { gp, nn, mdn5 };
enum class TargetKind { position, orientation, curvature };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);
std::string target_kind_name(TargetKind kind);
TargetKind target_kind_from_name(const std::string& name);

/// A fitted model plus everything needed to reproduce its predictions:
/// input standardization and the training configuration snapshot.
struct TrainedModel {
    ModelKind kind = ModelKind::nn;
    TargetKind target = TargetKind::position;
    Standardizer standardizer;
    // nn / mdn5
    Network net;
    NetworkConfig arch;
    TrainConfig train_config;
    // gp
    GpModel gp;
};

/// Versioned structured-text container (JSON). Doubles are serialized with a
/// round-trip-exact representation, so save/load is value-exact.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace percept
