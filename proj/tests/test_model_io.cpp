#include <doctest.h>

#include <filesystem>

#include "percept/eval.hpp"
#include "percept/fs_util.hpp"
#include "percept/model_io.hpp"
#include "percept/tactile.hpp"

using namespace percept;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "percept_model_io";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("standardizer centers and scales, flooring dead features") {
    Eigen::MatrixXd x(4, 3);
    x << 1.0, 5.0, 2.0,
         2.0, 5.0, 4.0,
         3.0, 5.0, 6.0,
         4.0, 5.0, 8.0;
    Standardizer s = Standardizer::fit(x);
    Eigen::MatrixXd z = s.apply(x);
    for (int j = 0; j < 3; ++j) {
        CHECK(z.col(j).mean() == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(s.scale(1) == 1.0);  // constant column passes through centered
    CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.col(0).squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nn and mdn model files round-trip value-exactly") {
    TactileDataset data = generate_dataset({0.05, 0.0}, 7, 3);
    ModelTrainOptions options;
    options.hidden = {6, 4};
    options.train.epochs = 3;
    options.train.batch_size = 8;

    for (ModelKind kind : {ModelKind::nn, ModelKind::mdn5}) {
        TrainedModel model = train_model(kind, TargetKind::orientation, data, 11, options);
        const auto path = (temp_dir() / (model_kind_name(kind) + ".json")).string();
        save_model(model, path);
        TrainedModel back = load_model(path);

        CHECK(back.kind == model.kind);
        CHECK(back.target == model.target);
        CHECK(back.standardizer.mean == model.standardizer.mean);
        CHECK(back.standardizer.scale == model.standardizer.scale);
        CHECK(pack_parameters(back.net) == pack_parameters(model.net));
        for (std::size_t b = 0; b < model.net.blocks.size(); ++b) {
            CHECK(back.net.blocks[b].bn.running_mean == model.net.blocks[b].bn.running_mean);
            CHECK(back.net.blocks[b].bn.running_var == model.net.blocks[b].bn.running_var);
        }
        CHECK(back.train_config.seed == model.train_config.seed);

        auto a = predict_with_uncertainty(model, data, PredictionRule::mean, std::nullopt);
        auto b = predict_with_uncertainty(back, data, PredictionRule::mean, std::nullopt);
        CHECK(a.prediction == b.prediction);
    }
}

TEST_CASE("gp model files round-trip value-exactly") {
    TactileDataset data = generate_dataset({0.05, 0.0}, 9, 4);
    ModelTrainOptions options;
    options.gp_inducing = 10;
    options.gp_ml_subsample = 16;

    TrainedModel model = train_model(ModelKind::gp, TargetKind::curvature, data, 13, options);
    const auto path = (temp_dir() / "gp.json").string();
    save_model(model, path);
    TrainedModel back = load_model(path);

    CHECK(back.gp.kernel.kind == model.gp.kernel.kind);
    CHECK(back.gp.kernel.sigma_s == model.gp.kernel.sigma_s);
    CHECK(back.gp.kernel.length == model.gp.kernel.length);
    CHECK(back.gp.sigma_n == model.gp.sigma_n);
    CHECK(back.gp.basis == model.gp.basis);
    CHECK(back.gp.weights == model.gp.weights);
    CHECK(back.gp.chol_lower == model.gp.chol_lower);
    CHECK(back.gp.inducing == model.gp.inducing);

    auto a = predict_with_uncertainty(model, data, PredictionRule::mean, std::nullopt);
    auto b = predict_with_uncertainty(back, data, PredictionRule::mean, std::nullopt);
    CHECK(a.prediction == b.prediction);
}

TEST_CASE("load_model rejects foreign files") {
    const auto path = (temp_dir() / "bogus.json").string();
    atomic_write_text(path, "{\"format\":\"something-else\",\"version\":1}");
    CHECK_THROWS(load_model(path));
}
