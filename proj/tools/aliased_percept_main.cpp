#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "percept/bayesopt.hpp"
#include "percept/eval.hpp"
#include "percept/fs_util.hpp"
#include "percept/model_io.hpp"
#include "percept/rng.hpp"
#include "percept/svg.hpp"
#include "percept/tactile.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace percept;

namespace {

constexpr const char* kToolVersion = "aliased-percept 1.0.0";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string iso_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) {
        throw UsageError("input file not found: " + path);
    }
}

struct Manifest {
    std::string command;
    json config = json::object();
    json seeds = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::optional<std::string> dataset_provenance;
    std::string started;

    void write() const {
        json out;
        out["command"] = command;
        out["config"] = config;
        out["seeds"] = seeds;
        out["inputs"] = inputs;
        out["outputs"] = outputs;
        out["tool_version"] = kToolVersion;
        out["started"] = started;
        out["finished"] = iso_now();
        if (dataset_provenance.has_value()) {
            out["dataset_provenance"] = *dataset_provenance;
        }
        for (const auto& artifact : outputs) {
            atomic_write_text(artifact + ".manifest.json", out.dump(2));
        }
    }
};

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::uint64_t seed = 0;
    std::string out;
    int samples = 1000;
    double sigma_x = 0.02;
    double sigma_y = 0.0;
};

int run_gen_data(const GenDataArgs& args) {
    Manifest manifest;
    manifest.command = "gen-data";
    manifest.started = iso_now();
    manifest.config = {{"seed", args.seed},
                       {"samples_per_stimulus", args.samples},
                       {"sigma_x", args.sigma_x},
                       {"sigma_y", args.sigma_y}};
    manifest.seeds = {{"dataset", args.seed}};
    manifest.outputs = {args.out};
    manifest.dataset_provenance = provenance_name(Provenance::aliasing);

    TactileDataset data = generate_dataset({args.sigma_x, args.sigma_y}, args.seed, args.samples);
    write_dataset_csv(data, args.out);
    manifest.write();
    std::cerr << "gen-data: wrote " << data.size() << " rows to " << args.out << "\n";
    return 0;
}

// ------------------------------------------------------------------ filter

struct FilterArgs {
    std::string in;
    std::string out;
    std::string mode = "position_orientation";
};

int run_filter(const FilterArgs& args) {
    require_file(args.in);
    FilterMode mode;
    if (args.mode == "position_orientation") {
        mode = FilterMode::position_orientation;
    } else if (args.mode == "curvature") {
        mode = FilterMode::curvature;
    } else {
        throw UsageError("unknown filter mode: " + args.mode);
    }

    Manifest manifest;
    manifest.command = "filter";
    manifest.started = iso_now();
    manifest.config = {{"mode", args.mode}};
    manifest.inputs = {args.in};
    manifest.outputs = {args.out};

    TactileDataset data = read_dataset_csv(args.in);
    TactileDataset filtered = filter_no_aliasing(data, mode);
    manifest.dataset_provenance = provenance_name(filtered.provenance);
    manifest.seeds = {{"dataset", filtered.seed}};
    write_dataset_csv(filtered, args.out);
    manifest.write();
    std::cerr << "filter: kept " << filtered.size() << " of " << data.size() << " rows\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string model = "nn";
    std::string target = "position";
    std::string data;
    std::string out;
    std::string out_dir;
    int runs = 1;
    std::uint64_t seed = 0;
    std::vector<int> hidden = {32};
    double dropout = 0.0;
    int epochs = 2000;
    int batch_size = 256;
    double learning_rate = 0.001;
    double decay_rate = 0.5;
    double decay_steps = 10000;
    double l2 = 0.1;
    std::string kernel = "squared_exponential";
    int inducing = 512;
    int ml_subsample = 256;
};

ModelTrainOptions to_options(const TrainArgs& args) {
    ModelTrainOptions options;
    options.hidden = args.hidden;
    options.dropout_rate = args.dropout;
    options.train.epochs = args.epochs;
    options.train.batch_size = args.batch_size;
    options.train.learning_rate = args.learning_rate;
    options.train.decay_rate = args.decay_rate;
    options.train.decay_steps = args.decay_steps;
    options.train.l2 = args.l2;
    options.gp_kernel = kernel_kind_from_name(args.kernel);
    options.gp_inducing = args.inducing;
    options.gp_ml_subsample = args.ml_subsample;
    return options;
}

json train_config_json(const TrainArgs& args) {
    return {{"model", args.model},       {"target", args.target},
            {"hidden", args.hidden},     {"dropout", args.dropout},
            {"epochs", args.epochs},     {"batch_size", args.batch_size},
            {"learning_rate", args.learning_rate}, {"decay_rate", args.decay_rate},
            {"decay_steps", args.decay_steps},     {"l2", args.l2},
            {"kernel", args.kernel},     {"inducing", args.inducing},
            {"ml_subsample", args.ml_subsample},   {"runs", args.runs}};
}

int run_train(const TrainArgs& args) {
    require_file(args.data);
    if (args.runs < 1) throw UsageError("--runs must be >= 1");
    if (args.runs == 1 && args.out.empty()) throw UsageError("--out is required");
    if (args.runs > 1 && args.out_dir.empty()) {
        throw UsageError("--out-dir is required for multi-run training");
    }

    Manifest manifest;
    manifest.command = "train";
    manifest.started = iso_now();
    manifest.config = train_config_json(args);
    manifest.inputs = {args.data};
    manifest.seeds = {{"base", args.seed}};

    const ModelKind kind = model_kind_from_name(args.model);
    const TargetKind target = target_kind_from_name(args.target);
    const ModelTrainOptions options = to_options(args);
    TactileDataset data = read_dataset_csv(args.data);

    if (args.runs == 1) {
        TrainedModel model = train_model(kind, target, data, args.seed, options);
        save_model(model, args.out);
        manifest.outputs = {args.out};
        manifest.write();
        std::cerr << "train: saved " << args.out << "\n";
        return 0;
    }

    fs::create_directories(args.out_dir);
    for (int run = 0; run < args.runs; ++run) {
        const std::uint64_t seed = derive_seed(args.seed, static_cast<std::uint64_t>(run));
        TrainedModel model = train_model(kind, target, data, seed, options);
        const std::string path = (fs::path(args.out_dir) /
                                  (args.model + "_" + args.target + "_run" +
                                   std::to_string(run) + ".json"))
                                     .string();
        save_model(model, path);
        manifest.outputs.push_back(path);
        std::cerr << "train: saved " << path << "\n";
    }
    manifest.write();
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::vector<std::string> model_files;
    std::string data;
    std::string out;
    std::string report;
    std::string report_json_path;
    std::string rule = "mode_density";
    std::string uncertainty = "none";
    std::string train_tag = "train";
    std::string test_tag = "test";
};

int run_eval(const EvalArgs& args) {
    if (args.model_files.empty()) throw UsageError("at least one --model-file is required");
    for (const auto& f : args.model_files) require_file(f);
    require_file(args.data);
    if (!args.out.empty() && args.model_files.size() != 1) {
        throw UsageError("--out needs exactly one --model-file");
    }

    Manifest manifest;
    manifest.command = "eval";
    manifest.started = iso_now();
    manifest.config = {{"rule", args.rule},
                       {"uncertainty", args.uncertainty},
                       {"train_tag", args.train_tag},
                       {"test_tag", args.test_tag}};
    manifest.inputs = args.model_files;
    manifest.inputs.push_back(args.data);

    const PredictionRule rule = prediction_rule_from_name(args.rule);
    std::optional<UncertaintyRule> unc;
    if (args.uncertainty != "none") {
        unc = uncertainty_rule_from_name(args.uncertainty);
    }

    TactileDataset data = read_dataset_csv(args.data);

    RunReport report;
    report.requested_runs = static_cast<int>(args.model_files.size());
    report.train_tag = args.train_tag;
    report.test_tag = args.test_tag;

    for (std::size_t m = 0; m < args.model_files.size(); ++m) {
        TrainedModel model = load_model(args.model_files[m]);
        report.model = model_kind_name(model.kind);
        report.target = target_kind_name(model.target);
        PredictionTable table = predict_with_uncertainty(model, data, rule, unc);
        const Eigen::VectorXd targets = dataset_targets(data, model.target);
        report.run_rms.push_back(rms_error(table.prediction, targets));

        if (!args.out.empty()) {
            const auto flags = aliased_flags(data, model.target);
            std::string csv = "row,truth,prediction,uncertainty,aliased\n";
            for (Eigen::Index i = 0; i < data.size(); ++i) {
                csv += std::to_string(i);
                csv += ',';
                csv += format_g9(targets(i));
                csv += ',';
                csv += format_g9(table.prediction(i));
                csv += ',';
                if (table.has_uncertainty) csv += format_g9(table.uncertainty(i));
                csv += ',';
                csv += flags[static_cast<std::size_t>(i)] ? '1' : '0';
                csv += '\n';
            }
            atomic_write_text(args.out, csv);
            manifest.outputs.push_back(args.out);
        }
    }

    report.completed_runs = static_cast<int>(report.run_rms.size());
    double mean = 0.0;
    for (double v : report.run_rms) mean += v;
    mean /= static_cast<double>(report.run_rms.size());
    double ss = 0.0;
    for (double v : report.run_rms) ss += (v - mean) * (v - mean);
    report.mean_rms = mean;
    report.std_rms = report.run_rms.size() > 1
                         ? std::sqrt(ss / (static_cast<double>(report.run_rms.size()) - 1.0))
                         : 0.0;

    if (!args.report.empty()) {
        atomic_write_text(args.report, report_csv({report}));
        manifest.outputs.push_back(args.report);
    }
    if (!args.report_json_path.empty()) {
        atomic_write_text(args.report_json_path, report_json({report}));
        manifest.outputs.push_back(args.report_json_path);
    }
    manifest.write();
    std::cerr << "eval: mean RMS " << report.mean_rms << " over " << report.completed_runs
              << " model(s)\n";
    return 0;
}

// --------------------------------------------------------------- sdm-sweep

struct SdmArgs {
    std::string pred;
    std::string out;
    int points = 64;
};

struct PredictionRows {
    Eigen::VectorXd truth;
    Eigen::VectorXd prediction;
    Eigen::VectorXd uncertainty;
    std::vector<bool> aliased;
    bool has_uncertainty = false;
};

PredictionRows read_predictions_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("row,truth,prediction,uncertainty,aliased", 0) != 0) {
        throw std::runtime_error("not a predictions CSV: " + path);
    }
    std::vector<double> truth, pred, unc;
    std::vector<bool> aliased;
    bool any_unc = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');  // row index
        std::getline(row, field, ',');
        truth.push_back(std::stod(field));
        std::getline(row, field, ',');
        pred.push_back(std::stod(field));
        std::getline(row, field, ',');
        if (field.empty()) {
            unc.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
            unc.push_back(std::stod(field));
            any_unc = true;
        }
        std::getline(row, field, ',');
        aliased.push_back(field == "1");
    }
    PredictionRows rows;
    const auto n = static_cast<Eigen::Index>(truth.size());
    rows.truth = Eigen::Map<Eigen::VectorXd>(truth.data(), n);
    rows.prediction = Eigen::Map<Eigen::VectorXd>(pred.data(), n);
    rows.uncertainty = Eigen::Map<Eigen::VectorXd>(unc.data(), n);
    rows.aliased = std::move(aliased);
    rows.has_uncertainty = any_unc;
    return rows;
}

int run_sdm_sweep(const SdmArgs& args) {
    require_file(args.pred);
    PredictionRows rows = read_predictions_csv(args.pred);
    if (rows.truth.size() == 0) {
        throw std::runtime_error("predictions file has no rows: " + args.pred);
    }
    if (!rows.has_uncertainty) {
        throw std::runtime_error("predictions file carries no uncertainties: " + args.pred);
    }

    Manifest manifest;
    manifest.command = "sdm-sweep";
    manifest.started = iso_now();
    manifest.config = {{"points", args.points}};
    manifest.inputs = {args.pred};
    manifest.outputs = {args.out};

    auto grid = default_threshold_grid(rows.uncertainty, args.points);
    SdmCurve curve = sdm_sweep(rows.prediction, rows.uncertainty, rows.truth, grid);

    std::string csv = "threshold,rejection_rate,rms,accepted\n";
    const auto n = static_cast<double>(rows.truth.size());
    for (const auto& p : curve.points) {
        csv += format_g9(p.threshold);
        csv += ',';
        csv += format_g9(p.rejection_rate);
        csv += ',';
        if (p.rms.has_value()) csv += format_g9(*p.rms);
        csv += ',';
        csv += std::to_string(static_cast<long>(std::lround((1.0 - p.rejection_rate) * n)));
        csv += '\n';
    }
    atomic_write_text(args.out, csv);
    manifest.write();
    return 0;
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
    std::string kind;
    std::string in;
    std::string out;
    std::string title;
};

SdmCurve read_curve_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("threshold,rejection_rate,rms", 0) != 0) {
        throw std::runtime_error("not an SDM curve CSV: " + path);
    }
    SdmCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        SdmPoint p;
        std::getline(row, field, ',');
        p.threshold = std::stod(field);
        std::getline(row, field, ',');
        p.rejection_rate = std::stod(field);
        std::getline(row, field, ',');
        if (!field.empty()) p.rms = std::stod(field);
        curve.points.push_back(p);
    }
    return curve;
}

int run_plot(const PlotArgs& args) {
    require_file(args.in);
    Manifest manifest;
    manifest.command = "plot";
    manifest.started = iso_now();
    manifest.config = {{"kind", args.kind}, {"title", args.title}};
    manifest.inputs = {args.in};
    manifest.outputs = {args.out};

    std::string svg;
    if (args.kind == "scatter_uncertainty") {
        PredictionRows rows = read_predictions_csv(args.in);
        if (rows.truth.size() == 0) {
            throw std::runtime_error("no data rows in " + args.in);
        }
        std::vector<ScatterPoint> pts;
        pts.reserve(static_cast<std::size_t>(rows.truth.size()));
        for (Eigen::Index i = 0; i < rows.truth.size(); ++i) {
            pts.push_back({rows.truth(i), rows.prediction(i),
                           rows.has_uncertainty ? rows.uncertainty(i) : 0.0});
        }
        svg = render_scatter_svg(pts, rows.has_uncertainty, "ground truth", "prediction",
                                 args.title.empty() ? "prediction vs ground truth" : args.title);
    } else if (args.kind == "sdm_curve") {
        SdmCurve curve = read_curve_csv(args.in);
        if (curve.points.empty()) {
            throw std::runtime_error("no data rows in " + args.in);
        }
        svg = render_sdm_svg(curve, args.title.empty() ? "sequential decision sweep" : args.title);
    } else if (args.kind == "rms_table") {
        auto reports = report_from_csv(read_text_file(args.in));
        if (reports.empty()) {
            throw std::runtime_error("no data rows in " + args.in);
        }
        svg = render_rms_table_svg(reports);
    } else {
        throw UsageError("unknown plot kind: " + args.kind);
    }
    atomic_write_text(args.out, svg);
    manifest.write();
    return 0;
}

// ---------------------------------------------------------------- hyperopt

struct HyperoptArgs {
    std::string model = "nn";
    std::string target = "position";
    std::string data;
    std::string out;
    std::string trace;
    int budget = 40;
    std::uint64_t seed = 0;
    int epochs = 500;
    double split = 0.8;
};

TactileDataset take_rows(const TactileDataset& data, const std::vector<Eigen::Index>& idx) {
    TactileDataset out;
    out.seed = data.seed;
    out.provenance = data.provenance;
    out.rows.reserve(idx.size());
    out.observations.resize(static_cast<Eigen::Index>(idx.size()), kObservationDim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.rows.push_back(data.rows[static_cast<std::size_t>(idx[i])]);
        out.observations.row(static_cast<Eigen::Index>(i)) = data.observations.row(idx[i]);
    }
    return out;
}

int run_hyperopt(const HyperoptArgs& args) {
    require_file(args.data);
    if (args.split <= 0.0 || args.split >= 1.0) throw UsageError("--split must lie in (0, 1)");

    Manifest manifest;
    manifest.command = "hyperopt";
    manifest.started = iso_now();
    manifest.config = {{"model", args.model}, {"target", args.target},
                       {"budget", args.budget}, {"epochs", args.epochs},
                       {"split", args.split}};
    manifest.seeds = {{"optimizer", args.seed}};
    manifest.inputs = {args.data};

    const ModelKind kind = model_kind_from_name(args.model);
    const TargetKind target = target_kind_from_name(args.target);
    TactileDataset data = read_dataset_csv(args.data);
    if (data.size() < 10) throw UsageError("dataset too small for an 80/20 split");

    // seeded split: train on the first 80%, validate on the rest
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(args.seed, 51));
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(args.split * static_cast<double>(data.size()));
    TactileDataset train_part = take_rows(
        data, std::vector<Eigen::Index>(order.begin(), order.begin() + static_cast<long>(n_train)));
    TactileDataset val_part = take_rows(
        data, std::vector<Eigen::Index>(order.begin() + static_cast<long>(n_train), order.end()));
    const Eigen::VectorXd val_targets = dataset_targets(val_part, target);

    SearchSpace space;
    BoObjective objective;
    if (kind == ModelKind::gp) {
        space.dims = {
            {"kernel", DimensionKind::categorical, 0, 0,
             {"exponential", "matern32", "matern52", "rational_quadratic",
              "squared_exponential"}},
            {"length_scale", DimensionKind::log_continuous, 0.1, 100.0, {}},
        };
        objective = [&](const BoConfig& cfg, std::uint64_t seed) -> double {
            ModelTrainOptions options;
            options.gp_kernel = kernel_kind_from_name(
                space.dims[0].categories[static_cast<std::size_t>(cfg[0])]);
            options.gp_inducing = 512;
            // fix the outer-loop length scale; the inner fit tunes the levels
            TrainedModel model;
            model.kind = ModelKind::gp;
            model.target = target;
            model.standardizer = Standardizer::fit(train_part.observations);
            const Eigen::MatrixXd x = model.standardizer.apply(train_part.observations);
            const Eigen::VectorXd y = dataset_targets(train_part, target);
            Rng sub_rng(derive_seed(seed, 61));
            std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
            std::iota(rows.begin(), rows.end(), 0);
            sub_rng.shuffle(rows);
            const auto ml_rows = std::min<Eigen::Index>(256, x.rows());
            Eigen::MatrixXd x_ml(ml_rows, x.cols());
            Eigen::VectorXd y_ml(ml_rows);
            for (Eigen::Index i = 0; i < ml_rows; ++i) {
                x_ml.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
                y_ml(i) = y(rows[static_cast<std::size_t>(i)]);
            }
            HyperFitOptions hopt;
            hopt.optimize_length = false;
            hopt.fixed_length = cfg[1];
            hopt.seed = derive_seed(seed, 62);
            HyperFitResult fit = optimize_hypers(x_ml, y_ml, options.gp_kernel, hopt);
            const auto m = std::min<Eigen::Index>(512, x.rows());
            std::vector<int> inducing(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i) {
                inducing[static_cast<std::size_t>(i)] =
                    static_cast<int>(rows[static_cast<std::size_t>(i)]);
            }
            model.gp = fit_sor(x, y, fit.kernel, fit.sigma_n, inducing);
            PredictionTable table =
                predict_with_uncertainty(model, val_part, PredictionRule::mean, std::nullopt);
            return (table.prediction - val_targets).array().square().mean();
        };
    } else {
        space.dims = {
            {"layers", DimensionKind::integer, 1, 5, {}},
            {"width", DimensionKind::log_continuous, 32, 512, {}},
            {"dropout", DimensionKind::continuous, 0.0, 0.5, {}},
            {"l2", DimensionKind::log_continuous, 0.1, 10.0, {}},
        };
        objective = [&](const BoConfig& cfg, std::uint64_t seed) -> double {
            ModelTrainOptions options;
            const int layers = static_cast<int>(cfg[0]);
            const int width = std::max(1, static_cast<int>(std::lround(cfg[1])));
            options.hidden.assign(static_cast<std::size_t>(layers), width);
            options.dropout_rate = cfg[2];
            options.train.l2 = cfg[3];
            options.train.epochs = args.epochs;
            TrainedModel model = train_model(kind, target, train_part, seed, options);
            if (kind == ModelKind::nn) {
                PredictionTable table =
                    predict_with_uncertainty(model, val_part, PredictionRule::mean, std::nullopt);
                return (table.prediction - val_targets).array().square().mean();
            }
            // MDN: validation negative log-likelihood
            const Eigen::MatrixXd xv = model.standardizer.apply(val_part.observations);
            return loss(model.net, xv, val_targets, 0.0, Mode::eval);
        };
    }

    BoResult result = optimize(objective, space, args.budget, args.seed);

    json best;
    best["model"] = args.model;
    best["target"] = args.target;
    best["raw_loss"] = result.best_raw_loss;
    best["trial"] = result.best_trial;
    json cfg_json = json::object();
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const auto& dim = space.dims[d];
        if (dim.kind == DimensionKind::categorical) {
            cfg_json[dim.name] =
                dim.categories[static_cast<std::size_t>(result.best_config[d])];
        } else {
            cfg_json[dim.name] = result.best_config[d];
        }
    }
    best["config"] = cfg_json;
    atomic_write_text(args.out, best.dump(2));
    manifest.outputs = {args.out};
    if (!args.trace.empty()) {
        atomic_write_text(args.trace, trace_csv(space, result.trace));
        manifest.outputs.push_back(args.trace);
    }
    manifest.write();
    std::cerr << "hyperopt: best raw loss " << result.best_raw_loss << " at trial "
              << result.best_trial << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tactile-aliasing regression testbed: mixture density networks against "
                 "GP and NN baselines on a synthetic marker-displacement simulator"};
    app.require_subcommand(1);
    // optional config file; explicit flags take precedence
    app.set_config("--config");

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic tactile dataset CSV");
    gen->add_option("--seed", gen_args.seed, "Dataset seed")->required();
    gen->add_option("--out", gen_args.out, "Output CSV path")->required();
    gen->add_option("--samples-per-stimulus", gen_args.samples, "Taps per stimulus");
    gen->add_option("--sigma-x", gen_args.sigma_x, "Sensor noise (mm)");
    gen->add_option("--sigma-y", gen_args.sigma_y, "Pose label noise");

    FilterArgs filter_args;
    auto* filt = app.add_subcommand("filter", "Remove known aliasing sources from a dataset");
    filt->add_option("--in", filter_args.in, "Input dataset CSV")->required();
    filt->add_option("--out", filter_args.out, "Output dataset CSV")->required();
    filt->add_option("--mode", filter_args.mode,
                     "position_orientation (stimuli 1-8, |pos|<=10) or curvature "
                     "(stimuli 4-9, |pos|<=5)");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "Train a gp / nn / mdn5 model");
    tr->add_option("--model", train_args.model, "gp, nn or mdn5")->required();
    tr->add_option("--target", train_args.target, "position, orientation or curvature")
        ->required();
    tr->add_option("--data", train_args.data, "Training dataset CSV")->required();
    tr->add_option("--out", train_args.out, "Output model file (single run)");
    tr->add_option("--out-dir", train_args.out_dir, "Output directory (multi run)");
    tr->add_option("--runs", train_args.runs, "Independently seeded training runs");
    tr->add_option("--seed", train_args.seed, "Base seed");
    tr->add_option("--hidden", train_args.hidden, "Hidden layer widths");
    tr->add_option("--dropout", train_args.dropout, "Dropout rate [0, 0.5]");
    tr->add_option("--epochs", train_args.epochs, "Training epochs");
    tr->add_option("--batch-size", train_args.batch_size, "Mini-batch size");
    tr->add_option("--lr", train_args.learning_rate, "Initial learning rate");
    tr->add_option("--decay-rate", train_args.decay_rate, "LR decay factor");
    tr->add_option("--decay-steps", train_args.decay_steps, "LR decay steps");
    tr->add_option("--l2", train_args.l2, "L2 coefficient");
    tr->add_option("--kernel", train_args.kernel, "GP kernel kind");
    tr->add_option("--inducing", train_args.inducing, "GP SoR inducing-point count");
    tr->add_option("--ml-subsample", train_args.ml_subsample,
                   "GP marginal-likelihood subsample size");

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "Evaluate trained models on a dataset");
    ev->add_option("--model-file", eval_args.model_files, "Model file(s)")->required();
    ev->add_option("--data", eval_args.data, "Evaluation dataset CSV")->required();
    ev->add_option("--out", eval_args.out, "Predictions CSV (single model)");
    ev->add_option("--report", eval_args.report, "Aggregated report CSV");
    ev->add_option("--report-json", eval_args.report_json_path, "Aggregated report JSON");
    ev->add_option("--rule", eval_args.rule, "mode_density, mode_weight or mean");
    ev->add_option("--uncertainty", eval_args.uncertainty, "entropy, std or none");
    ev->add_option("--train-tag", eval_args.train_tag, "Report label for the training set");
    ev->add_option("--test-tag", eval_args.test_tag, "Report label for this test set");

    SdmArgs sdm_args;
    auto* sdm = app.add_subcommand("sdm-sweep", "Threshold sweep over prediction uncertainties");
    sdm->add_option("--pred", sdm_args.pred, "Predictions CSV from eval")->required();
    sdm->add_option("--out", sdm_args.out, "Curve CSV path")->required();
    sdm->add_option("--points", sdm_args.points, "Threshold grid size");

    PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "Render SVG figures from CSV artifacts");
    plot->add_option("--kind", plot_args.kind,
                     "scatter_uncertainty, sdm_curve or rms_table")->required();
    plot->add_option("--in", plot_args.in, "Input CSV")->required();
    plot->add_option("--out", plot_args.out, "Output SVG path")->required();
    plot->add_option("--title", plot_args.title, "Plot title");

    HyperoptArgs hyper_args;
    auto* hyper = app.add_subcommand("hyperopt", "Bayesian hyperparameter search (40 trials)");
    hyper->add_option("--model", hyper_args.model, "gp, nn or mdn5")->required();
    hyper->add_option("--target", hyper_args.target, "position, orientation or curvature")
        ->required();
    hyper->add_option("--data", hyper_args.data, "Training dataset CSV")->required();
    hyper->add_option("--out", hyper_args.out, "Best-configuration JSON")->required();
    hyper->add_option("--trace", hyper_args.trace, "Trial trace CSV");
    hyper->add_option("--budget", hyper_args.budget, "Trial evaluations");
    hyper->add_option("--seed", hyper_args.seed, "Optimizer seed");
    hyper->add_option("--epochs", hyper_args.epochs, "Inner training epochs (nn/mdn5)");
    hyper->add_option("--split", hyper_args.split, "Training fraction of the 80/20 split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (filt->parsed()) return run_filter(filter_args);
        if (tr->parsed()) return run_train(train_args);
        if (ev->parsed()) return run_eval(eval_args);
        if (sdm->parsed()) return run_sdm_sweep(sdm_args);
        if (plot->parsed()) return run_plot(plot_args);
        if (hyper->parsed()) return run_hyperopt(hyper_args);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
