#include "percept/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "percept/mixture.hpp"
#include "percept/rng.hpp"

namespace percept {

double rms_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() == 0 || predictions.size() != targets.size()) {
        throw std::invalid_argument("rms_error: need equal, non-empty inputs");
    }
    return std::sqrt((predictions - targets).array().square().mean());
}

Eigen::VectorXd dataset_targets(const TactileDataset& data, TargetKind target) {
    Eigen::VectorXd out(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const auto& row = data.rows[static_cast<std::size_t>(i)];
        switch (target) {
            case TargetKind::position: out(i) = row.pos_mm; break;
            case TargetKind::orientation: out(i) = row.orient_deg; break;
            case TargetKind::curvature: out(i) = row.lroc; break;
        }
    }
    return out;
}

std::vector<bool> aliased_flags(const TactileDataset& data, TargetKind target) {
    std::vector<bool> out(static_cast<std::size_t>(data.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& row = data.rows[i];
        if (target == TargetKind::curvature) {
            out[i] = row.alias_sat || row.alias_nocontact;
        } else {
            out[i] = row.alias_flat || row.alias_nocontact;
        }
    }
    return out;
}

std::string prediction_rule_name(PredictionRule rule) {
    switch (rule) {
        case PredictionRule::mode_density: return "mode_density";
        case PredictionRule::mode_weight: return "mode_weight";
        case PredictionRule::mean: return "mean";
    }
    throw std::invalid_argument("unknown prediction rule");
}

PredictionRule prediction_rule_from_name(const std::string& name) {
    if (name == "mode_density") return PredictionRule::mode_density;
    if (name == "mode_weight") return PredictionRule::mode_weight;
    if (name == "mean") return PredictionRule::mean;
    throw std::invalid_argument("unknown prediction rule: " + name);
}

std::string uncertainty_rule_name(UncertaintyRule rule) {
    return rule == UncertaintyRule::entropy ? "entropy" : "std";
}

UncertaintyRule uncertainty_rule_from_name(const std::string& name) {
    if (name == "entropy") return UncertaintyRule::entropy;
    if (name == "std") return UncertaintyRule::stddev;
    throw std::invalid_argument("unknown uncertainty rule: " + name);
}

PredictionTable predict_with_uncertainty(const TrainedModel& model, const TactileDataset& data,
                                         PredictionRule rule,
                                         std::optional<UncertaintyRule> uncertainty) {
    if (uncertainty.has_value() && model.kind != ModelKind::mdn5) {
        throw CapabilityError("model kind '" + model_kind_name(model.kind) +
                              "' does not estimate prediction uncertainties");
    }
    PredictionTable table;
    const Eigen::MatrixXd x = model.standardizer.apply(data.observations);
    if (model.kind == ModelKind::gp) {
        table.prediction = predict_mean(model.gp, x);
        return table;
    }
    if (model.kind == ModelKind::nn) {
        table.prediction = forward_regression_batch(model.net, x);
        return table;
    }

    const auto mixtures = forward_mdn_batch(model.net, x);
    table.prediction.resize(data.size());
    if (uncertainty.has_value()) {
        table.uncertainty.resize(data.size());
        table.has_uncertainty = true;
    }
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const auto& gmm = mixtures[static_cast<std::size_t>(i)];
        switch (rule) {
            case PredictionRule::mode_density:
                table.prediction(i) = conditional_mode_density(gmm).value;
                break;
            case PredictionRule::mode_weight:
                table.prediction(i) = conditional_mode_weight(gmm).value;
                break;
            case PredictionRule::mean:
                table.prediction(i) = conditional_mean(gmm);
                break;
        }
        if (uncertainty.has_value()) {
            table.uncertainty(i) = (*uncertainty == UncertaintyRule::entropy)
                                       ? conditional_entropy(gmm)
                                       : conditional_std(gmm);
        }
    }
    return table;
}

TrainedModel train_model(ModelKind kind, TargetKind target, const TactileDataset& train_data,
                         std::uint64_t seed, const ModelTrainOptions& options) {
    if (train_data.size() == 0) {
        throw std::invalid_argument("train_model: empty training set");
    }
    TrainedModel model;
    model.kind = kind;
    model.target = target;
    model.standardizer = Standardizer::fit(train_data.observations);
    const Eigen::MatrixXd x = model.standardizer.apply(train_data.observations);
    const Eigen::VectorXd y = dataset_targets(train_data, target);

    if (kind == ModelKind::gp) {
        const auto n = x.rows();
        Rng rng(derive_seed(seed, 21));
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);

        // hyperparameters from the exact marginal likelihood on a subsample
        const auto ml_rows = std::min<Eigen::Index>(options.gp_ml_subsample, n);
        Eigen::MatrixXd x_ml(ml_rows, x.cols());
        Eigen::VectorXd y_ml(ml_rows);
        for (Eigen::Index i = 0; i < ml_rows; ++i) {
            x_ml.row(i) = x.row(order[static_cast<std::size_t>(i)]);
            y_ml(i) = y(order[static_cast<std::size_t>(i)]);
        }
        HyperFitOptions hopt;
        hopt.restarts = options.gp_restarts;
        hopt.seed = derive_seed(seed, 22);
        HyperFitResult fit = (ml_rows >= 2)
                                 ? optimize_hypers(x_ml, y_ml, options.gp_kernel, hopt)
                                 : HyperFitResult{Kernel{options.gp_kernel, 1.0, 1.0, 1.0}, 0.1, 0.0};

        const auto m = std::min<Eigen::Index>(options.gp_inducing, n);
        rng.shuffle(order);
        std::vector<int> inducing(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            inducing[static_cast<std::size_t>(i)] = static_cast<int>(order[static_cast<std::size_t>(i)]);
        }
        std::sort(inducing.begin(), inducing.end());
        model.gp = fit_sor(x, y, fit.kernel, fit.sigma_n, inducing);
        return model;
    }

    NetworkConfig arch;
    arch.input_dim = static_cast<int>(x.cols());
    arch.hidden = options.hidden;
    arch.dropout_rate = options.dropout_rate;
    if (kind == ModelKind::mdn5) {
        arch.head = HeadKind::mdn;
        arch.mdn_components = 5;
        arch.target_min = y.minCoeff();
        arch.target_max = y.maxCoeff();
    } else {
        arch.head = HeadKind::regression;
    }
    model.arch = arch;
    model.train_config = options.train;
    model.train_config.seed = seed;
    model.net = build_network(arch, derive_seed(seed, 31));
    train(model.net, x, y, model.train_config);
    return model;
}

int worker_count() {
    const char* env = std::getenv("ALIASED_PERCEPT_THREADS");
    if (env != nullptr) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

void finalize_report(RunReport& report) {
    report.completed_runs = static_cast<int>(report.run_rms.size());
    report.failed_runs = report.requested_runs - report.completed_runs;
    if (report.run_rms.empty()) {
        report.mean_rms = std::numeric_limits<double>::quiet_NaN();
        report.std_rms = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    const double n = static_cast<double>(report.run_rms.size());
    double mean = 0.0;
    for (double v : report.run_rms) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : report.run_rms) ss += (v - mean) * (v - mean);
    report.mean_rms = mean;
    report.std_rms = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace

ExperimentResult run_experiment_keep_models(const ExperimentProtocol& protocol) {
    if (protocol.train_data == nullptr || protocol.test_sets.empty()) {
        throw std::invalid_argument("run_experiment: train data and test sets are required");
    }
    if (protocol.runs < 1) {
        throw std::invalid_argument("run_experiment: runs must be >= 1");
    }

    struct RunOutcome {
        bool ok = false;
        std::vector<double> rms;  // per test set
        TrainedModel model;
        std::string error;
    };
    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(protocol.runs));

    auto execute_run = [&](int run) {
        RunOutcome& out = outcomes[static_cast<std::size_t>(run)];
        try {
            const std::uint64_t seed = derive_seed(protocol.base_seed, static_cast<std::uint64_t>(run));
            TrainedModel model = train_model(protocol.model, protocol.target, *protocol.train_data,
                                             seed, protocol.options);
            for (const auto& [tag, data] : protocol.test_sets) {
                (void)tag;
                PredictionTable table =
                    predict_with_uncertainty(model, *data, protocol.rule, std::nullopt);
                out.rms.push_back(rms_error(table.prediction, dataset_targets(*data, protocol.target)));
            }
            out.model = std::move(model);
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    };

    const int workers = std::min(worker_count(), protocol.runs);
    if (workers <= 1) {
        for (int run = 0; run < protocol.runs; ++run) execute_run(run);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (int run = next.fetch_add(1); run < protocol.runs; run = next.fetch_add(1)) {
                    execute_run(run);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    ExperimentResult result;
    result.reports.resize(protocol.test_sets.size());
    for (std::size_t t = 0; t < protocol.test_sets.size(); ++t) {
        RunReport& report = result.reports[t];
        report.model = model_kind_name(protocol.model);
        report.target = target_kind_name(protocol.target);
        report.train_tag = protocol.train_tag;
        report.test_tag = protocol.test_sets[t].first;
        report.requested_runs = protocol.runs;
        for (const auto& out : outcomes) {
            if (out.ok) report.run_rms.push_back(out.rms[t]);
        }
        finalize_report(report);
    }
    for (auto& out : outcomes) {
        if (out.ok) result.models.push_back(std::move(out.model));
    }
    return result;
}

std::vector<RunReport> run_experiment(const ExperimentProtocol& protocol) {
    return run_experiment_keep_models(protocol).reports;
}

SdmCurve sdm_sweep(const Eigen::VectorXd& predictions, const Eigen::VectorXd& uncertainties,
                   const Eigen::VectorXd& targets, const std::vector<double>& thresholds) {
    const auto n = predictions.size();
    if (n == 0 || uncertainties.size() != n || targets.size() != n) {
        throw std::invalid_argument("sdm_sweep: need equal, non-empty inputs");
    }
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw std::invalid_argument("sdm_sweep: thresholds must be sorted ascending");
    }
    SdmCurve curve;
    curve.points.reserve(thresholds.size());
    for (double tau : thresholds) {
        SdmPoint point;
        point.threshold = tau;
        double ss = 0.0;
        Eigen::Index accepted = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (uncertainties(i) < tau) {
                const double d = predictions(i) - targets(i);
                ss += d * d;
                ++accepted;
            }
        }
        point.rejection_rate = 1.0 - static_cast<double>(accepted) / static_cast<double>(n);
        if (accepted > 0) {
            point.rms = std::sqrt(ss / static_cast<double>(accepted));
        }
        curve.points.push_back(point);
    }
    return curve;
}

std::vector<double> default_threshold_grid(const Eigen::VectorXd& uncertainties, int count) {
    if (uncertainties.size() == 0 || count < 2) {
        throw std::invalid_argument("default_threshold_grid: need data and count >= 2");
    }
    const double lo = uncertainties.minCoeff();
    const double hi = uncertainties.maxCoeff();
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    }
    return out;
}

double aliasing_separation(const Eigen::VectorXd& uncertainties,
                           const std::vector<bool>& is_aliased) {
    const auto n = uncertainties.size();
    if (n == 0 || static_cast<Eigen::Index>(is_aliased.size()) != n) {
        throw std::invalid_argument("aliasing_separation: size mismatch");
    }
    Eigen::Index n_pos = 0;
    for (bool b : is_aliased) n_pos += b ? 1 : 0;
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("aliasing_separation: both classes must be present");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return uncertainties(a) < uncertainties(b);
    });

    // midranks over ties, then the Mann-Whitney statistic
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() &&
               uncertainties(order[j + 1]) == uncertainties(order[i])) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (is_aliased[static_cast<std::size_t>(order[k])]) {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string report_csv(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << "model,target,train,test,requested_runs,completed_runs,mean_rms,std_rms\n";
    for (const auto& r : reports) {
        out << r.model << ',' << r.target << ',' << r.train_tag << ',' << r.test_tag << ','
            << r.requested_runs << ',' << r.completed_runs << ',' << format_g(r.mean_rms) << ','
            << format_g(r.std_rms) << '\n';
    }
    return out.str();
}

std::string report_json(const std::vector<RunReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) {
        arr.push_back({{"model", r.model},
                       {"target", r.target},
                       {"train", r.train_tag},
                       {"test", r.test_tag},
                       {"requested_runs", r.requested_runs},
                       {"completed_runs", r.completed_runs},
                       {"failed_runs", r.failed_runs},
                       {"run_rms", r.run_rms},
                       {"mean_rms", r.mean_rms},
                       {"std_rms", r.std_rms}});
    }
    return arr.dump(2);
}

std::vector<RunReport> report_from_csv(const std::string& text) {
    std::vector<RunReport> out;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("report CSV: empty input");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        RunReport r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(row, field, ',')) {
                throw std::runtime_error("report CSV: malformed row");
            }
            return field;
        };
        r.model = next();
        r.target = next();
        r.train_tag = next();
        r.test_tag = next();
        r.requested_runs = std::stoi(next());
        r.completed_runs = std::stoi(next());
        r.mean_rms = std::stod(next());
        r.std_rms = std::stod(next());
        r.failed_runs = r.requested_runs - r.completed_runs;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace percept
