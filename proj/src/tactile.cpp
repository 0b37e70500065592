#include "percept/tactile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "percept/fs_util.hpp"
#include "percept/rng.hpp"

namespace percept {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSmallestRadius = 0.25;

std::vector<StimulusSpec> build_stimuli() {
    std::vector<StimulusSpec> out;
    double radius = kSmallestRadius;
    for (int id = 1; id <= 8; ++id) {
        StimulusSpec s;
        s.id = id;
        s.radius_mm = radius;
        s.lroc = std::log2(radius / kSmallestRadius);
        s.flat = false;
        out.push_back(s);
        radius *= 2.0;
    }
    StimulusSpec flat;
    flat.id = 9;
    flat.radius_mm = std::numeric_limits<double>::infinity();
    flat.lroc = 8.0;  // one LROC unit above stimulus 8, keeping the scale linear
    flat.flat = true;
    out.push_back(flat);
    return out;
}

std::vector<Eigen::Vector2d> build_layout() {
    std::vector<Eigen::Vector2d> out;
    out.reserve(kMarkerCount);
    out.emplace_back(0.0, 0.0);
    for (int ring = 1; ring <= 6; ++ring) {
        const double radius = 3.0 * ring;
        const int count = 6 * ring;
        for (int j = 0; j < count; ++j) {
            const double angle = 2.0 * kPi * j / count;
            out.emplace_back(radius * std::cos(angle), radius * std::sin(angle));
        }
    }
    return out;
}

inline double dome_mask(double rho, double reach) {
    const double q = rho / reach;
    return std::max(0.0, 1.0 - q * q);
}

}  // namespace

const std::vector<StimulusSpec>& standard_stimuli() {
    static const std::vector<StimulusSpec> stimuli = build_stimuli();
    return stimuli;
}

const StimulusSpec& stimulus_by_id(int id) {
    if (id < 1 || id > 9) {
        throw std::invalid_argument("stimulus id must be in 1..9");
    }
    return standard_stimuli()[static_cast<std::size_t>(id - 1)];
}

const std::vector<Eigen::Vector2d>& marker_layout() {
    static const std::vector<Eigen::Vector2d> layout = build_layout();
    return layout;
}

Eigen::VectorXd sensor_response(const StimulusSpec& stimulus, const Pose& pose,
                                const ContactModel& model) {
    const auto& markers = marker_layout();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kObservationDim);

    if (stimulus.flat) {
        // uniform indentation: delta_i = depth * mask(|m_i|), independent of pose
        for (int i = 0; i < kMarkerCount; ++i) {
            const Eigen::Vector2d& m = markers[static_cast<std::size_t>(i)];
            const double rho = m.norm();
            if (rho < model.contact_reach) {
                const Eigen::Vector2d grad_mask =
                    (-2.0 / (model.contact_reach * model.contact_reach)) * m;
                const Eigen::Vector2d disp = -model.gain * model.depth * grad_mask;
                out(2 * i) = disp.x();
                out(2 * i + 1) = disp.y();
            }
        }
        return out;
    }

    const double r_eff = std::clamp(stimulus.radius_mm, model.r_min, model.r_max);
    const double width = model.w0 + model.c * std::sqrt(r_eff * model.depth);
    // finite contact extent (chord half-width plus skin drape): the imprint
    // vanishes exactly beyond this distance
    const double extent = model.overhang + std::sqrt(2.0 * r_eff * model.depth);

    const double theta = pose.orient_deg * kPi / 180.0;
    // the ridge runs perpendicular to `normal`, offset pos_mm from the sensor
    // center; at orient 0 this is the vertical line x = pos_mm
    const Eigen::Vector2d normal(std::cos(theta), std::sin(theta));

    for (int i = 0; i < kMarkerCount; ++i) {
        const Eigen::Vector2d& m = markers[static_cast<std::size_t>(i)];
        const double marker_r = m.norm();
        if (marker_r >= model.contact_reach) continue;
        const double signed_dist = m.dot(normal) - pose.pos_mm;
        const double rho = std::abs(signed_dist);
        if (rho >= extent) continue;

        const double mask = dome_mask(marker_r, model.contact_reach);
        const double bump = 1.0 - (rho / extent) * (rho / extent);
        const double gauss = std::exp(-rho * rho / (2.0 * width * width));
        // bump^1.25 tracks the near-parabolic indentation of a ridge pressed
        // into the dome while keeping the displacement C1 at the contact edge
        const double bump_q = std::pow(bump, 0.25);
        const double profile = bump * bump_q * gauss;
        const double dprofile =
            -bump_q * gauss * rho * (2.5 / (extent * extent) + bump / (width * width));

        const Eigen::Vector2d grad_mask =
            (-2.0 / (model.contact_reach * model.contact_reach)) * m;
        const double sign = signed_dist >= 0.0 ? 1.0 : -1.0;
        const Eigen::Vector2d grad_delta =
            model.depth * (grad_mask * profile + mask * dprofile * sign * normal);
        const Eigen::Vector2d disp = -model.gain * grad_delta;
        out(2 * i) = disp.x();
        out(2 * i + 1) = disp.y();
    }
    return out;
}

Eigen::VectorXd observe(const StimulusSpec& stimulus, const Pose& pose, const NoiseSpec& noise,
                        std::uint64_t seed, const ContactModel& model) {
    if (noise.sigma_x < 0.0 || noise.sigma_y < 0.0) {
        throw std::invalid_argument("observe: noise levels must be non-negative");
    }
    Rng rng(seed);
    Pose actual = pose;
    if (noise.sigma_y > 0.0) {
        actual.pos_mm += rng.normal(0.0, noise.sigma_y);
        actual.orient_deg += rng.normal(0.0, noise.sigma_y);
    }
    Eigen::VectorXd out = sensor_response(stimulus, actual, model);
    if (noise.sigma_x > 0.0) {
        // five frames per tap, averaged
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(kObservationDim);
        for (int frame = 0; frame < 5; ++frame) {
            for (int c = 0; c < kObservationDim; ++c) {
                acc(c) += rng.normal(0.0, noise.sigma_x);
            }
        }
        out += acc / 5.0;
    }
    return out;
}

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::aliasing: return "aliasing";
        case Provenance::no_aliasing_po: return "no-aliasing-PO";
        case Provenance::no_aliasing_c: return "no-aliasing-C";
    }
    throw std::invalid_argument("unknown provenance");
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "aliasing") return Provenance::aliasing;
    if (name == "no-aliasing-PO") return Provenance::no_aliasing_po;
    if (name == "no-aliasing-C") return Provenance::no_aliasing_c;
    throw std::invalid_argument("unknown provenance: " + name);
}

TactileDataset generate_dataset(const NoiseSpec& noise, std::uint64_t seed,
                                int samples_per_stimulus, const ContactModel& model) {
    if (samples_per_stimulus < 0) {
        throw std::invalid_argument("generate_dataset: samples_per_stimulus must be >= 0");
    }
    TactileDataset data;
    data.seed = seed;
    data.provenance = Provenance::aliasing;
    const auto& stimuli = standard_stimuli();
    const auto total = static_cast<Eigen::Index>(stimuli.size()) * samples_per_stimulus;
    data.rows.reserve(static_cast<std::size_t>(total));
    data.observations.resize(total, kObservationDim);

    Eigen::Index row = 0;
    for (const auto& stim : stimuli) {
        for (int s = 0; s < samples_per_stimulus; ++s, ++row) {
            const auto r = static_cast<std::uint64_t>(row);
            Rng pose_rng(derive_seed(seed, 2 * r));
            Pose pose;
            pose.pos_mm = pose_rng.uniform(-15.0, 15.0);
            pose.orient_deg = pose_rng.uniform(-90.0, 90.0);

            TactileRow meta;
            meta.stimulus_id = stim.id;
            meta.radius_mm = stim.radius_mm;
            meta.pos_mm = pose.pos_mm;
            meta.orient_deg = pose.orient_deg;
            meta.lroc = stim.lroc;
            meta.alias_flat = stim.flat;
            meta.alias_sat = !stim.flat && stim.radius_mm <= model.r_min;
            meta.alias_nocontact = sensor_response(stim, pose, model).isZero(0.0);
            data.rows.push_back(meta);
            data.observations.row(row) =
                observe(stim, pose, noise, derive_seed(seed, 2 * r + 1), model);
        }
    }
    return data;
}

TactileDataset filter_no_aliasing(const TactileDataset& data, FilterMode mode) {
    const Provenance target = (mode == FilterMode::position_orientation)
                                  ? Provenance::no_aliasing_po
                                  : Provenance::no_aliasing_c;
    if (data.provenance != Provenance::aliasing && data.provenance != target) {
        throw std::invalid_argument("filter_no_aliasing: dataset provenance '" +
                                    provenance_name(data.provenance) +
                                    "' cannot be filtered in this mode");
    }
    auto keep = [&](const TactileRow& row) {
        if (mode == FilterMode::position_orientation) {
            return row.stimulus_id <= 8 && std::abs(row.pos_mm) <= 10.0;
        }
        return row.stimulus_id >= 4 && std::abs(row.pos_mm) <= 5.0;
    };

    TactileDataset out;
    out.seed = data.seed;
    out.provenance = target;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (keep(data.rows[static_cast<std::size_t>(i)])) {
            kept.push_back(i);
        }
    }
    out.rows.reserve(kept.size());
    out.observations.resize(static_cast<Eigen::Index>(kept.size()), kObservationDim);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        out.rows.push_back(data.rows[static_cast<std::size_t>(kept[i])]);
        out.observations.row(static_cast<Eigen::Index>(i)) = data.observations.row(kept[i]);
    }
    return out;
}

std::string dataset_csv_header() {
    std::string header =
        "stimulus_id,radius_mm,pos_mm,orient_deg,lroc,alias_flat,alias_nocontact,alias_sat";
    char buf[24];
    for (int m = 0; m < kMarkerCount; ++m) {
        std::snprintf(buf, sizeof(buf), ",m%03d_dx,m%03d_dy", m, m);
        header += buf;
    }
    return header;
}

void write_dataset_csv(const TactileDataset& data, const std::string& path) {
    std::string out;
    out.reserve(static_cast<std::size_t>(data.size() + 1) * 3200);
    out += dataset_csv_header();
    out += '\n';
    char buf[40];
    auto append_g9 = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        out += buf;
    };
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const auto& row = data.rows[static_cast<std::size_t>(i)];
        out += std::to_string(row.stimulus_id);
        out += ',';
        append_g9(row.radius_mm);
        out += ',';
        append_g9(row.pos_mm);
        out += ',';
        append_g9(row.orient_deg);
        out += ',';
        append_g9(row.lroc);
        out += ',';
        out += row.alias_flat ? '1' : '0';
        out += ',';
        out += row.alias_nocontact ? '1' : '0';
        out += ',';
        out += row.alias_sat ? '1' : '0';
        for (int c = 0; c < kObservationDim; ++c) {
            out += ',';
            append_g9(data.observations(i, c));
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

namespace {

Provenance infer_provenance(const TactileDataset& data) {
    bool has_flat = false;
    int min_id = 10;
    double max_abs_pos = 0.0;
    for (const auto& row : data.rows) {
        has_flat = has_flat || row.stimulus_id == 9;
        min_id = std::min(min_id, row.stimulus_id);
        max_abs_pos = std::max(max_abs_pos, std::abs(row.pos_mm));
    }
    if (!has_flat && max_abs_pos <= 10.0) return Provenance::no_aliasing_po;
    if (min_id >= 4 && max_abs_pos <= 5.0) return Provenance::no_aliasing_c;
    return Provenance::aliasing;
}

}  // namespace

TactileDataset read_dataset_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    TactileDataset data;

    std::size_t pos = text.find('\n');
    if (pos == std::string::npos || text.compare(0, pos, dataset_csv_header()) != 0) {
        throw std::runtime_error("dataset CSV header mismatch in " + path);
    }

    std::vector<TactileRow> rows;
    std::vector<double> obs_values;
    const char* p = text.c_str() + pos + 1;
    const char* end = text.c_str() + text.size();
    const int numeric_fields = 5 + 3 + kObservationDim;
    while (p < end && *p != '\0') {
        if (*p == '\n') {
            ++p;
            continue;
        }
        TactileRow row;
        char* next = nullptr;
        for (int field = 0; field < numeric_fields; ++field) {
            const double v = std::strtod(p, &next);
            if (next == p) {
                throw std::runtime_error("malformed dataset CSV row in " + path);
            }
            p = next;
            switch (field) {
                case 0: row.stimulus_id = static_cast<int>(v); break;
                case 1: row.radius_mm = v; break;
                case 2: row.pos_mm = v; break;
                case 3: row.orient_deg = v; break;
                case 4: row.lroc = v; break;
                case 5: row.alias_flat = v != 0.0; break;
                case 6: row.alias_nocontact = v != 0.0; break;
                case 7: row.alias_sat = v != 0.0; break;
                default: obs_values.push_back(v); break;
            }
            if (p < end && (*p == ',' || *p == '\n')) ++p;
        }
        rows.push_back(row);
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    data.rows = std::move(rows);
    data.observations.resize(n, kObservationDim);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < kObservationDim; ++c) {
            data.observations(i, c) =
                obs_values[static_cast<std::size_t>(i) * kObservationDim +
                           static_cast<std::size_t>(c)];
        }
    }

    // provenance: manifest next to the file wins, content inference otherwise
    data.provenance = infer_provenance(data);
    const std::string manifest_path = path + ".manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        try {
            auto manifest = nlohmann::json::parse(read_text_file(manifest_path));
            if (manifest.contains("dataset_provenance")) {
                data.provenance =
                    provenance_from_name(manifest["dataset_provenance"].get<std::string>());
            }
            if (manifest.contains("seeds") && manifest["seeds"].is_object() &&
                manifest["seeds"].contains("dataset")) {
                data.seed = manifest["seeds"]["dataset"].get<std::uint64_t>();
            }
        } catch (const std::exception&) {
            // unreadable manifest: keep the inferred provenance
        }
    }
    return data;
}

}  // namespace percept
