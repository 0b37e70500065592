#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace percept {

// Sensor geometry: 127 markers in hexagonal rings, 254-element observations.
constexpr int kMarkerCount = 127;
constexpr int kObservationDim = 2 * kMarkerCount;

/// One of the nine ridged stimuli. radius_mm is infinite for the flat one.
struct StimulusSpec {
    int id = 1;               // 1..9
    double radius_mm = 0.25;  // radius of curvature; inf = flat
    double lroc = 0.0;        // log2(radius / smallest radius); flat gets 8
    bool flat = false;
};

/// The nine standard stimuli: radii 0.25 mm doubling up to 32 mm, then flat.
const std::vector<StimulusSpec>& standard_stimuli();
const StimulusSpec& stimulus_by_id(int id);

struct Pose {
    double pos_mm = 0.0;      // ridge position, [-15, 15]
    double orient_deg = 0.0;  // ridge orientation, [-90, 90]
};

struct NoiseSpec {
    double sigma_x = 0.02;  // per-coordinate sensor noise, mm
    double sigma_y = 0.0;   // pose label noise
};

/// Contact-model constants (mm). depth is the tap depth; w0/c set the imprint
/// width as a function of effective curvature radius; gain scales indentation
/// gradient into marker displacement; contact_reach bounds the dome's contact
/// disc; r_min/r_max clamp radii to the skin compliance limits; overhang is
/// how far the draped skin extends the rigid contact chord.
struct ContactModel {
    double depth = 5.0;
    double w0 = 1.5;
    double c = 0.5;
    double gain = 0.6;
    double contact_reach = 12.0;
    double r_min = 1.0;
    double r_max = 1000.0;
    double overhang = 1.0;
};

/// Marker centers in mm: rings of radius 0,3,...,18 with 1,6,12,...,36 pins.
const std::vector<Eigen::Vector2d>& marker_layout();

/// Noiseless forward model g(pose): planar marker displacements, interleaved
/// (dx, dy) per marker. Exactly zero when the ridge misses the contact disc.
Eigen::VectorXd sensor_response(const StimulusSpec& stimulus, const Pose& pose,
                                const ContactModel& model = {});

/// Noisy observation: g evaluated at a noise-perturbed pose, plus the average
/// of five independent per-frame sensor-noise draws. Deterministic per seed.
Eigen::VectorXd observe(const StimulusSpec& stimulus, const Pose& pose, const NoiseSpec& noise,
                        std::uint64_t seed, const ContactModel& model = {});

enum class Provenance { aliasing, no_aliasing_po, no_aliasing_c };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct TactileRow {
    int stimulus_id = 0;
    double radius_mm = 0.0;
    double pos_mm = 0.0;
    double orient_deg = 0.0;
    double lroc = 0.0;
    // ground-truth aliasing annotations, for evaluation only
    bool alias_flat = false;
    bool alias_nocontact = false;
    bool alias_sat = false;
};

struct TactileDataset {
    std::vector<TactileRow> rows;
    Eigen::MatrixXd observations;  // rows x 254
    std::uint64_t seed = 0;
    Provenance provenance = Provenance::aliasing;

    Eigen::Index size() const { return observations.rows(); }
};

/// Uniform random poses, samples_per_stimulus taps per stimulus, with the
/// per-row seeds derived from the dataset seed so generation order does not
/// matter.
TactileDataset generate_dataset(const NoiseSpec& noise, std::uint64_t seed,
                                int samples_per_stimulus = 1000,
                                const ContactModel& model = {});

enum class FilterMode { position_orientation, curvature };

/// Remove the known aliasing sources: position/orientation mode keeps
/// stimuli 1-8 within |pos| <= 10 mm, curvature mode keeps stimuli 4-9 within
/// |pos| <= 5 mm. Idempotent; rejects datasets of an unrelated provenance.
TactileDataset filter_no_aliasing(const TactileDataset& data, FilterMode mode);

/// Fixed CSV layout, 9-significant-digit values, flat radius written as inf.
void write_dataset_csv(const TactileDataset& data, const std::string& path);
std::string dataset_csv_header();

/// Reads a dataset CSV. Provenance is taken from the run manifest next to the
/// file when present, otherwise inferred from the rows.
TactileDataset read_dataset_csv(const std::string& path);

}  // namespace percept
