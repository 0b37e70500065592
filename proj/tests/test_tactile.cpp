#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "percept/fs_util.hpp"
#include "percept/tactile.hpp"

using namespace percept;

TEST_CASE("marker layout geometry") {
    const auto& layout = marker_layout();
    CHECK(layout.size() == 127);

    std::set<long> radii;
    for (const auto& m : layout) {
        radii.insert(std::lround(m.norm() * 1e6));
    }
    CHECK(radii == std::set<long>{0, 3000000, 6000000, 9000000, 12000000, 15000000, 18000000});

    // 60-degree rotational symmetry
    const double c = std::cos(3.14159265358979323846 / 3.0);
    const double s = std::sin(3.14159265358979323846 / 3.0);
    for (const auto& m : layout) {
        const Eigen::Vector2d rotated(c * m.x() - s * m.y(), s * m.x() + c * m.y());
        bool found = false;
        for (const auto& other : layout) {
            if ((rotated - other).norm() < 1e-9) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("standard stimuli") {
    const auto& stimuli = standard_stimuli();
    REQUIRE(stimuli.size() == 9);
    for (int i = 1; i < 9; ++i) {
        CHECK(stimuli[i].radius_mm >= stimuli[i - 1].radius_mm);
    }
    CHECK(stimuli[8].flat);
    CHECK(stimuli[8].lroc == 8.0);
    CHECK(stimuli[0].lroc == 0.0);
    CHECK(stimuli[3].lroc == 3.0);
}

TEST_CASE("flat stimulus response is pose-invariant") {
    const auto& flat = stimulus_by_id(9);
    Eigen::VectorXd a = sensor_response(flat, {-5.0, 0.0});
    Eigen::VectorXd b = sensor_response(flat, {5.0, 40.0});
    CHECK(a == b);
    CHECK(a.norm() > 0.0);
}

TEST_CASE("sharp stimulus misses the sensor at the position extreme") {
    Eigen::VectorXd r = sensor_response(stimulus_by_id(1), {14.0, 0.0});
    CHECK(r.isZero(0.0));
}

TEST_CASE("curvature saturates below the compliance floor") {
    const Pose pose{3.0, 25.0};
    Eigen::VectorXd r1 = sensor_response(stimulus_by_id(1), pose);
    Eigen::VectorXd r2 = sensor_response(stimulus_by_id(2), pose);
    Eigen::VectorXd r3 = sensor_response(stimulus_by_id(3), pose);
    CHECK(r1 == r2);
    CHECK(r2 == r3);
    CHECK(r1.norm() > 0.0);
    Eigen::VectorXd r4 = sensor_response(stimulus_by_id(4), pose);
    CHECK((r4 - r3).norm() > 0.0);
}

TEST_CASE("compact support thresholds sit inside [10, 15] for sharp stimuli") {
    for (int id = 1; id <= 4; ++id) {
        const auto& stim = stimulus_by_id(id);
        double threshold = -1.0;
        for (double d = 10.0; d <= 15.0 + 1e-9; d += 0.05) {
            if (sensor_response(stim, {d, 0.0}).isZero(0.0)) {
                threshold = d;
                break;
            }
        }
        CHECK(threshold >= 10.0);
        CHECK(threshold <= 15.0);
        // once lost, contact stays lost further out
        CHECK(sensor_response(stim, {15.0, 0.0}).isZero(0.0));
    }
    for (int id = 5; id <= 9; ++id) {
        CHECK_FALSE(sensor_response(stimulus_by_id(id), {15.0, 0.0}).isZero(0.0));
        CHECK_FALSE(sensor_response(stimulus_by_id(id), {-15.0, 0.0}).isZero(0.0));
    }
}

TEST_CASE("response is continuous in pose") {
    for (int id : {1, 4, 7}) {
        const auto& stim = stimulus_by_id(id);
        for (double d = -14.0; d <= 14.0; d += 2.0) {
            for (double theta = -80.0; theta <= 80.0; theta += 20.0) {
                Eigen::VectorXd base = sensor_response(stim, {d, theta});
                Eigen::VectorXd dp = sensor_response(stim, {d + 0.01, theta});
                Eigen::VectorXd dt = sensor_response(stim, {d, theta + 0.01});
                CHECK((dp - base).lpNorm<Eigen::Infinity>() < 0.1);
                CHECK((dt - base).lpNorm<Eigen::Infinity>() < 0.1);
            }
        }
    }
}

TEST_CASE("orientation sensitivity decreases with radius") {
    double previous = std::numeric_limits<double>::infinity();
    for (int id = 4; id <= 9; ++id) {
        const auto& stim = stimulus_by_id(id);
        Eigen::VectorXd a = sensor_response(stim, {0.0, 0.0});
        Eigen::VectorXd b = sensor_response(stim, {0.0, 45.0});
        const double diff = (a - b).cwiseAbs().mean();
        CHECK(diff < previous);
        previous = diff;
        if (id == 9) CHECK(diff == 0.0);
    }
}

TEST_CASE("observe noise behavior") {
    const auto& stim = stimulus_by_id(5);
    const Pose pose{2.0, 30.0};

    NoiseSpec none{0.0, 0.0};
    CHECK(observe(stim, pose, none, 42) == sensor_response(stim, pose));

    NoiseSpec noisy{0.05, 0.0};
    CHECK(observe(stim, pose, noisy, 42) == observe(stim, pose, noisy, 42));
    CHECK(observe(stim, pose, noisy, 42) != observe(stim, pose, noisy, 43));
}

TEST_CASE("observe rejects negative noise levels") {
    CHECK_THROWS_AS(observe(stimulus_by_id(1), {0.0, 0.0}, {-0.1, 0.0}, 1),
                    std::invalid_argument);
}

TEST_CASE("five-frame averaging shrinks the noise by sqrt(5)") {
    const auto& stim = stimulus_by_id(9);
    const Pose pose{0.0, 0.0};
    const NoiseSpec noise{0.05, 0.0};
    const int n = 10000;
    Eigen::VectorXd base = sensor_response(stim, pose);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(kObservationDim);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(kObservationDim);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd obs = observe(stim, pose, noise, 1000 + static_cast<std::uint64_t>(i));
        mean += obs;
        m2 += obs.cwiseProduct(obs);
    }
    mean /= n;
    const double expected = noise.sigma_x / std::sqrt(5.0);
    double pooled = 0.0;
    for (int c = 0; c < kObservationDim; ++c) {
        const double var = m2(c) / n - mean(c) * mean(c);
        const double sd = std::sqrt(std::max(var, 0.0));
        CHECK(std::abs(sd - expected) < 0.05 * expected);
        pooled += sd;
    }
    pooled /= kObservationDim;
    CHECK(std::abs(pooled - expected) < 0.01 * expected);
    CHECK((mean - base).lpNorm<Eigen::Infinity>() < 0.005);
}

TEST_CASE("dataset generation") {
    TactileDataset data = generate_dataset({0.05, 0.0}, 2001, 1000);
    CHECK(data.size() == 9000);
    CHECK(data.provenance == Provenance::aliasing);

    // per-stimulus sampled position means stay near zero
    for (int id = 1; id <= 9; ++id) {
        double mean = 0.0;
        int count = 0;
        for (const auto& row : data.rows) {
            if (row.stimulus_id == id) {
                mean += row.pos_mm;
                ++count;
            }
        }
        CHECK(count == 1000);
        CHECK(std::abs(mean / count) < 0.5);
    }

    // annotations follow the ground truth
    for (const auto& row : data.rows) {
        CHECK(row.alias_flat == (row.stimulus_id == 9));
        CHECK(row.alias_sat == (row.stimulus_id <= 3));
        if (row.alias_nocontact) {
            CHECK(std::abs(row.pos_mm) > 10.0);
            CHECK(row.stimulus_id <= 4);
        }
    }

    TactileDataset other = generate_dataset({0.05, 0.0}, 2002, 100);
    for (const auto& a : other.rows) {
        for (const auto& b : data.rows) {
            CHECK((a.pos_mm != b.pos_mm || a.orient_deg != b.orient_deg));
        }
        break;  // spot-check the first row against every row of the other set
    }
}

TEST_CASE("no-aliasing filters") {
    TactileDataset data = generate_dataset({0.05, 0.0}, 77, 200);

    TactileDataset po = filter_no_aliasing(data, FilterMode::position_orientation);
    Eigen::Index expected = 0;
    for (const auto& row : data.rows) {
        if (row.stimulus_id <= 8 && std::abs(row.pos_mm) <= 10.0) ++expected;
    }
    CHECK(po.size() == expected);
    CHECK(po.provenance == Provenance::no_aliasing_po);
    const double frac =
        static_cast<double>(po.size()) / static_cast<double>(8 * 200);
    CHECK(frac > 0.6);
    CHECK(frac < 0.72);

    TactileDataset c = filter_no_aliasing(data, FilterMode::curvature);
    for (const auto& row : c.rows) {
        CHECK(row.stimulus_id >= 4);
        CHECK(std::abs(row.pos_mm) <= 5.0);
    }
    CHECK(c.provenance == Provenance::no_aliasing_c);

    // idempotent
    TactileDataset po2 = filter_no_aliasing(po, FilterMode::position_orientation);
    CHECK(po2.size() == po.size());
    CHECK(po2.observations == po.observations);

    // cross-mode filtering of an already-filtered set is rejected
    CHECK_THROWS_AS(filter_no_aliasing(po, FilterMode::curvature), std::invalid_argument);
}

TEST_CASE("dataset CSV round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "percept_tactile_csv";
    fs::create_directories(dir);
    const std::string path = (dir / "mini.csv").string();

    TactileDataset data = generate_dataset({0.05, 0.0}, 31415, 5);
    write_dataset_csv(data, path);
    write_dataset_csv(data, (dir / "mini2.csv").string());
    CHECK(read_text_file(path) == read_text_file((dir / "mini2.csv").string()));

    const std::string text = read_text_file(path);
    CHECK(text.rfind("stimulus_id,radius_mm,", 0) == 0);
    CHECK(text.find("inf") != std::string::npos);  // flat radius

    TactileDataset back = read_dataset_csv(path);
    REQUIRE(back.size() == data.size());
    CHECK(back.provenance == Provenance::aliasing);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const auto& a = data.rows[static_cast<std::size_t>(i)];
        const auto& b = back.rows[static_cast<std::size_t>(i)];
        CHECK(a.stimulus_id == b.stimulus_id);
        CHECK(a.alias_flat == b.alias_flat);
        CHECK(a.alias_nocontact == b.alias_nocontact);
        CHECK(a.alias_sat == b.alias_sat);
        CHECK(b.pos_mm == doctest::Approx(a.pos_mm).epsilon(1e-8));
        for (int c = 0; c < kObservationDim; ++c) {
            CHECK(back.observations(i, c) ==
                  doctest::Approx(data.observations(i, c)).epsilon(1e-8));
        }
    }
    fs::remove_all(dir);
}
