#include <doctest.h>

#include <filesystem>

#include "percept/fs_util.hpp"
#include "percept/svg.hpp"

using namespace percept;

namespace {

int count_occurrences(const std::string& text, const std::string& needle) {
    int count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

}  // namespace

TEST_CASE("viridis ramp endpoints") {
    CHECK(viridis_hex(0.0) == "#440154");
    CHECK(viridis_hex(1.0) == "#fde725");
    CHECK(viridis_hex(-3.0) == "#440154");
    CHECK(viridis_hex(7.0) == "#fde725");
}

TEST_CASE("scatter svg has one marker per point and one reference line") {
    std::vector<ScatterPoint> pts = {{0.0, 0.1, 0.2}, {1.0, 0.9, 0.5}, {2.0, 2.2, 0.9}};
    const std::string svg = render_scatter_svg(pts, true, "truth", "prediction", "demo");
    CHECK(count_occurrences(svg, "<circle class=\"pt\"") == 3);
    CHECK(count_occurrences(svg, "<line class=\"ref\"") == 1);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("scatter colors span the ramp") {
    std::vector<ScatterPoint> pts = {{0.0, 0.0, 0.1}, {1.0, 1.0, 0.5}, {2.0, 2.0, 0.9}};
    const std::string svg = render_scatter_svg(pts, true, "x", "y", "t");
    // first point has the minimum uncertainty -> ramp start; last -> ramp end
    const auto first = svg.find("<circle class=\"pt\"");
    const auto last = svg.rfind("<circle class=\"pt\"");
    CHECK(svg.find(viridis_hex(0.0), first) < svg.find("/>", first));
    CHECK(svg.find(viridis_hex(1.0), last) < svg.find("/>", last));
}

TEST_CASE("empty scatter input is rejected") {
    CHECK_THROWS_AS(render_scatter_svg({}, false, "x", "y", "t"), std::invalid_argument);
}

TEST_CASE("sdm svg renders both series against dual axes") {
    SdmCurve curve;
    for (int i = 0; i < 8; ++i) {
        SdmPoint p;
        p.threshold = 0.1 * i;
        p.rejection_rate = 1.0 - i / 8.0;
        if (i > 0) p.rms = 0.2 + 0.05 * i;
        curve.points.push_back(p);
    }
    const std::string svg = render_sdm_svg(curve, "sweep");
    CHECK(count_occurrences(svg, "<polyline class=\"rms\"") == 1);
    CHECK(count_occurrences(svg, "<polyline class=\"rejection\"") == 1);
}

TEST_CASE("rms table renders one row per report") {
    RunReport r;
    r.model = "nn";
    r.target = "position";
    r.train_tag = "alias";
    r.test_tag = "alias";
    r.run_rms = {1.0};
    r.mean_rms = 1.0;
    r.requested_runs = 1;
    r.completed_runs = 1;
    const std::string svg = render_rms_table_svg({r, r});
    CHECK(count_occurrences(svg, "class=\"cell\"") == 14);
}

TEST_CASE("svg output differs only in the timestamp comment across runs") {
    std::vector<ScatterPoint> pts = {{0.0, 0.1, 0.2}, {1.0, 0.9, 0.5}};
    std::string a = render_scatter_svg(pts, true, "x", "y", "t");
    std::string b = render_scatter_svg(pts, true, "x", "y", "t");
    auto strip = [](std::string s) {
        const auto start = s.find("<!-- generated");
        const auto end = s.find("-->", start);
        s.erase(start, end + 3 - start);
        return s;
    };
    CHECK(strip(a) == strip(b));
}

TEST_CASE("atomic write leaves nothing behind on failure") {
    namespace fs = std::filesystem;
    const auto missing_dir = fs::temp_directory_path() / "percept_no_such_dir" / "file.svg";
    CHECK_THROWS(atomic_write_text(missing_dir.string(), "content"));
    CHECK_FALSE(fs::exists(missing_dir));
}
