#include "angio/metrics.hpp"
#include "angio/phantom.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace angio;

namespace {

ViewGeometry phantom_view(double primary, int size = 160, double spacing = 0.45) {
    ViewGeometry g;
    g.primary_angle_deg = primary;
    g.sid_mm = 1000;
    g.sod_mm = 750;
    g.pixel_spacing_mm = spacing;
    g.image_width = g.image_height = size;
    g.principal_point_px = Vec2((size - 1) * 0.5, (size - 1) * 0.5);
    return g;
}

PhantomSpec straight_spec(double radius = 2.0, double length = 40.0) {
    PhantomSpec s;
    s.kind = CenterlineKind::straight;
    s.length_mm = length;
    s.base_radius_mm = radius;
    s.view_a = phantom_view(0);
    s.view_b = phantom_view(90);
    return s;
}

int mask_row_width(const BinaryMask& m, int row) {
    int count = 0;
    for (int x = 0; x < m.width; ++x) count += m.at(x, row);
    return count;
}

} // namespace

TEST_CASE("straight tube mask is a rectangle of the analytic width") {
    // tube along z projects to a vertical bar in view A (v axis is -z)
    const PhantomSpec spec = straight_spec();
    const PhantomCase c = generate(spec, kernels::Exec::serial);
    const double expected =
        2.0 * spec.base_radius_mm * (1000.0 / 750.0) / spec.view_a.pixel_spacing_mm;
    // sample rows near the middle of the image
    const int mid = spec.view_a.image_height / 2;
    for (int row = mid - 10; row <= mid + 10; ++row)
        CHECK(std::abs(mask_row_width(c.main.mask_a, row) - expected) <= 1.0 + 1e-9);
}

TEST_CASE("stenosis halves the mask width at the segment middle") {
    PhantomSpec spec = straight_spec();
    spec.stenosis = StenosisSpec{0.5, 0.5, 4.0};
    const PhantomCase c = generate(spec, kernels::Exec::serial);
    const double nominal =
        2.0 * spec.base_radius_mm * (1000.0 / 750.0) / spec.view_a.pixel_spacing_mm;
    const int mid = spec.view_a.image_height / 2; // tube centered at the isocenter
    CHECK(std::abs(mask_row_width(c.main.mask_a, mid) - 0.5 * nominal) <= 1.0 + 1e-9);
}

TEST_CASE("generation is deterministic per seed") {
    PhantomSpec spec = straight_spec();
    spec.kind = CenterlineKind::helix;
    spec.helix_radius_mm = 4;
    spec.noise_px = 1.0;
    spec.seed = 99;
    const PhantomCase c1 = generate(spec, kernels::Exec::serial);
    const PhantomCase c2 = generate(spec, kernels::Exec::parallel);
    CHECK(c1.main.mask_a.data == c2.main.mask_a.data);
    CHECK(c1.main.mask_b.data == c2.main.mask_b.data);
    CHECK((c1.main.centerline.points - c2.main.centerline.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("suite: split sizes, distinct specs, bounded parameters") {
    const auto suite = generate_suite(10, 42, SuiteOptions{});
    int train = 0, val = 0, test = 0;
    for (const auto& sc : suite) {
        if (sc.split == Split::train) ++train;
        if (sc.split == Split::val) ++val;
        if (sc.split == Split::test) ++test;
    }
    CHECK(train == 7);
    CHECK(val == 1);
    CHECK(test == 2);

    std::set<std::string> hashes;
    for (const auto& sc : suite) {
        hashes.insert(spec_hash(sc.phantom.spec));
        CHECK(sc.phantom.main.radii.radii_mm.minCoeff() > 0);
        if (sc.phantom.spec.stenosis) {
            CHECK(sc.phantom.spec.stenosis->severity > 0);
            CHECK(sc.phantom.spec.stenosis->severity <= 0.9);
        }
        CHECK(sc.phantom.spec.length_mm >= 20.0);
        CHECK(sc.phantom.spec.length_mm <= 60.0);
        CHECK(sc.phantom.spec.base_radius_mm >= 1.0);
        CHECK(sc.phantom.spec.base_radius_mm <= 3.0);
    }
    CHECK(hashes.size() == 10);

    // disjoint seeds give different suites
    const auto other = generate_suite(3, 43, SuiteOptions{});
    CHECK(spec_hash(other[0].phantom.spec) != spec_hash(suite[0].phantom.spec));
}

TEST_CASE("mask equals the gt mesh silhouette within a boundary ring") {
    PhantomSpec spec = straight_spec();
    spec.kind = CenterlineKind::arc;
    spec.arc_angle_deg = 75;
    const PhantomCase c = generate(spec, kernels::Exec::serial);
    const OverlapResult ov = projection_overlap(
        c.main.mesh, projection_from_geometry(c.geom_a), c.main.mask_a);
    CHECK(ov.dice_pct > 98.0);
}

TEST_CASE("SOI endpoints project inside the mask foreground") {
    const auto suite = generate_suite(6, 7, SuiteOptions{});
    for (const auto& sc : suite) {
        const auto& br = sc.phantom.main;
        for (int view = 0; view < 2; ++view) {
            const BinaryMask& m = view == 0 ? br.mask_a : br.mask_b;
            const SoiSpec& soi = view == 0 ? br.soi_a : br.soi_b;
            const int sx = int(std::lround(soi.start_px.x()));
            const int sy = int(std::lround(soi.start_px.y()));
            const int ex = int(std::lround(soi.end_px.x()));
            const int ey = int(std::lround(soi.end_px.y()));
            CHECK(m.in_bounds(sx, sy));
            CHECK(m.in_bounds(ex, ey));
            CHECK(m.at(sx, sy) == 1);
            CHECK(m.at(ex, ey) == 1);
        }
    }
}

TEST_CASE("bifurcated case produces an overlapping side branch") {
    PhantomSpec spec = straight_spec(2.0, 40.0);
    spec.bifurcation = BifurcationSpec{0.5, 70, 1.2, 14};
    const PhantomCase c = generate(spec, kernels::Exec::serial);
    REQUIRE(c.side.has_value());
    CHECK(c.combined_mask_a.has_value());
    // side starts exactly on the main centerline
    double best = 1e9;
    for (int i = 0; i < 100; ++i)
        best = std::min(best, (Vec3(c.main.centerline.points.row(i)) -
                               Vec3(c.side->centerline.points.row(0)))
                                  .norm());
    CHECK(best < 1e-9);
    // combined silhouette covers both branch masks
    for (size_t i = 0; i < c.main.mask_a.data.size(); ++i) {
        if (c.main.mask_a.data[i]) CHECK(c.combined_mask_a->data[i] == 1);
        if (c.side->mask_a.data[i]) CHECK(c.combined_mask_a->data[i] == 1);
    }
}

TEST_CASE("case bundle round trip") {
    PhantomSpec spec = straight_spec();
    spec.kind = CenterlineKind::spline;
    spec.spline_control = {Vec3(-2, 1, -15), Vec3(1, -1, -5), Vec3(-1, 2, 5), Vec3(2, 0, 15)};
    spec.seed = 5;
    const PhantomCase c = generate(spec, kernels::Exec::serial);
    const std::string dir =
        std::filesystem::temp_directory_path().string() + "/angio_test_bundle";
    std::filesystem::remove_all(dir);
    write_case_bundle(c, dir);
    const PhantomCase back = read_case_bundle(dir);
    CHECK(back.main.mask_a.data == c.main.mask_a.data);
    CHECK(back.geom_a.pixel_spacing_mm == doctest::Approx(c.geom_a.pixel_spacing_mm));
    CHECK((back.main.centerline.points - c.main.centerline.points).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.main.soi_a.start_px - c.main.soi_a.start_px).norm() < 1e-12);
    CHECK((back.main.mesh.vertices - c.main.mesh.vertices).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("invalid specs are rejected") {
    PhantomSpec s = straight_spec();
    s.stenosis = StenosisSpec{0.5, 0.95, 4.0};
    CHECK_THROWS_AS(generate(s), InvalidInput);
    s = straight_spec();
    s.length_mm = -1;
    CHECK_THROWS_AS(generate(s), InvalidInput);
    s = straight_spec();
    s.kind = CenterlineKind::spline; // no control points
    CHECK_THROWS_AS(generate(s), InvalidInput);
}
