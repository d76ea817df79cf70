#include "angio/geometry.hpp"
#include "angio/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace angio;

namespace {

ViewGeometry standard_view(double primary = 0, double secondary = 0) {
    ViewGeometry g;
    g.primary_angle_deg = primary;
    g.secondary_angle_deg = secondary;
    g.sid_mm = 1000;
    g.sod_mm = 750;
    g.pixel_spacing_mm = 0.3;
    g.image_width = 512;
    g.image_height = 512;
    g.principal_point_px = Vec2(255.5, 255.5);
    return g;
}

ViewGeometry random_view(Rng& rng, double primary_center) {
    ViewGeometry g = standard_view(primary_center + rng.uniform(-20, 20),
                                   rng.uniform(-20, 20));
    g.sid_mm = rng.uniform(950, 1100);
    g.sod_mm = rng.uniform(700, 800);
    g.detector_shift_px = Vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    return g;
}

} // namespace

TEST_CASE("isocenter projects to the principal point under zero angles") {
    const ViewGeometry g = standard_view();
    const ProjectionOperator op = projection_from_geometry(g);
    const Vec2 p = project(op, Vec3::Zero());
    CHECK((p - g.principal_point_px).norm() < 1e-9);
}

TEST_CASE("magnification matches the ray-plane oracle") {
    const ViewGeometry g = standard_view();
    const ProjectionOperator op = projection_from_geometry(g);
    for (double x : {0.5, 1.0, 2.0, -1.5}) {
        const Vec2 p = project(op, Vec3(x, 0, 0));
        const double expected_offset = x * (g.sid_mm / g.sod_mm) / g.pixel_spacing_mm;
        CHECK(std::abs(p.x() - g.principal_point_px.x() - expected_offset) < 1e-6);
        const Vec2 oracle = oracles::ray_plane_project(g, Vec3(x, 0, 0));
        CHECK((p - oracle).norm() < 1e-9);
    }
    // oracle agreement on random points and angled views
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const ViewGeometry gv = random_view(rng, rng.uniform(-90, 90));
        const ProjectionOperator opv = projection_from_geometry(gv);
        const Vec3 p(rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(-40, 40));
        CHECK((project(opv, p) - oracles::ray_plane_project(gv, p)).norm() < 1e-8);
    }
}

TEST_CASE("sources of views 90 degrees apart are orthogonal from the isocenter") {
    const ProjectionOperator a = projection_from_geometry(standard_view(0, 0));
    const ProjectionOperator b = projection_from_geometry(standard_view(90, 0));
    const double dot =
        a.source_position_mm.normalized().dot(b.source_position_mm.normalized());
    CHECK(std::abs(dot) < 1e-12);
}

TEST_CASE("project then triangulate recovers the point") {
    Rng rng(11);
    const ViewGeometry ga = random_view(rng, 0);
    const ViewGeometry gb = random_view(rng, 90);
    const ProjectionOperator a = projection_from_geometry(ga);
    const ProjectionOperator b = projection_from_geometry(gb);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
        const auto tri = triangulate(a, b, project(a, p), project(b, p));
        worst = std::max(worst, (tri.point_mm - p).norm());
        CHECK(tri.residual_mm < 1e-9);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("homogeneous scaling leaves projection and triangulation unchanged") {
    Rng rng(13);
    const ProjectionOperator a = projection_from_geometry(random_view(rng, 0));
    ProjectionOperator a_scaled = a;
    a_scaled.matrix *= -3.7;
    const ProjectionOperator b = projection_from_geometry(random_view(rng, 90));
    for (int i = 0; i < 20; ++i) {
        const Vec3 p(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
        CHECK((project(a, p) - project(a_scaled, p)).norm() < 1e-9);
    }
    const Vec3 q(5, -3, 7);
    const auto t1 = triangulate(a, b, project(a, q), project(b, q));
    const auto t2 = triangulate(a_scaled, b, project(a, q), project(b, q));
    CHECK((t1.point_mm - t2.point_mm).norm() < 1e-12);
}

TEST_CASE("principal rays of orthogonal zero-shift views meet at the isocenter") {
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    const auto tri = triangulate(projection_from_geometry(ga), projection_from_geometry(gb),
                                 ga.principal_point_px, gb.principal_point_px);
    CHECK(tri.point_mm.norm() < 1e-9);
    CHECK(tri.residual_mm < 1e-9);
}

TEST_CASE("triangulation is symmetric in the two views") {
    Rng rng(17);
    const ProjectionOperator a = projection_from_geometry(random_view(rng, 0));
    const ProjectionOperator b = projection_from_geometry(random_view(rng, 90));
    const Vec3 p(4, 9, -12);
    const Vec2 pa = project(a, p) + Vec2(0.7, -0.2); // skew the rays a little
    const Vec2 pb = project(b, p);
    const auto t1 = triangulate(a, b, pa, pb);
    const auto t2 = triangulate(b, a, pb, pa);
    CHECK((t1.point_mm - t2.point_mm).norm() < 1e-12);
    CHECK(std::abs(t1.residual_mm - t2.residual_mm) < 1e-12);
}

TEST_CASE("pixel perturbation moves the triangulated point continuously") {
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    const ProjectionOperator a = projection_from_geometry(ga);
    const ProjectionOperator b = projection_from_geometry(gb);
    const Vec3 p(3, -2, 8);
    const Vec2 pa = project(a, p);
    const Vec2 pb = project(b, p);
    const auto base = triangulate(a, b, pa, pb);
    const auto moved = triangulate(a, b, pa, pb + Vec2(1, 0));
    CHECK(moved.residual_mm > 0);
    // analytic sensitivity: one pixel maps to about spacing*sod/sid mm at the
    // isocenter; the midpoint moves by at most a small multiple of that
    const double px_to_mm = gb.pixel_spacing_mm * gb.sod_mm / gb.sid_mm;
    CHECK((moved.point_mm - base.point_mm).norm() < 3.0 * px_to_mm);
    // finite-difference continuity: quarter the step, about a quarter the move
    const auto quarter = triangulate(a, b, pa, pb + Vec2(0.25, 0));
    CHECK((quarter.point_mm - base.point_mm).norm() <
          0.3 * (moved.point_mm - base.point_mm).norm() + 1e-9);
}

TEST_CASE("degenerate and invalid inputs are rejected") {
    ViewGeometry bad = standard_view();
    bad.sod_mm = 1200; // sod > sid
    CHECK_THROWS_AS(projection_from_geometry(bad), InvalidInput);

    const ProjectionOperator a = projection_from_geometry(standard_view(0, 0));
    CHECK_THROWS_AS(project(a, a.source_position_mm), NumericalError);

    // near-parallel rays: same view twice
    const ProjectionOperator b = projection_from_geometry(standard_view(0, 0));
    CHECK_THROWS_AS(triangulate(a, b, Vec2(100, 100), Vec2(100, 100)), InvalidInput);
}

TEST_CASE("geometry json round trip and anisotropic rejection") {
    const std::string dir = std::filesystem::temp_directory_path().string();
    const std::string path = dir + "/angio_test_geom.json";
    ViewGeometry g = standard_view(25, -10);
    g.detector_shift_px = Vec2(1.5, -2.5);
    to_json_file(g, path);
    const ViewGeometry g2 = view_geometry_from_json_file(path);
    CHECK(g2.primary_angle_deg == doctest::Approx(25));
    CHECK((g2.detector_shift_px - g.detector_shift_px).norm() < 1e-12);

    std::ofstream f(path);
    f << R"({"primary_angle_deg":0,"secondary_angle_deg":0,"sid_mm":1000,"sod_mm":750,
             "pixel_spacing_mm_xy":[0.3,0.4],"image_width":512,"image_height":512,
             "principal_point_px":[255.5,255.5]})";
    f.close();
    CHECK_THROWS_AS(view_geometry_from_json_file(path), InvalidInput);
}

namespace {

// regenerate SOI-like observations with true shifts injected
std::vector<PointCorrespondence> make_correspondences(const ViewGeometry& ga_true,
                                                      const ViewGeometry& gb_true,
                                                      const std::vector<Vec3>& points) {
    const ProjectionOperator a = projection_from_geometry(ga_true);
    const ProjectionOperator b = projection_from_geometry(gb_true);
    std::vector<PointCorrespondence> corr;
    for (size_t i = 0; i < points.size(); ++i)
        corr.push_back({project(a, points[i]), project(b, points[i]),
                        i == 0 ? CorrespondenceLabel::start : CorrespondenceLabel::end});
    return corr;
}

std::vector<Vec3> sample_segment_points(Rng& rng, int n) {
    // points spread along a synthetic vessel-like segment
    std::vector<Vec3> pts;
    const Vec3 p0(rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-25, -15));
    const Vec3 p1(rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(15, 25));
    for (int i = 0; i < n; ++i) {
        const double t = double(i) / (n - 1);
        const Vec3 bow(4.0 * std::sin(t * kPi), 2.0 * std::sin(2 * t * kPi), 0.0);
        pts.push_back(p0 + t * (p1 - p0) + bow);
    }
    return pts;
}

} // namespace

TEST_CASE("calibration: consistent correspondences are a fixed point") {
    Rng rng(23);
    const ViewGeometry ga = standard_view(5, 3);
    const ViewGeometry gb = standard_view(95, -4);
    const auto corr = make_correspondences(ga, gb, sample_segment_points(rng, 2));
    const CalibrationResult res = refine_calibration(ga, gb, corr);
    CHECK(res.initial_cost < 1e-18);
    CHECK(res.final_cost <= res.initial_cost);
    CHECK((res.geometry_a.detector_shift_px - ga.detector_shift_px).norm() < 1e-6);
    CHECK((res.geometry_b.detector_shift_px - gb.detector_shift_px).norm() < 1e-6);
}

TEST_CASE("calibration recovers an injected view-A shift") {
    // With only start/end correspondences the zero-residual set is a
    // 2-parameter family (any view-B shift can be traded against a 3D motion
    // of the triangulated points), so parameter recovery needs a few more
    // correspondences along the segment; consistency (cost -> 0) is the
    // 2-point guarantee, tested separately below.
    Rng rng(29);
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    ViewGeometry ga_true = ga;
    ga_true.detector_shift_px = Vec2(3, -2);
    const auto corr = make_correspondences(ga_true, gb, sample_segment_points(rng, 6));
    const CalibrationResult res = refine_calibration(ga, gb, corr);
    CHECK(res.converged);
    CHECK((res.geometry_a.detector_shift_px - Vec2(3, -2)).norm() < 0.01);
    CHECK(res.geometry_b.detector_shift_px.norm() < 0.01);
}

TEST_CASE("calibration with two correspondences reaches consistency") {
    Rng rng(31);
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    ViewGeometry ga_true = ga;
    ga_true.detector_shift_px = Vec2(2, 1);
    const auto corr = make_correspondences(ga_true, gb, sample_segment_points(rng, 2));
    const CalibrationResult res = refine_calibration(ga, gb, corr);
    CHECK(res.final_cost < 1e-10); // reprojection-consistent geometry found
    CHECK(res.final_cost <= res.initial_cost);
}

TEST_CASE("large damping steps along the negative gradient") {
    Rng rng(37);
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    ViewGeometry ga_true = ga;
    ga_true.detector_shift_px = Vec2(4, 1);
    const auto corr = make_correspondences(ga_true, gb, sample_segment_points(rng, 4));

    CalibrationOptions opts;
    opts.max_iter = 1;
    opts.lambda_init = 1e9;
    const CalibrationResult res = refine_calibration(ga, gb, corr, opts);
    const Eigen::Vector4d step(res.geometry_a.detector_shift_px.x(),
                               res.geometry_a.detector_shift_px.y(),
                               res.geometry_b.detector_shift_px.x(),
                               res.geometry_b.detector_shift_px.y());

    // numerical gradient of the cost at zero shifts
    auto cost_at = [&](const Eigen::Vector4d& x) {
        ViewGeometry a = ga, b = gb;
        a.detector_shift_px = Vec2(x[0], x[1]);
        b.detector_shift_px = Vec2(x[2], x[3]);
        const ProjectionOperator pa = projection_from_geometry(a);
        const ProjectionOperator pb = projection_from_geometry(b);
        double c = 0;
        for (const auto& cr : corr) {
            const auto tri = triangulate(pa, pb, cr.view_a_point, cr.view_b_point);
            c += (project(pa, tri.point_mm) - cr.view_a_point).squaredNorm();
            c += (project(pb, tri.point_mm) - cr.view_b_point).squaredNorm();
        }
        return c;
    };
    Eigen::Vector4d grad;
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d e = Eigen::Vector4d::Zero();
        e[k] = 1e-5;
        grad[k] = (cost_at(e) - cost_at(-e)) / 2e-5;
    }
    CHECK(step.dot(grad) < 0); // descent direction
    CHECK(step.norm() > 0);
}

TEST_CASE("calibration input validation") {
    const ViewGeometry ga = standard_view(0, 0);
    const ViewGeometry gb = standard_view(90, 0);
    std::vector<PointCorrespondence> one = {{Vec2(10, 10), Vec2(10, 10),
                                             CorrespondenceLabel::start}};
    CHECK_THROWS_AS(refine_calibration(ga, gb, one), InvalidInput);

    std::vector<PointCorrespondence> coincident = {
        {Vec2(10, 10), Vec2(20, 20), CorrespondenceLabel::start},
        {Vec2(10, 10), Vec2(20, 20), CorrespondenceLabel::end}};
    CHECK_THROWS_AS(refine_calibration(ga, gb, coincident), InvalidInput);

    std::vector<PointCorrespondence> outside = {
        {Vec2(-5, 10), Vec2(20, 20), CorrespondenceLabel::start},
        {Vec2(10, 10), Vec2(40, 20), CorrespondenceLabel::end}};
    CHECK_THROWS_AS(refine_calibration(ga, gb, outside), InvalidInput);
}
