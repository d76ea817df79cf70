#include "angio/kernels.hpp"
#include "angio/mesh_init.hpp"
#include "angio/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace angio;
namespace k = angio::kernels;

// The OpenMP variants use static schedules with per-element independent
// writes, so serial and parallel results must agree bit for bit.

TEST_CASE("edt: serial/omp identical, exact against brute force") {
    Rng rng(3);
    for (int trial = 0; trial < 6; ++trial) {
        const int w = 20 + int(rng.uniform_index(30));
        const int h = 15 + int(rng.uniform_index(30));
        std::vector<uint8_t> fg(size_t(w) * h);
        for (auto& v : fg) v = rng.bernoulli(0.6);
        std::vector<double> serial_out(fg.size()), omp_out(fg.size());
        k::serial::edt_sq(fg.data(), w, h, serial_out.data());
        k::omp::edt_sq(fg.data(), w, h, omp_out.data());
        CHECK(serial_out == omp_out);

        // brute force
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double best = 1e30;
                bool any_bg = false;
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx)
                        if (!fg[size_t(yy) * w + xx]) {
                            any_bg = true;
                            best = std::min(best, double((xx - x) * (xx - x) +
                                                         (yy - y) * (yy - y)));
                        }
                if (!fg[size_t(y) * w + x]) best = 0.0;
                if (any_bg) CHECK(serial_out[size_t(y) * w + x] == best);
            }
    }
}

TEST_CASE("capsule silhouette: serial/omp identical") {
    ViewGeometry g;
    g.sid_mm = 1000;
    g.sod_mm = 750;
    g.pixel_spacing_mm = 0.5;
    g.image_width = g.image_height = 96;
    g.principal_point_px = Vec2(47.5, 47.5);
    const ProjectionOperator op = projection_from_geometry(g);
    Rng rng(5);
    std::vector<k::SphereSample> samples;
    for (int i = 0; i < 300; ++i)
        samples.push_back({Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10),
                                rng.uniform(-15, 15)),
                           rng.uniform(0.5, 2.5)});
    std::vector<uint8_t> s_out(96 * 96), p_out(96 * 96);
    k::serial::capsule_silhouette(op, samples, 96, 96, s_out.data());
    k::omp::capsule_silhouette(op, samples, 96, 96, p_out.data());
    CHECK(s_out == p_out);
    size_t fg = 0;
    for (uint8_t v : s_out) fg += v;
    CHECK(fg > 0);
}

TEST_CASE("raster silhouette: serial/omp identical") {
    Rng rng(7);
    std::vector<double> vx, vy;
    std::vector<std::array<int, 3>> tris;
    for (int i = 0; i < 60; ++i) {
        const double cx = rng.uniform(0.1, 0.9), cy = rng.uniform(0.1, 0.9);
        for (int j = 0; j < 3; ++j) {
            vx.push_back(cx + rng.uniform(-0.08, 0.08));
            vy.push_back(cy + rng.uniform(-0.08, 0.08));
        }
        tris.push_back({3 * i, 3 * i + 1, 3 * i + 2});
    }
    const auto scene = k::build_raster_scene(vx, vy, tris, 1e-4, 64);
    std::vector<double> s_out(64 * 64), p_out(64 * 64);
    k::serial::raster_silhouette(scene, s_out.data());
    k::omp::raster_silhouette(scene, p_out.data());
    CHECK(s_out == p_out);
}

TEST_CASE("nearest neighbor: serial/omp identical and exact") {
    Rng rng(9);
    const MatX targets = oracles::random_matrix(400, 3, rng, -5, 5);
    const MatX queries = oracles::random_matrix(250, 3, rng, -8, 8);
    const k::PointGrid grid = k::PointGrid::build(targets);
    VecX s_out(queries.rows()), p_out(queries.rows());
    k::serial::nn_min_distances(grid, queries, s_out.data());
    k::omp::nn_min_distances(grid, queries, p_out.data());
    CHECK((s_out - p_out).cwiseAbs().maxCoeff() == 0.0);
    const VecX brute = oracles::brute_nn(queries, targets);
    CHECK((s_out - brute).cwiseAbs().maxCoeff() < 1e-12);

    // degenerate target sets still work
    const MatX same_point = MatX::Zero(5, 3);
    const k::PointGrid g2 = k::PointGrid::build(same_point);
    CHECK(g2.nearest_dist(Vec3(1, 1, 1)) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("voxelization: serial/omp identical") {
    MatX pts(30, 3);
    for (int i = 0; i < 30; ++i)
        pts.row(i) = Vec3(0.3 * i, 2.0 * std::sin(0.2 * i), 0.5 * i).transpose();
    const TubeMesh tube = build_tube_generic(pts, VecX::Constant(30, 1.2), 24);
    TriMesh solid = to_tri_mesh(tube);
    // cap crudely: voxelization tolerates the open ends for this equality test
    const Vec3 lo = solid.vertices.colwise().minCoeff().transpose();
    const Vec3 hi = solid.vertices.colwise().maxCoeff().transpose();
    k::VoxelGrid gs = k::make_voxel_grid(lo, hi, 64);
    k::VoxelGrid gp = gs;
    k::serial::voxelize_parity(solid, gs);
    k::omp::voxelize_parity(solid, gp);
    CHECK(gs.occ == gp.occ);
}
