#include "angio/stitch.hpp"

#include <doctest.h>

using namespace angio;

namespace {

Branch straight_branch(const Vec3& start, const Vec3& dir, double length, double radius,
                       int rings = 100) {
    MatX pts(rings, 3);
    for (int i = 0; i < rings; ++i)
        pts.row(i) = (start + dir.normalized() * length * double(i) / (rings - 1)).transpose();
    Branch b;
    b.centerline.points = pts;
    b.mesh = build_tube_generic(pts, VecX::Constant(rings, radius), 60);
    return b;
}

} // namespace

TEST_CASE("translate_side_branch: exact snap, offset, tie to lowest index") {
    const Branch main = straight_branch(Vec3(0, 0, -20), Vec3(0, 0, 1), 40, 2);

    // already on the centerline
    Branch side = straight_branch(main.centerline.points.row(30).transpose(), Vec3(1, 0, 0.3),
                                  15, 1);
    const Branch same = translate_side_branch(main.centerline, side, 10);
    CHECK((same.mesh.vertices - side.mesh.vertices).cwiseAbs().maxCoeff() == 0.0);

    // known offset
    Branch offset = side;
    offset.centerline.points.rowwise() += Eigen::RowVector3d(1, 2, 3);
    offset.mesh.vertices.rowwise() += Eigen::RowVector3d(1, 2, 3);
    const Branch moved = translate_side_branch(main.centerline, offset, 10);
    CHECK((moved.centerline.points - side.centerline.points).cwiseAbs().maxCoeff() < 1e-12);

    // equidistant between centerline samples 10 and 40 snaps to index 10
    const Vec3 p10 = main.centerline.points.row(10).transpose();
    const Vec3 p40 = main.centerline.points.row(40).transpose();
    Branch tie = straight_branch(0.5 * (p10 + p40), Vec3(1, 0, 0), 10, 1);
    const Branch snapped = translate_side_branch(main.centerline, tie, 10);
    CHECK((Vec3(snapped.centerline.points.row(0).transpose()) - p10).norm() < 1e-12);

    // beyond the snap distance: refused with the measured gap
    Branch far = straight_branch(Vec3(50, 50, 0), Vec3(1, 0, 0), 10, 1);
    CHECK_THROWS_AS(translate_side_branch(main.centerline, far, 10), InvalidInput);
}

TEST_CASE("capped tube is a closed solid with the analytic volume") {
    const Branch b = straight_branch(Vec3(0, 0, -15), Vec3(0, 0, 1), 30, 2.5);
    const TriMesh solid = capped_tri_mesh(b.mesh);
    const EdgeUseStats stats = edge_use_stats(solid);
    CHECK(stats.boundary_edges == 0);
    CHECK(stats.nonmanifold_edges == 0);
    const double analytic = kPi * 2.5 * 2.5 * 30.0;
    // ring discretization makes the polygon slightly smaller than the circle
    CHECK(mesh_volume(solid) == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("occupancy union is an elementwise OR: commutative, associative, idempotent") {
    const Branch a = straight_branch(Vec3(-5, 0, 0), Vec3(1, 0, 0), 20, 2, 30);
    const Branch b = straight_branch(Vec3(0, -6, 1), Vec3(0, 1, 0), 18, 2, 30);
    const TriMesh sa = capped_tri_mesh(a.mesh);
    const TriMesh sb = capped_tri_mesh(b.mesh);

    Vec3 lo = sa.vertices.colwise().minCoeff().transpose();
    Vec3 hi = sa.vertices.colwise().maxCoeff().transpose();
    lo = lo.cwiseMin(Vec3(sb.vertices.colwise().minCoeff().transpose()));
    hi = hi.cwiseMax(Vec3(sb.vertices.colwise().maxCoeff().transpose()));

    kernels::VoxelGrid ga = kernels::make_voxel_grid(lo, hi, 64);
    kernels::VoxelGrid gb = ga;
    kernels::voxelize_parity(sa, ga, kernels::Exec::serial);
    kernels::voxelize_parity(sb, gb, kernels::Exec::serial);

    std::vector<uint8_t> ab(ga.occ.size()), ba(ga.occ.size()), aa(ga.occ.size());
    for (size_t i = 0; i < ab.size(); ++i) {
        ab[i] = ga.occ[i] | gb.occ[i];
        ba[i] = gb.occ[i] | ga.occ[i];
        aa[i] = ga.occ[i] | ga.occ[i];
    }
    CHECK(ab == ba);         // commutative
    CHECK(aa == ga.occ);     // idempotent
    // associativity with a third grid is the same bit identity
    std::vector<uint8_t> c = ga.occ;
    std::vector<uint8_t> left(ga.occ.size()), right(ga.occ.size());
    for (size_t i = 0; i < c.size(); ++i) {
        left[i] = (ga.occ[i] | gb.occ[i]) | c[i];
        right[i] = ga.occ[i] | (gb.occ[i] | c[i]);
    }
    CHECK(left == right);
}

TEST_CASE("union of a mesh with itself keeps its volume") {
    const Branch a = straight_branch(Vec3(0, 0, -10), Vec3(0, 0, 1), 20, 2, 40);
    const TriMesh solid = capped_tri_mesh(a.mesh);
    const UnionResult u = boolean_union(solid, solid, 96, kernels::Exec::serial);
    CHECK_FALSE(u.disjoint_warning);
    CHECK(mesh_volume(u.mesh) == doctest::Approx(mesh_volume(solid)).epsilon(0.02));
    const EdgeUseStats stats = edge_use_stats(u.mesh);
    CHECK(stats.boundary_edges == 0);
}

TEST_CASE("orthogonal cylinders match the Steinmetz-corrected volume") {
    const double r = 5.0, len = 40.0;
    const Branch a = straight_branch(Vec3(-len / 2, 0, 0), Vec3(1, 0, 0), len, r, 60);
    const Branch b = straight_branch(Vec3(0, -len / 2, 0), Vec3(0, 1, 0), len, r, 60);
    const UnionResult u =
        boolean_union(capped_tri_mesh(a.mesh), capped_tri_mesh(b.mesh), 128,
                      kernels::Exec::parallel);
    CHECK_FALSE(u.disjoint_warning);
    const double v_cyl = kPi * r * r * len;
    const double steinmetz = 16.0 / 3.0 * r * r * r;
    const double expected = 2.0 * v_cyl - steinmetz;
    CHECK(mesh_volume(u.mesh) == doctest::Approx(expected).epsilon(0.03));
    const EdgeUseStats stats = edge_use_stats(u.mesh);
    CHECK(stats.boundary_edges == 0);
    CHECK(stats.nonmanifold_edges == 0);
}

TEST_CASE("disjoint solids: warning, two shells, additive volume") {
    const Branch a = straight_branch(Vec3(0, 0, -30), Vec3(0, 0, 1), 15, 2, 30);
    const Branch b = straight_branch(Vec3(0, 0, 15), Vec3(0, 0, 1), 15, 2, 30);
    const TriMesh sa = capped_tri_mesh(a.mesh);
    const TriMesh sb = capped_tri_mesh(b.mesh);
    const UnionResult u = boolean_union(sa, sb, 96, kernels::Exec::serial);
    CHECK(u.disjoint_warning);
    CHECK(connected_component_count(u.mesh) == 2);
    CHECK(mesh_volume(u.mesh) ==
          doctest::Approx(mesh_volume(sa) + mesh_volume(sb)).epsilon(0.02));
}

TEST_CASE("degenerate inputs are rejected") {
    TriMesh flat;
    flat.vertices = MatX::Zero(3, 3);
    flat.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    flat.faces = {{0, 1, 2}};
    const Branch a = straight_branch(Vec3(0, 0, -10), Vec3(0, 0, 1), 20, 2, 30);
    CHECK_THROWS_AS(boolean_union(capped_tri_mesh(a.mesh), flat, 64), InvalidInput);
}

TEST_CASE("stitch_branches: perpendicular branch gives one watertight genus-0 surface") {
    BranchSet set;
    set.main = straight_branch(Vec3(0, 0, -20), Vec3(0, 0, 1), 40, 2.0, 50);
    Branch side = straight_branch(set.main.centerline.points.row(25).transpose(),
                                  Vec3(1, 0, 0), 14, 1.2, 50);
    set.sides.push_back(side);
    const TriMesh merged = stitch_branches(set, 128, kernels::Exec::parallel);
    CHECK(connected_component_count(merged) == 1);
    const EdgeUseStats stats = edge_use_stats(merged);
    CHECK(stats.boundary_edges == 0);
    CHECK(stats.nonmanifold_edges == 0);
    CHECK(euler_characteristic(merged) == 2);

    // volume between max(individual) - 2% and sum + 2%
    const double v_main = mesh_volume(capped_tri_mesh(set.main.mesh));
    const double v_side = mesh_volume(capped_tri_mesh(side.mesh));
    const double v = mesh_volume(merged);
    CHECK(v >= std::max(v_main, v_side) * 0.98);
    CHECK(v <= (v_main + v_side) * 1.02);
}

TEST_CASE("stitch_branches with no sides reproduces the capped main tube") {
    BranchSet set;
    set.main = straight_branch(Vec3(0, 0, -15), Vec3(0, 0, 1), 30, 2.0, 50);
    const TriMesh merged = stitch_branches(set, 128, kernels::Exec::serial);
    const double analytic = kPi * 4.0 * 30.0;
    CHECK(mesh_volume(merged) == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("side branch order does not change the stitched surface") {
    BranchSet set;
    set.main = straight_branch(Vec3(0, 0, -20), Vec3(0, 0, 1), 40, 2.0, 40);
    const Branch s1 = straight_branch(set.main.centerline.points.row(12).transpose(),
                                      Vec3(1, 0, 0.2), 12, 1.1, 40);
    const Branch s2 = straight_branch(set.main.centerline.points.row(30).transpose(),
                                      Vec3(-0.5, 1, 0), 10, 1.0, 40);
    set.sides = {s1, s2};
    const TriMesh m12 = stitch_branches(set, 96, kernels::Exec::serial);
    set.sides = {s2, s1};
    const TriMesh m21 = stitch_branches(set, 96, kernels::Exec::serial);
    CHECK(m12.vertices.rows() == m21.vertices.rows());
    CHECK(m12.faces.size() == m21.faces.size());
    CHECK(std::abs(mesh_volume(m12) - mesh_volume(m21)) < 1e-9);
}
