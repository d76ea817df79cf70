#include "angio/stitch.hpp"

#include <cmath>
#include <iostream>
#include <unordered_map>

namespace angio {

Branch translate_side_branch(const Centerline3D& main_cl, Branch side, double snap_distance_mm) {
    const Vec3 start = side.centerline.points.row(0).transpose();
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (long i = 0; i < main_cl.points.rows(); ++i) {
        const double d = (Vec3(main_cl.points.row(i).transpose()) - start).norm();
        if (d < best) {
            best = d;
            best_idx = int(i);
        }
    }
    if (best > snap_distance_mm)
        throw InvalidInput("translate_side_branch: start is " + std::to_string(best) +
                           " mm from the main centerline (snap limit " +
                           std::to_string(snap_distance_mm) + " mm)");
    const Vec3 shift = Vec3(main_cl.points.row(best_idx).transpose()) - start;
    side.mesh.vertices.rowwise() += shift.transpose();
    side.centerline.points.rowwise() += shift.transpose();
    return side;
}

TriMesh capped_tri_mesh(const TubeMesh& tube) {
    TriMesh m = to_tri_mesh(tube);
    const long n = m.vertices.rows();
    m.vertices.conservativeResize(n + 2, 3);
    m.vertices.row(n) = ring_centroid(tube, 0).transpose();
    m.vertices.row(n + 1) = ring_centroid(tube, tube.rings - 1).transpose();
    const int c0 = int(n), c1 = int(n + 1);
    for (int j = 0; j < tube.slots; ++j) {
        const int jn = (j + 1) % tube.slots;
        // start cap faces against the sweep direction, end cap along it
        m.faces.push_back({c0, tube.vid(0, jn), tube.vid(0, j)});
        m.faces.push_back({c1, tube.vid(tube.rings - 1, j), tube.vid(tube.rings - 1, jn)});
    }
    return m;
}

namespace {

// Freudenthal subdivision: six tetrahedra around the 0-7 diagonal. Every cube
// uses the same split, which makes shared-face diagonals agree between
// neighbors, so the extracted surface is crack-free.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7},
                             {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};

struct MidpointCache {
    std::unordered_map<uint64_t, int> index;
    std::vector<Vec3> positions;
    uint64_t nvox;

    int get(uint64_t a, uint64_t b, const Vec3& pa, const Vec3& pb) {
        if (a > b) std::swap(a, b);
        const uint64_t key = a * nvox + b;
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        const int id = int(positions.size());
        positions.push_back(0.5 * (pa + pb));
        index.emplace(key, id);
        return id;
    }
};

} // namespace

TriMesh marching_surface(const kernels::VoxelGrid& grid) {
    MidpointCache cache;
    cache.nvox = grid.voxel_count();
    std::vector<std::array<int, 3>> faces;

    uint64_t gid[8];
    Vec3 pos[8];
    bool in[8];
    for (int k = 0; k + 1 < grid.nz; ++k) {
        for (int j = 0; j + 1 < grid.ny; ++j) {
            for (int i = 0; i + 1 < grid.nx; ++i) {
                bool any = false, all = true;
                for (int c = 0; c < 8; ++c) {
                    const int ci = i + (c & 1), cj = j + ((c >> 1) & 1), ck = k + ((c >> 2) & 1);
                    gid[c] = grid.index(ci, cj, ck);
                    in[c] = grid.occ[gid[c]] != 0;
                    any = any || in[c];
                    all = all && in[c];
                }
                if (!any || all) continue;
                for (int c = 0; c < 8; ++c) {
                    pos[c] = grid.center(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                }
                for (const auto& tet : kTets) {
                    int inside[4], outside[4];
                    int n_in = 0, n_out = 0;
                    for (int c = 0; c < 4; ++c)
                        (in[tet[c]] ? inside[n_in++] : outside[n_out++]) = tet[c];
                    if (n_in == 0 || n_in == 4) continue;

                    auto mid = [&](int a, int b) {
                        return cache.get(gid[a], gid[b], pos[a], pos[b]);
                    };
                    auto emit = [&](int va, int vb, int vc, const Vec3& inside_pt) {
                        const Vec3 a = cache.positions[va];
                        const Vec3 b = cache.positions[vb];
                        const Vec3 c = cache.positions[vc];
                        const Vec3 nrm = (b - a).cross(c - a);
                        const Vec3 centroid = (a + b + c) / 3.0;
                        if (nrm.dot(centroid - inside_pt) >= 0)
                            faces.push_back({va, vb, vc});
                        else
                            faces.push_back({va, vc, vb});
                    };

                    if (n_in == 1 || n_in == 3) {
                        const int apex = n_in == 1 ? inside[0] : outside[0];
                        const int* others = n_in == 1 ? outside : inside;
                        emit(mid(apex, others[0]), mid(apex, others[1]), mid(apex, others[2]),
                             pos[inside[0]]);
                    } else { // 2-2: quad around the four mixed edges
                        const int a = inside[0], b = inside[1];
                        const int c = outside[0], d = outside[1];
                        const int m_ac = mid(a, c), m_ad = mid(a, d);
                        const int m_bd = mid(b, d), m_bc = mid(b, c);
                        emit(m_ac, m_ad, m_bd, pos[a]);
                        emit(m_ac, m_bd, m_bc, pos[a]);
                    }
                }
            }
        }
    }

    TriMesh mesh;
    mesh.vertices.resize(long(cache.positions.size()), 3);
    for (size_t i = 0; i < cache.positions.size(); ++i)
        mesh.vertices.row(long(i)) = cache.positions[i].transpose();
    mesh.faces = std::move(faces);
    return mesh;
}

namespace {

void mesh_bbox(const TriMesh& m, Vec3& lo, Vec3& hi) {
    lo = m.vertices.colwise().minCoeff().transpose();
    hi = m.vertices.colwise().maxCoeff().transpose();
}

void require_solid(const TriMesh& m, const char* what) {
    if (m.faces.empty() || std::abs(mesh_volume(m)) < 1e-9)
        throw InvalidInput(std::string(what) + ": degenerate (zero-volume) input mesh");
}

bool grids_overlap(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] && b[i]) return true;
    return false;
}

} // namespace

UnionResult boolean_union(const TriMesh& a, const TriMesh& b, int resolution, kernels::Exec ex) {
    require_solid(a, "boolean_union");
    require_solid(b, "boolean_union");
    Vec3 lo_a, hi_a, lo_b, hi_b;
    mesh_bbox(a, lo_a, hi_a);
    mesh_bbox(b, lo_b, hi_b);

    kernels::VoxelGrid grid =
        kernels::make_voxel_grid(lo_a.cwiseMin(lo_b), hi_a.cwiseMax(hi_b), resolution);
    kernels::VoxelGrid grid_b = grid;
    kernels::voxelize_parity(a, grid, ex);
    kernels::voxelize_parity(b, grid_b, ex);

    UnionResult result;
    result.disjoint_warning = !grids_overlap(grid.occ, grid_b.occ);
    if (result.disjoint_warning)
        std::cerr << "[boolean_union] warning: inputs do not overlap; returning two shells\n";
    for (size_t i = 0; i < grid.occ.size(); ++i) grid.occ[i] |= grid_b.occ[i];
    result.mesh = marching_surface(grid);
    return result;
}

TriMesh stitch_branches(const BranchSet& set, int resolution, kernels::Exec ex) {
    std::vector<TriMesh> solids;
    solids.push_back(capped_tri_mesh(set.main.mesh));
    for (const auto& side : set.sides) {
        const Branch moved = translate_side_branch(set.main.centerline, side,
                                                   set.snap_distance_mm);
        solids.push_back(capped_tri_mesh(moved.mesh));
    }
    for (const auto& s : solids) require_solid(s, "stitch_branches");

    Vec3 lo, hi;
    mesh_bbox(solids[0], lo, hi);
    for (const auto& s : solids) {
        Vec3 l, h;
        mesh_bbox(s, l, h);
        lo = lo.cwiseMin(l);
        hi = hi.cwiseMax(h);
    }
    kernels::VoxelGrid grid = kernels::make_voxel_grid(lo, hi, resolution);
    kernels::VoxelGrid main_grid = grid;
    kernels::voxelize_parity(solids[0], main_grid, ex);
    grid.occ = main_grid.occ;
    for (size_t s = 1; s < solids.size(); ++s) {
        kernels::VoxelGrid side_grid = grid;
        side_grid.occ.assign(side_grid.voxel_count(), 0);
        kernels::voxelize_parity(solids[s], side_grid, ex);
        if (!grids_overlap(main_grid.occ, side_grid.occ))
            std::cerr << "[stitch_branches] warning: side branch " << s - 1
                      << " does not overlap the main branch\n";
        for (size_t i = 0; i < grid.occ.size(); ++i) grid.occ[i] |= side_grid.occ[i];
    }
    return marching_surface(grid);
}

} // namespace angio
