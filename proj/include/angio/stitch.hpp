#pragma once

#include "angio/kernels.hpp"
#include "angio/mesh.hpp"
#include "angio/mesh_init.hpp"

namespace angio {

struct Branch {
    TubeMesh mesh;
    Centerline3D centerline;
};

struct BranchSet {
    Branch main;
    std::vector<Branch> sides;
    double snap_distance_mm = 10.0;
};

/// Rigid translation taking the side's start point onto the nearest main
/// centerline point (ties break to the lowest index). Throws with the
/// measured gap when it exceeds the snap distance.
Branch translate_side_branch(const Centerline3D& main_cl, Branch side,
                             double snap_distance_mm = 10.0);

/// Open tube closed with triangle fans at both ends, outward-oriented.
TriMesh capped_tri_mesh(const TubeMesh& tube);

struct UnionResult {
    TriMesh mesh;
    bool disjoint_warning = false;
};

/// Volumetric union: shared voxel grid, occupancy OR, marching-tetrahedra
/// surface. Watertight by construction (Freudenthal split is face-consistent).
UnionResult boolean_union(const TriMesh& a, const TriMesh& b, int resolution = 256,
                          kernels::Exec ex = kernels::Exec::parallel);

/// Translates every side branch then unions all branch solids on one grid.
TriMesh stitch_branches(const BranchSet& set, int resolution = 256,
                        kernels::Exec ex = kernels::Exec::parallel);

/// Marching tetrahedra over a binary occupancy grid (iso 0.5, edge midpoints).
TriMesh marching_surface(const kernels::VoxelGrid& grid);

} // namespace angio
