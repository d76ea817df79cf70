#pragma once

#include "angio/common.hpp"

#include <array>

namespace angio {

/// Ring-structured tube surface. Vertex id = ring * slots + slot.
///
/// Edge order is fixed: all ring edges (ring-major, slot-major), then all
/// longitudinal edges. Quads connect slots j, j+1 (mod slots) on rings i, i+1.
/// Triangles come from splitting each quad along its shorter diagonal at
/// construction time; they are carried, not recomputed, so topology survives
/// vertex deformation bit-identically.
struct TubeMesh {
    int rings = 0;
    int slots = 0;
    MatX vertices; // n x 3
    std::vector<std::array<int, 4>> quad_faces;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> tri_faces;

    int vertex_count() const { return rings * slots; }
    int ring_of(int v) const { return v / slots; }
    int slot_of(int v) const { return v % slots; }
    int vid(int ring, int slot) const { return ring * slots + slot; }

    void validate_counts() const; // throws if the structural counts are inconsistent
};

/// Builds the connectivity (edges/quads/tris) for an open tube from vertex
/// positions already laid out ring-major. Shared by the 100x60 pipeline mesh
/// and small test meshes.
TubeMesh make_tube_topology(int rings, int slots, MatX vertices);

/// Generic triangle mesh (stitch output, oracle meshes).
struct TriMesh {
    MatX vertices; // n x 3
    std::vector<std::array<int, 3>> faces;
};

TriMesh to_tri_mesh(const TubeMesh& m);

/// Signed volume via divergence theorem; positive for outward orientation.
double mesh_volume(const TriMesh& m);

/// Counts of boundary edges (used by exactly 1 face) and non-manifold edges
/// (used by 3+). A closed surface has zero of the former.
struct EdgeUseStats {
    size_t boundary_edges = 0;
    size_t nonmanifold_edges = 0;
    size_t total_edges = 0;
};
EdgeUseStats edge_use_stats(const TriMesh& m);

int connected_component_count(const TriMesh& m);
long euler_characteristic(const TriMesh& m);

void write_obj(const TubeMesh& m, const std::string& path, bool triangulated = false);
void write_obj(const TriMesh& m, const std::string& path);
TriMesh read_obj(const std::string& path); // polygons are fan-triangulated

} // namespace angio
