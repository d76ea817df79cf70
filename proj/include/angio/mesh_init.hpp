#pragma once

#include "angio/geometry.hpp"
#include "angio/mask_pipeline.hpp"
#include "angio/mesh.hpp"

namespace angio {

struct Centerline3D {
    static constexpr int kPoints = 100;
    MatX points; // 100 x 3, mm

    void validate() const;
};

struct RadiusProfile {
    VecX radii_mm; // one per centerline point

    void validate() const;
};

/// Similarity transform into the learning frame: q = scale * R * (p - translation).
/// Realizes "chord midpoint to origin, chord onto +z, scale into [0,1] with a
/// half shift" as a single translation/rotation/scale triple, so the round
/// trip is exact.
struct MeshNormalization {
    Vec3 translation = Vec3::Zero(); // mm
    Mat3 rotation = Mat3::Identity();
    double scale = 1.0; // 1/mm

    Vec3 apply(const Vec3& p) const { return scale * (rotation * (p - translation)); }
    Vec3 invert(const Vec3& q) const { return rotation.transpose() * (q / scale) + translation; }
    MatX apply(const MatX& pts) const;
    MatX invert(const MatX& pts) const;
};

struct BackProjectionResult {
    Centerline3D centerline;
    RadiusProfile radii;
    double max_triangulation_residual_mm = 0.0;
};

/// Triangulates paired centerline points and converts pixel radii to mm at
/// the isocenter magnification; 3D points get a light moving-average smooth
/// (window 5, linearly extrapolated ends).
BackProjectionResult back_project_centerline(const Centerline2D& cl_a, const Centerline2D& cl_b,
                                             const ViewGeometry& g_a, const ViewGeometry& g_b);

/// Sweeps rings of `slots` vertices along the centerline using
/// rotation-minimizing (double reflection) frames. One ring per point.
TubeMesh build_tube_generic(const MatX& points, const VecX& radii_mm, int slots);

/// The 100-ring x 60-slot pipeline mesh: 6000 vertices, 11940 edges, 5940 quads.
TubeMesh build_tube(const Centerline3D& cl, const RadiusProfile& rp);

MeshNormalization compute_normalization(const MatX& points, const Vec3& chord_start,
                                        const Vec3& chord_end);

std::pair<TubeMesh, MeshNormalization> normalize_mesh(const TubeMesh& m);
std::pair<Centerline3D, MeshNormalization> normalize_mesh(const Centerline3D& cl);

TubeMesh denormalize(const TubeMesh& m, const MeshNormalization& n);
Centerline3D denormalize(const Centerline3D& cl, const MeshNormalization& n);

Vec3 ring_centroid(const TubeMesh& m, int ring);

void write_centerline_csv(const Centerline3D& cl, const RadiusProfile& rp,
                          const std::string& path);
std::pair<Centerline3D, RadiusProfile> read_centerline_csv(const std::string& path);

} // namespace angio
