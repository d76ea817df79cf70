#pragma once

#include "angio/common.hpp"
#include "angio/geometry.hpp"
#include "angio/mesh.hpp"

#include <array>
#include <cstdint>

// Data-parallel inner loops, each with a serial reference implementation and
// an OpenMP variant. Both produce bit-identical output (static schedules,
// per-element independent writes), so the serial path doubles as the oracle
// in tests and the benchmark target compares the two.
namespace angio::kernels {

enum class Exec { serial, parallel };

// ---------------------------------------------------------------- EDT ----

/// Exact squared Euclidean distance transform: out[y*w+x] = squared distance
/// (px^2) from the pixel center to the nearest background (zero) pixel
/// center. Background pixels get 0. Two-pass parabola-envelope method.
namespace serial {
void edt_sq(const uint8_t* fg, int w, int h, double* out);
}
namespace omp {
void edt_sq(const uint8_t* fg, int w, int h, double* out);
}
void edt_sq(const uint8_t* fg, int w, int h, double* out, Exec ex);

// ------------------------------------------------- capsule silhouette ----

struct SphereSample {
    Vec3 center_mm;
    double radius_mm;
};

/// Hard silhouette of a sphere chain: pixel is foreground iff its
/// back-projected ray passes within radius of any sample center.
namespace serial {
void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out);
}
namespace omp {
void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out);
}
void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out, Exec ex);

// ------------------------------------------------------ soft raster ----

/// 2D point-segment squared distance; returns the clamped projection
/// parameter through t_out for gradient computation.
inline double point_segment_dist_sq(double px, double py, double ax, double ay, double bx,
                                    double by, double* t_out) {
    const double ex = bx - ax, ey = by - ay;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0 ? ((px - ax) * ex + (py - ay) * ey) / len2 : 0.0;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    const double dx = px - (ax + t * ex), dy = py - (ay + t * ey);
    if (t_out) *t_out = t;
    return dx * dx + dy * dy;
}

inline bool point_in_tri(double px, double py, double ax, double ay, double bx, double by,
                         double cx, double cy) {
    const double d1 = (px - bx) * (ay - by) - (ax - bx) * (py - by);
    const double d2 = (px - cx) * (by - cy) - (bx - cx) * (py - cy);
    const double d3 = (px - ax) * (cy - ay) - (cx - ax) * (py - ay);
    const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(has_neg && has_pos);
}

/// Projected triangles in normalized window units with a uniform bin grid.
/// Candidate lists are stored in ascending triangle order so per-pixel factor
/// products accumulate in a fixed order regardless of execution mode.
struct RasterScene {
    int res = 0;
    double sigma = 1e-4;
    double cutoff_d2 = 0.0; // outside contributions below ~1e-12 are skipped
    std::vector<double> vx, vy;
    std::vector<std::array<int, 3>> tris;
    int bin_dim = 0;
    std::vector<std::vector<int>> bins;
};

RasterScene build_raster_scene(std::vector<double> vx, std::vector<double> vy,
                               std::vector<std::array<int, 3>> tris, double sigma, int res);

/// Per-pixel soft occupancy: 1 - prod_j (1 - sigmoid(sign_j * d_j^2 / sigma)).
namespace serial {
void raster_silhouette(const RasterScene& scene, double* out);
}
namespace omp {
void raster_silhouette(const RasterScene& scene, double* out);
}
void raster_silhouette(const RasterScene& scene, double* out, Exec ex);

// --------------------------------------------------- nearest neighbor ----

/// Uniform grid over a fixed target point set; exact nearest distances via
/// expanding shell search.
class PointGrid {
public:
    static PointGrid build(const MatX& pts); // n x 3
    double nearest_dist(const Vec3& q) const;
    long size() const { return pts_.rows(); }

private:
    MatX pts_;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<int> cell_start_;
    std::vector<int> point_ids_;
};

namespace serial {
void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out);
}
namespace omp {
void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out);
}
void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out, Exec ex);

// -------------------------------------------------------- voxelization ----

struct VoxelGrid {
    Vec3 origin = Vec3::Zero(); // corner of voxel (0,0,0)
    double spacing = 1.0;
    int nx = 0, ny = 0, nz = 0;
    std::vector<uint8_t> occ; // nx*ny*nz, 0/1

    size_t index(int i, int j, int k) const {
        return (size_t(k) * ny + j) * nx + i;
    }
    Vec3 center(int i, int j, int k) const {
        return origin + spacing * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }
    size_t voxel_count() const { return size_t(nx) * ny * nz; }
};

/// Grid sized so the longest bbox axis spans `resolution` voxels, with a
/// 2-voxel margin on every side.
VoxelGrid make_voxel_grid(const Vec3& bbox_min, const Vec3& bbox_max, int resolution);

/// Solid voxelization of a closed mesh: per-axis parity ray casting through
/// voxel-center columns, inside = majority vote of the three directions.
/// ORs the result into grid.occ.
namespace serial {
void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid);
}
namespace omp {
void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid);
}
void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid, Exec ex);

} // namespace angio::kernels
