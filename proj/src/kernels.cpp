#include "angio/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace angio::kernels {

namespace {

constexpr double kInf = 1e30;

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher).
void envelope_1d(const double* f, int n, double* out, int* v_buf, double* z_buf) {
    int k = 0;
    v_buf[0] = 0;
    z_buf[0] = -kInf;
    z_buf[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const int vk = v_buf[k];
            s = ((f[q] + double(q) * q) - (f[vk] + double(vk) * vk)) / (2.0 * q - 2.0 * vk);
            if (s <= z_buf[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v_buf[k] = q;
        z_buf[k] = s;
        z_buf[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z_buf[k + 1] < q) ++k;
        const double d = q - v_buf[k];
        out[q] = d * d + f[v_buf[k]];
    }
}

void edt_column(const uint8_t* fg, int w, int h, int x, double* col_sq) {
    // squared distance to the nearest background pixel within this column
    double d = kInf;
    for (int y = 0; y < h; ++y) {
        d = fg[size_t(y) * w + x] ? d + 1.0 : 0.0;
        col_sq[size_t(y) * w + x] = d;
    }
    d = kInf;
    for (int y = h - 1; y >= 0; --y) {
        d = fg[size_t(y) * w + x] ? d + 1.0 : 0.0;
        double& c = col_sq[size_t(y) * w + x];
        c = std::min(c, d);
        c = c >= kInf ? kInf : c * c;
    }
}

void edt_row(const double* col_sq, int w, int y, double* out, double* f, int* v_buf,
             double* z_buf) {
    const double* row = col_sq + size_t(y) * w;
    for (int x = 0; x < w; ++x) f[x] = row[x];
    envelope_1d(f, w, out + size_t(y) * w, v_buf, z_buf);
}

} // namespace

namespace serial {
void edt_sq(const uint8_t* fg, int w, int h, double* out) {
    std::vector<double> col_sq(size_t(w) * h);
    for (int x = 0; x < w; ++x) edt_column(fg, w, h, x, col_sq.data());
    std::vector<double> f(w);
    std::vector<int> v_buf(w + 1);
    std::vector<double> z_buf(w + 2);
    for (int y = 0; y < h; ++y)
        edt_row(col_sq.data(), w, y, out, f.data(), v_buf.data(), z_buf.data());
}
} // namespace serial

namespace omp {
void edt_sq(const uint8_t* fg, int w, int h, double* out) {
    std::vector<double> col_sq(size_t(w) * h);
#pragma omp parallel for schedule(static)
    for (int x = 0; x < w; ++x) edt_column(fg, w, h, x, col_sq.data());
#pragma omp parallel
    {
        std::vector<double> f(w);
        std::vector<int> v_buf(w + 1);
        std::vector<double> z_buf(w + 2);
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y)
            edt_row(col_sq.data(), w, y, out, f.data(), v_buf.data(), z_buf.data());
    }
}
} // namespace omp

void edt_sq(const uint8_t* fg, int w, int h, double* out, Exec ex) {
    ex == Exec::serial ? serial::edt_sq(fg, w, h, out) : omp::edt_sq(fg, w, h, out);
}

// ------------------------------------------------- capsule silhouette ----

namespace {

struct CapsulePrecomp {
    std::vector<double> vx, vy, vz, v2, r2;
};

CapsulePrecomp capsule_precompute(const ProjectionOperator& op,
                                  const std::vector<SphereSample>& samples) {
    CapsulePrecomp p;
    const size_t n = samples.size();
    p.vx.resize(n); p.vy.resize(n); p.vz.resize(n); p.v2.resize(n); p.r2.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const Vec3 v = samples[i].center_mm - op.source_position_mm;
        p.vx[i] = v.x(); p.vy[i] = v.y(); p.vz[i] = v.z();
        p.v2[i] = v.squaredNorm();
        p.r2[i] = samples[i].radius_mm * samples[i].radius_mm;
    }
    return p;
}

inline uint8_t capsule_pixel(const ProjectionOperator& op, const CapsulePrecomp& p, int x, int y) {
    const Ray ray = backproject_ray(op, Vec2(x, y));
    const double dx = ray.dir.x(), dy = ray.dir.y(), dz = ray.dir.z();
    for (size_t i = 0; i < p.v2.size(); ++i) {
        const double dot = p.vx[i] * dx + p.vy[i] * dy + p.vz[i] * dz;
        if (p.v2[i] - dot * dot <= p.r2[i]) return 1;
    }
    return 0;
}

} // namespace

namespace serial {
void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out) {
    const CapsulePrecomp p = capsule_precompute(op, samples);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[size_t(y) * w + x] = capsule_pixel(op, p, x, y);
}
} // namespace serial

namespace omp {
void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out) {
    const CapsulePrecomp p = capsule_precompute(op, samples);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[size_t(y) * w + x] = capsule_pixel(op, p, x, y);
}
} // namespace omp

void capsule_silhouette(const ProjectionOperator& op, const std::vector<SphereSample>& samples,
                        int w, int h, uint8_t* out, Exec ex) {
    ex == Exec::serial ? serial::capsule_silhouette(op, samples, w, h, out)
                       : omp::capsule_silhouette(op, samples, w, h, out);
}

// ------------------------------------------------------ soft raster ----

RasterScene build_raster_scene(std::vector<double> vx, std::vector<double> vy,
                               std::vector<std::array<int, 3>> tris, double sigma, int res) {
    if (sigma <= 0) throw InvalidInput("raster: sigma must be > 0");
    if (res < 2) throw InvalidInput("raster: resolution must be >= 2");
    RasterScene s;
    s.res = res;
    s.sigma = sigma;
    s.cutoff_d2 = sigma * std::log(1e12);
    s.vx = std::move(vx);
    s.vy = std::move(vy);
    s.tris = std::move(tris);
    s.bin_dim = std::max(1, res / 4);
    s.bins.assign(size_t(s.bin_dim) * s.bin_dim, {});

    const double pad = std::sqrt(s.cutoff_d2);
    for (int t = 0; t < int(s.tris.size()); ++t) {
        const auto& tri = s.tris[t];
        double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
        for (int k = 0; k < 3; ++k) {
            x0 = std::min(x0, s.vx[tri[k]]);
            x1 = std::max(x1, s.vx[tri[k]]);
            y0 = std::min(y0, s.vy[tri[k]]);
            y1 = std::max(y1, s.vy[tri[k]]);
        }
        x0 -= pad; y0 -= pad; x1 += pad; y1 += pad;
        if (x1 < 0 || y1 < 0 || x0 > 1 || y0 > 1) continue;
        const int bx0 = std::clamp(int(std::floor(x0 * s.bin_dim)), 0, s.bin_dim - 1);
        const int bx1 = std::clamp(int(std::floor(x1 * s.bin_dim)), 0, s.bin_dim - 1);
        const int by0 = std::clamp(int(std::floor(y0 * s.bin_dim)), 0, s.bin_dim - 1);
        const int by1 = std::clamp(int(std::floor(y1 * s.bin_dim)), 0, s.bin_dim - 1);
        for (int by = by0; by <= by1; ++by)
            for (int bx = bx0; bx <= bx1; ++bx)
                s.bins[size_t(by) * s.bin_dim + bx].push_back(t);
    }
    return s;
}

namespace {

inline double raster_pixel(const RasterScene& s, double qx, double qy) {
    const int bx = std::clamp(int(qx * s.bin_dim), 0, s.bin_dim - 1);
    const int by = std::clamp(int(qy * s.bin_dim), 0, s.bin_dim - 1);
    double prod = 1.0;
    for (int t : s.bins[size_t(by) * s.bin_dim + bx]) {
        const auto& tri = s.tris[t];
        const double ax = s.vx[tri[0]], ay = s.vy[tri[0]];
        const double bx2 = s.vx[tri[1]], by2 = s.vy[tri[1]];
        const double cx = s.vx[tri[2]], cy = s.vy[tri[2]];
        const bool inside = point_in_tri(qx, qy, ax, ay, bx2, by2, cx, cy);
        double d2 = point_segment_dist_sq(qx, qy, ax, ay, bx2, by2, nullptr);
        d2 = std::min(d2, point_segment_dist_sq(qx, qy, bx2, by2, cx, cy, nullptr));
        d2 = std::min(d2, point_segment_dist_sq(qx, qy, cx, cy, ax, ay, nullptr));
        if (!inside && d2 > s.cutoff_d2) continue;
        const double x = (inside ? d2 : -d2) / s.sigma;
        const double dj = 1.0 / (1.0 + std::exp(-x));
        prod *= (1.0 - dj);
        if (prod == 0.0) break;
    }
    return 1.0 - prod;
}

} // namespace

namespace serial {
void raster_silhouette(const RasterScene& scene, double* out) {
    const int res = scene.res;
    for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix)
            out[size_t(iy) * res + ix] =
                raster_pixel(scene, (ix + 0.5) / res, (iy + 0.5) / res);
}
} // namespace serial

namespace omp {
void raster_silhouette(const RasterScene& scene, double* out) {
    const int res = scene.res;
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix)
            out[size_t(iy) * res + ix] =
                raster_pixel(scene, (ix + 0.5) / res, (iy + 0.5) / res);
}
} // namespace omp

void raster_silhouette(const RasterScene& scene, double* out, Exec ex) {
    ex == Exec::serial ? serial::raster_silhouette(scene, out)
                       : omp::raster_silhouette(scene, out);
}

// --------------------------------------------------- nearest neighbor ----

PointGrid PointGrid::build(const MatX& pts) {
    if (pts.rows() == 0) throw InvalidInput("PointGrid: empty point set");
    PointGrid g;
    g.pts_ = pts;
    Vec3 lo = pts.colwise().minCoeff().transpose();
    Vec3 hi = pts.colwise().maxCoeff().transpose();
    const Vec3 ext = (hi - lo).cwiseMax(1e-9);
    const double vol = ext.prod();
    g.cell_ = std::max(std::cbrt(vol / double(pts.rows())) * 1.5, 1e-9);
    g.origin_ = lo;
    g.nx_ = std::clamp(int(std::ceil(ext.x() / g.cell_)), 1, 192);
    g.ny_ = std::clamp(int(std::ceil(ext.y() / g.cell_)), 1, 192);
    g.nz_ = std::clamp(int(std::ceil(ext.z() / g.cell_)), 1, 192);
    // cell may need to grow to cover the extent under the dim caps
    g.cell_ = std::max({g.cell_, ext.x() / g.nx_ + 1e-12, ext.y() / g.ny_ + 1e-12,
                        ext.z() / g.nz_ + 1e-12});

    const size_t ncells = size_t(g.nx_) * g.ny_ * g.nz_;
    std::vector<int> counts(ncells + 1, 0);
    auto cell_of = [&](const Vec3& p) {
        const int cx = std::clamp(int((p.x() - g.origin_.x()) / g.cell_), 0, g.nx_ - 1);
        const int cy = std::clamp(int((p.y() - g.origin_.y()) / g.cell_), 0, g.ny_ - 1);
        const int cz = std::clamp(int((p.z() - g.origin_.z()) / g.cell_), 0, g.nz_ - 1);
        return (size_t(cz) * g.ny_ + cy) * g.nx_ + cx;
    };
    for (long i = 0; i < pts.rows(); ++i) ++counts[cell_of(pts.row(i).transpose()) + 1];
    for (size_t c = 1; c <= ncells; ++c) counts[c] += counts[c - 1];
    g.cell_start_ = counts;
    g.point_ids_.resize(pts.rows());
    std::vector<int> cursor(counts.begin(), counts.end() - 1);
    for (long i = 0; i < pts.rows(); ++i)
        g.point_ids_[cursor[cell_of(pts.row(i).transpose())]++] = int(i);
    return g;
}

double PointGrid::nearest_dist(const Vec3& q) const {
    const long cx = long(std::floor((q.x() - origin_.x()) / cell_));
    const long cy = long(std::floor((q.y() - origin_.y()) / cell_));
    const long cz = long(std::floor((q.z() - origin_.z()) / cell_));
    const long s_max = std::max({std::max(cx, nx_ - 1 - cx), std::max(cy, ny_ - 1 - cy),
                                 std::max(cz, nz_ - 1 - cz)}) + 1;
    double best2 = kInf;
    for (long s = 0;; ++s) {
        if (s > 0) {
            const double lb = double(s - 1) * cell_;
            if (lb > 0 && lb * lb >= best2) break;
        }
        if (s > s_max) break;
        for (long dz = -s; dz <= s; ++dz) {
            const long z = cz + dz;
            if (z < 0 || z >= nz_) continue;
            for (long dy = -s; dy <= s; ++dy) {
                const long y = cy + dy;
                if (y < 0 || y >= ny_) continue;
                const bool face_zy = std::abs(dz) == s || std::abs(dy) == s;
                for (long dx = -s; dx <= s; ++dx) {
                    if (!face_zy && std::abs(dx) != s) continue; // shell only
                    const long x = cx + dx;
                    if (x < 0 || x >= nx_) continue;
                    const size_t c = (size_t(z) * ny_ + y) * nx_ + x;
                    for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
                        const double d2 = (pts_.row(point_ids_[k]).transpose() - q).squaredNorm();
                        best2 = std::min(best2, d2);
                    }
                }
            }
        }
    }
    return std::sqrt(best2);
}

namespace serial {
void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out) {
    for (long i = 0; i < queries.rows(); ++i)
        out[i] = grid.nearest_dist(queries.row(i).transpose());
}
} // namespace serial

namespace omp {
void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < queries.rows(); ++i)
        out[i] = grid.nearest_dist(queries.row(i).transpose());
}
} // namespace omp

void nn_min_distances(const PointGrid& grid, const MatX& queries, double* out, Exec ex) {
    ex == Exec::serial ? serial::nn_min_distances(grid, queries, out)
                       : omp::nn_min_distances(grid, queries, out);
}

// -------------------------------------------------------- voxelization ----

VoxelGrid make_voxel_grid(const Vec3& bbox_min, const Vec3& bbox_max, int resolution) {
    if (resolution < 8) throw InvalidInput("voxel grid: resolution must be >= 8");
    const Vec3 ext = (bbox_max - bbox_min).cwiseMax(1e-9);
    VoxelGrid g;
    g.spacing = ext.maxCoeff() / double(resolution - 4);
    g.nx = int(std::ceil(ext.x() / g.spacing)) + 4;
    g.ny = int(std::ceil(ext.y() / g.spacing)) + 4;
    g.nz = int(std::ceil(ext.z() / g.spacing)) + 4;
    g.origin = bbox_min - 2.0 * g.spacing * Vec3::Ones();
    g.occ.assign(g.voxel_count(), 0);
    return g;
}

namespace {

struct AxisView {
    int u, v, wdir; // axis indices: column plane (u,v), ray direction wdir
    int nu, nv, nw;
};

// Crossing coordinates of the axis-aligned column ray with the mesh.
void column_crossings(const TriMesh& mesh, const std::vector<int>& cand, const AxisView& ax,
                      double uc, double vc, std::vector<double>& ws) {
    ws.clear();
    for (int t : cand) {
        const auto& f = mesh.faces[t];
        const Vec3 a = mesh.vertices.row(f[0]);
        const Vec3 b = mesh.vertices.row(f[1]);
        const Vec3 c = mesh.vertices.row(f[2]);
        if (!point_in_tri(uc, vc, a[ax.u], a[ax.v], b[ax.u], b[ax.v], c[ax.u], c[ax.v]))
            continue;
        const Vec3 n = (b - a).cross(c - a);
        if (std::abs(n[ax.wdir]) < 1e-14) continue; // grazing; other axes vote
        const double w =
            (n.dot(a) - n[ax.u] * uc - n[ax.v] * vc) / n[ax.wdir];
        ws.push_back(w);
    }
    std::sort(ws.begin(), ws.end());
}

template <class ColumnFn>
void for_each_column(const AxisView& ax, bool parallel, ColumnFn fn) {
    if (parallel) {
#pragma omp parallel
        {
            std::vector<double> ws;
#pragma omp for schedule(static)
            for (int j = 0; j < ax.nv; ++j)
                for (int i = 0; i < ax.nu; ++i) fn(i, j, ws);
        }
    } else {
        std::vector<double> ws;
        for (int j = 0; j < ax.nv; ++j)
            for (int i = 0; i < ax.nu; ++i) fn(i, j, ws);
    }
}

void voxelize_impl(const TriMesh& mesh, VoxelGrid& grid, bool parallel) {
    if (mesh.faces.empty()) throw InvalidInput("voxelize: empty mesh");
    std::vector<uint8_t> votes(grid.voxel_count(), 0);
    const int dims[3] = {grid.nx, grid.ny, grid.nz};

    for (int dir = 0; dir < 3; ++dir) {
        AxisView ax;
        ax.wdir = dir;
        ax.u = (dir + 1) % 3;
        ax.v = (dir + 2) % 3;
        ax.nu = dims[ax.u];
        ax.nv = dims[ax.v];
        ax.nw = dims[ax.wdir];

        // bin triangles by (u,v) bbox into the column grid
        std::vector<std::vector<int>> cols(size_t(ax.nu) * ax.nv);
        for (int t = 0; t < int(mesh.faces.size()); ++t) {
            const auto& f = mesh.faces[t];
            double u0 = kInf, u1 = -kInf, v0 = kInf, v1 = -kInf;
            for (int k = 0; k < 3; ++k) {
                const auto p = mesh.vertices.row(f[k]);
                u0 = std::min(u0, p[ax.u]); u1 = std::max(u1, p[ax.u]);
                v0 = std::min(v0, p[ax.v]); v1 = std::max(v1, p[ax.v]);
            }
            const auto to_idx = [&](double w, int axis, int n) {
                return std::clamp(int((w - grid.origin[axis]) / grid.spacing - 0.5), 0, n - 1);
            };
            const int i0 = to_idx(u0, ax.u, ax.nu), i1 = to_idx(u1, ax.u, ax.nu) + 1;
            const int j0 = to_idx(v0, ax.v, ax.nv), j1 = to_idx(v1, ax.v, ax.nv) + 1;
            for (int j = j0; j <= std::min(j1, ax.nv - 1); ++j)
                for (int i = i0; i <= std::min(i1, ax.nu - 1); ++i)
                    cols[size_t(j) * ax.nu + i].push_back(t);
        }

        const double jitter_u = grid.spacing * 1.2345e-6;
        const double jitter_v = grid.spacing * 2.7182e-6;
        for_each_column(ax, parallel, [&](int i, int j, std::vector<double>& ws) {
            const auto& cand = cols[size_t(j) * ax.nu + i];
            if (cand.empty()) return;
            const double uc = grid.origin[ax.u] + grid.spacing * (i + 0.5) + jitter_u;
            const double vc = grid.origin[ax.v] + grid.spacing * (j + 0.5) + jitter_v;
            column_crossings(mesh, cand, ax, uc, vc, ws);
            if (ws.empty()) return;
            size_t cross = 0;
            for (int k = 0; k < ax.nw; ++k) {
                const double w = grid.origin[ax.wdir] + grid.spacing * (k + 0.5);
                while (cross < ws.size() && ws[cross] < w) ++cross;
                if (cross & 1) {
                    int idx3[3];
                    idx3[ax.u] = i;
                    idx3[ax.v] = j;
                    idx3[ax.wdir] = k;
                    ++votes[grid.index(idx3[0], idx3[1], idx3[2])];
                }
            }
        });
    }

    for (size_t i = 0; i < votes.size(); ++i)
        if (votes[i] >= 2) grid.occ[i] = 1;
}

} // namespace

namespace serial {
void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid) { voxelize_impl(mesh, grid, false); }
} // namespace serial

namespace omp {
void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid) { voxelize_impl(mesh, grid, true); }
} // namespace omp

void voxelize_parity(const TriMesh& mesh, VoxelGrid& grid, Exec ex) {
    ex == Exec::serial ? serial::voxelize_parity(mesh, grid) : omp::voxelize_parity(mesh, grid);
}

} // namespace angio::kernels
