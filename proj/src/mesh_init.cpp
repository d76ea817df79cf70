#include "angio/mesh_init.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace angio {

namespace {

double segment_segment_dist(const Vec3& p1, const Vec3& p2, const Vec3& q1, const Vec3& q2) {
    const Vec3 d1 = p2 - p1, d2 = q2 - q1, r = p1 - q1;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    double s, t;
    if (a <= 1e-30 && e <= 1e-30) return r.norm();
    if (a <= 1e-30) {
        s = 0;
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= 1e-30) {
            t = 0;
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2), denom = a * e - b * b;
            s = denom > 1e-30 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0) {
                t = 0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1) {
                t = 1;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return (p1 + s * d1 - (q1 + t * d2)).norm();
}

} // namespace

void Centerline3D::validate() const {
    if (points.rows() != kPoints || points.cols() != 3)
        throw InvalidInput("Centerline3D: expected 100 x 3 points");
    for (int i = 1; i < kPoints; ++i)
        if ((points.row(i) - points.row(i - 1)).norm() < 1e-12)
            throw InvalidInput("Centerline3D: consecutive points coincide");
    // simple polyline: non-adjacent segments must not touch
    for (int i = 0; i + 1 < kPoints; ++i)
        for (int j = i + 2; j + 1 < kPoints; ++j) {
            const double d = segment_segment_dist(points.row(i).transpose(),
                                                  points.row(i + 1).transpose(),
                                                  points.row(j).transpose(),
                                                  points.row(j + 1).transpose());
            if (d < 1e-9)
                throw InvalidInput("Centerline3D: polyline self-intersects near segment " +
                                   std::to_string(i));
        }
}

void RadiusProfile::validate() const {
    for (long i = 0; i < radii_mm.size(); ++i)
        if (!(radii_mm[i] > 0)) throw InvalidInput("RadiusProfile: non-positive radius");
}

MatX MeshNormalization::apply(const MatX& pts) const {
    MatX out(pts.rows(), 3);
    for (long i = 0; i < pts.rows(); ++i)
        out.row(i) = apply(Vec3(pts.row(i).transpose())).transpose();
    return out;
}

MatX MeshNormalization::invert(const MatX& pts) const {
    MatX out(pts.rows(), 3);
    for (long i = 0; i < pts.rows(); ++i)
        out.row(i) = invert(Vec3(pts.row(i).transpose())).transpose();
    return out;
}

BackProjectionResult back_project_centerline(const Centerline2D& cl_a, const Centerline2D& cl_b,
                                             const ViewGeometry& g_a, const ViewGeometry& g_b) {
    cl_a.validate();
    cl_b.validate();
    const ProjectionOperator op_a = projection_from_geometry(g_a);
    const ProjectionOperator op_b = projection_from_geometry(g_b);
    const double mm_per_px_a = g_a.pixel_spacing_mm * g_a.sod_mm / g_a.sid_mm;
    const double mm_per_px_b = g_b.pixel_spacing_mm * g_b.sod_mm / g_b.sid_mm;

    const int n = Centerline2D::kPoints;
    MatX raw(n, 3);
    VecX radii(n);
    double max_residual = 0.0;
    for (int i = 0; i < n; ++i) {
        TriangulationResult tri;
        try {
            tri = triangulate(op_a, op_b, cl_a.points[i], cl_b.points[i]);
        } catch (const std::exception& e) {
            throw NumericalError("back_project_centerline: triangulation failed at index " +
                                 std::to_string(i) + ": " + e.what());
        }
        raw.row(i) = tri.point_mm.transpose();
        max_residual = std::max(max_residual, tri.residual_mm);
        radii[i] = 0.5 * (cl_a.radii_px[i] * mm_per_px_a + cl_b.radii_px[i] * mm_per_px_b);
    }

    // moving average window 5; ends padded by linear extrapolation so straight
    // segments pass through unchanged
    auto padded = [&](int i) -> Vec3 {
        if (i < 0) return Vec3(raw.row(0)) + double(i) * (Vec3(raw.row(1)) - Vec3(raw.row(0)));
        if (i >= n)
            return Vec3(raw.row(n - 1)) +
                   double(i - n + 1) * (Vec3(raw.row(n - 1)) - Vec3(raw.row(n - 2)));
        return raw.row(i).transpose();
    };
    BackProjectionResult out;
    out.centerline.points.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 acc = Vec3::Zero();
        for (int k = -2; k <= 2; ++k) acc += padded(i + k);
        out.centerline.points.row(i) = (acc / 5.0).transpose();
    }
    out.radii.radii_mm = radii;
    out.max_triangulation_residual_mm = max_residual;
    out.centerline.validate();
    out.radii.validate();
    return out;
}

TubeMesh build_tube_generic(const MatX& points, const VecX& radii_mm, int slots) {
    const int n = int(points.rows());
    if (n < 2 || points.cols() != 3) throw InvalidInput("build_tube: need >= 2 centerline points");
    if (radii_mm.size() != n) throw InvalidInput("build_tube: radius count mismatch");
    for (int i = 0; i < n; ++i)
        if (!(radii_mm[i] > 0)) throw InvalidInput("build_tube: non-positive radius");

    // forward-difference tangents (backward at the last ring) so each ring is
    // exactly perpendicular to its outgoing centerline segment
    MatX tangents(n, 3);
    for (int i = 0; i < n; ++i) {
        const int i0 = std::min(i, n - 2);
        const Vec3 d = (points.row(i0 + 1) - points.row(i0)).transpose();
        const double len = d.norm();
        if (len < 1e-12)
            throw InvalidInput("build_tube: zero-length tangent at point " + std::to_string(i));
        tangents.row(i) = (d / len).transpose();
    }

    // initial frame: smallest-component axis crossed with the tangent
    const Vec3 t0 = tangents.row(0).transpose();
    int k_min = 0;
    for (int k = 1; k < 3; ++k)
        if (std::abs(t0[k]) < std::abs(t0[k_min])) k_min = k;
    const Vec3 axis = Vec3::Unit(k_min);
    Vec3 normal = axis.cross(t0).normalized();

    MatX verts(long(n) * slots, 3);
    Vec3 prev_t = t0;
    Vec3 prev_p = points.row(0).transpose();
    for (int i = 0; i < n; ++i) {
        const Vec3 p = points.row(i).transpose();
        const Vec3 t = tangents.row(i).transpose();
        if (i > 0) {
            // double-reflection transport of the normal (rotation minimizing)
            const Vec3 v1 = p - prev_p;
            const double c1 = v1.squaredNorm();
            Vec3 rl = normal, tl = prev_t;
            if (c1 > 1e-24) {
                rl = normal - (2.0 / c1) * v1.dot(normal) * v1;
                tl = prev_t - (2.0 / c1) * v1.dot(prev_t) * v1;
            }
            const Vec3 v2 = t - tl;
            const double c2 = v2.squaredNorm();
            normal = c2 > 1e-24 ? Vec3(rl - (2.0 / c2) * v2.dot(rl) * v2) : rl;
            normal = (normal - normal.dot(t) * t).normalized();
        }
        const Vec3 binormal = t.cross(normal);
        for (int j = 0; j < slots; ++j) {
            const double phi = 2.0 * kPi * double(j) / double(slots);
            verts.row(long(i) * slots + j) =
                (p + radii_mm[i] * (std::cos(phi) * normal + std::sin(phi) * binormal))
                    .transpose();
        }
        prev_t = t;
        prev_p = p;
    }
    return make_tube_topology(n, slots, std::move(verts));
}

TubeMesh build_tube(const Centerline3D& cl, const RadiusProfile& rp) {
    cl.validate();
    rp.validate();
    if (rp.radii_mm.size() != Centerline3D::kPoints)
        throw InvalidInput("build_tube: radius profile must have 100 entries");
    TubeMesh m = build_tube_generic(cl.points, rp.radii_mm, 60);
    m.validate_counts();
    return m;
}

MeshNormalization compute_normalization(const MatX& points, const Vec3& chord_start,
                                        const Vec3& chord_end) {
    const Vec3 chord = chord_end - chord_start;
    if (chord.norm() < 1e-9) throw InvalidInput("normalize_mesh: degenerate chord");

    const Vec3 d = chord.normalized();
    const Vec3 z = Vec3::UnitZ();
    Mat3 rot;
    const Vec3 axis = d.cross(z);
    const double sin_a = axis.norm(), cos_a = d.dot(z);
    if (sin_a < 1e-12) {
        if (cos_a > 0) {
            rot = Mat3::Identity();
        } else {
            rot = Eigen::AngleAxisd(kPi, Vec3::UnitX()).toRotationMatrix();
        }
    } else {
        rot = Eigen::AngleAxisd(std::atan2(sin_a, cos_a), axis / sin_a).toRotationMatrix();
    }

    const Vec3 mid = 0.5 * (chord_start + chord_end);
    MatX q(points.rows(), 3);
    for (long i = 0; i < points.rows(); ++i)
        q.row(i) = (rot * (Vec3(points.row(i).transpose()) - mid)).transpose();
    const Vec3 ext =
        q.colwise().maxCoeff().transpose() - q.colwise().minCoeff().transpose();
    const double max_extent = std::max(ext.maxCoeff(), 1e-9);

    MeshNormalization n;
    n.rotation = rot;
    n.scale = 1.0 / max_extent;
    // fold the +0.5 shift into the pre-translation
    n.translation = mid - rot.transpose() * (Vec3::Constant(0.5) / n.scale);
    return n;
}

std::pair<TubeMesh, MeshNormalization> normalize_mesh(const TubeMesh& m) {
    const MeshNormalization n =
        compute_normalization(m.vertices, ring_centroid(m, 0), ring_centroid(m, m.rings - 1));
    TubeMesh out = m;
    out.vertices = n.apply(m.vertices);
    return {std::move(out), n};
}

std::pair<Centerline3D, MeshNormalization> normalize_mesh(const Centerline3D& cl) {
    const MeshNormalization n = compute_normalization(
        cl.points, cl.points.row(0).transpose(), cl.points.row(cl.points.rows() - 1).transpose());
    Centerline3D out;
    out.points = n.apply(cl.points);
    return {std::move(out), n};
}

TubeMesh denormalize(const TubeMesh& m, const MeshNormalization& n) {
    TubeMesh out = m;
    out.vertices = n.invert(m.vertices);
    return out;
}

Centerline3D denormalize(const Centerline3D& cl, const MeshNormalization& n) {
    Centerline3D out;
    out.points = n.invert(cl.points);
    return out;
}

Vec3 ring_centroid(const TubeMesh& m, int ring) {
    Vec3 c = Vec3::Zero();
    for (int j = 0; j < m.slots; ++j) c += m.vertices.row(m.vid(ring, j)).transpose();
    return c / double(m.slots);
}

void write_centerline_csv(const Centerline3D& cl, const RadiusProfile& rp,
                          const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw InvalidInput("cannot write csv: " + path);
    std::fprintf(f, "x,y,z,r\n");
    for (long i = 0; i < cl.points.rows(); ++i)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", cl.points(i, 0), cl.points(i, 1),
                     cl.points(i, 2), rp.radii_mm[i]);
    std::fclose(f);
}

std::pair<Centerline3D, RadiusProfile> read_centerline_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot read csv: " + path);
    std::string line;
    std::getline(f, line); // header
    std::vector<Eigen::Vector4d> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Eigen::Vector4d v;
        std::istringstream ss(line);
        char comma;
        ss >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
        rows.push_back(v);
    }
    Centerline3D cl;
    RadiusProfile rp;
    cl.points.resize(long(rows.size()), 3);
    rp.radii_mm.resize(long(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        cl.points.row(long(i)) = rows[i].head<3>().transpose();
        rp.radii_mm[long(i)] = rows[i][3];
    }
    return {std::move(cl), std::move(rp)};
}

} // namespace angio
