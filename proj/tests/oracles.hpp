#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include "angio/autodiff.hpp"
#include "angio/geometry.hpp"
#include "angio/rng.hpp"

#include <cmath>
#include <functional>

namespace oracles {

using angio::MatX;
using angio::Vec2;
using angio::Vec3;

/// Projection via explicit ray-detector-plane intersection, written without
/// the homogeneous matrix machinery.
inline Vec2 ray_plane_project(const angio::ViewGeometry& g, const Vec3& p) {
    const double a = angio::deg2rad(g.primary_angle_deg);
    const double b = angio::deg2rad(g.secondary_angle_deg);
    angio::Mat3 rz, rx;
    rz << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    rx << 1, 0, 0, 0, std::cos(b), -std::sin(b), 0, std::sin(b), std::cos(b);
    const angio::Mat3 r = rz * rx;
    const Vec3 src = g.sod_mm * (r * Vec3(0, -1, 0));
    const Vec3 n = -(r * Vec3(0, -1, 0)); // ray direction source -> isocenter
    const Vec3 eu = r * Vec3(1, 0, 0);
    const Vec3 ev = r * Vec3(0, 0, -1);
    const Vec3 det_center = src + g.sid_mm * n;

    // intersect the ray src->p with the plane through det_center normal n
    const Vec3 d = (p - src).normalized();
    const double t = (det_center - src).dot(n) / d.dot(n);
    const Vec3 hit = src + t * d;
    const Vec3 rel = hit - det_center;
    return Vec2(rel.dot(eu) / g.pixel_spacing_mm, rel.dot(ev) / g.pixel_spacing_mm) +
           g.principal_point_px + g.detector_shift_px;
}

/// Central finite difference of a scalar function of one matrix argument.
inline MatX finite_difference(const std::function<double(const MatX&)>& f, const MatX& x,
                              double h = 1e-5) {
    MatX g(x.rows(), x.cols());
    MatX xp = x;
    for (long i = 0; i < x.rows(); ++i)
        for (long j = 0; j < x.cols(); ++j) {
            xp(i, j) = x(i, j) + h;
            const double fp = f(xp);
            xp(i, j) = x(i, j) - h;
            const double fm = f(xp);
            xp(i, j) = x(i, j);
            g(i, j) = (fp - fm) / (2.0 * h);
        }
    return g;
}

inline double max_rel_err(const MatX& got, const MatX& want, double floor = 1e-8) {
    double worst = 0;
    for (long i = 0; i < got.rows(); ++i)
        for (long j = 0; j < got.cols(); ++j) {
            const double denom = std::max(std::abs(want(i, j)), floor);
            worst = std::max(worst, std::abs(got(i, j) - want(i, j)) / denom);
        }
    return worst;
}

/// O(n^2) nearest-neighbor distances.
inline Eigen::VectorXd brute_nn(const MatX& from, const MatX& to) {
    Eigen::VectorXd d(from.rows());
    for (long i = 0; i < from.rows(); ++i) {
        double best = 1e300;
        for (long j = 0; j < to.rows(); ++j)
            best = std::min(best, (from.row(i) - to.row(j)).squaredNorm());
        d[i] = std::sqrt(best);
    }
    return d;
}

/// Dense Eq-1 GCN layer: relu(D^-1/2 (A+I) D^-1/2 H W).
inline MatX dense_gcn(const std::vector<std::array<int, 2>>& edges, const MatX& h,
                      const MatX& w, bool activate) {
    const int n = int(h.rows());
    MatX a = MatX::Identity(n, n);
    for (const auto& e : edges) {
        a(e[0], e[1]) = 1;
        a(e[1], e[0]) = 1;
    }
    Eigen::VectorXd dinv = a.rowwise().sum().array().rsqrt();
    const MatX s = dinv.asDiagonal() * a * dinv.asDiagonal();
    MatX out = s * h * w;
    if (activate) out = out.cwiseMax(0.0);
    return out;
}

inline MatX random_matrix(long r, long c, angio::Rng& rng, double lo = -1, double hi = 1) {
    MatX m(r, c);
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

} // namespace oracles
