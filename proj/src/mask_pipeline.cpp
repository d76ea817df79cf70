#include "angio/mask_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace angio {

void SoiSpec::validate(int image_w, int image_h) const {
    if ((start_px - end_px).norm() < 1e-9)
        throw InvalidInput("SoiSpec: start and end coincide");
    auto inside = [&](const Vec2& p) {
        return p.x() >= 0 && p.y() >= 0 && p.x() <= image_w - 1 && p.y() <= image_h - 1;
    };
    if (!inside(start_px) || !inside(end_px))
        throw InvalidInput("SoiSpec: endpoint outside image bounds");
    if (crop_margin < 0) throw InvalidInput("SoiSpec: negative crop margin");
}

Vec2 PatchTransform::full_from_patch(const Vec2& p) const {
    const double c = std::cos(rotation_angle), s = std::sin(rotation_angle);
    const Vec2 q = p - patch_center();
    return Vec2(c * q.x() - s * q.y(), s * q.x() + c * q.y()) + crop_origin;
}

Vec2 PatchTransform::patch_from_full(const Vec2& p) const {
    const double c = std::cos(rotation_angle), s = std::sin(rotation_angle);
    const Vec2 q = p - crop_origin;
    return Vec2(c * q.x() + s * q.y(), -s * q.x() + c * q.y()) + patch_center();
}

void Centerline2D::validate() const {
    if (int(points.size()) != kPoints || int(radii_px.size()) != kPoints)
        throw InvalidInput("Centerline2D: expected exactly 100 points");
    for (int i = 1; i < kPoints; ++i)
        if ((points[i] - points[i - 1]).norm() < 1e-12)
            throw InvalidInput("Centerline2D: consecutive points coincide");
    for (double r : radii_px)
        if (!(r > 0)) throw InvalidInput("Centerline2D: non-positive radius");
}

CropResult crop_and_rotate(const BinaryMask& mask, const SoiSpec& soi) {
    soi.validate(mask.width, mask.height);

    const Vec2 lo = soi.start_px.cwiseMin(soi.end_px) - Vec2::Constant(soi.crop_margin);
    const Vec2 hi = soi.start_px.cwiseMax(soi.end_px) + Vec2::Constant(soi.crop_margin);
    const double x0 = std::max(0.0, lo.x()), y0 = std::max(0.0, lo.y());
    const double x1 = std::min(double(mask.width - 1), hi.x());
    const double y1 = std::min(double(mask.height - 1), hi.y());
    if (x1 - x0 < 1 || y1 - y0 < 1)
        throw InvalidInput("crop_and_rotate: crop window collapses to zero area");

    PatchTransform t;
    t.crop_origin = Vec2(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    t.rotation_angle =
        std::atan2(soi.end_px.y() - soi.start_px.y(), soi.end_px.x() - soi.start_px.x());

    // rotated extent of the crop box
    const double cw = x1 - x0, ch = y1 - y0;
    const double c = std::abs(std::cos(t.rotation_angle)), s = std::abs(std::sin(t.rotation_angle));
    t.patch_width = int(std::ceil(cw * c + ch * s)) + 3;
    t.patch_height = int(std::ceil(cw * s + ch * c)) + 3;

    BinaryMask patch(t.patch_width, t.patch_height);
    for (int y = 0; y < t.patch_height; ++y) {
        for (int x = 0; x < t.patch_width; ++x) {
            const Vec2 pf = t.full_from_patch(Vec2(x, y));
            const int xi = int(std::lround(pf.x()));
            const int yi = int(std::lround(pf.y()));
            if (mask.in_bounds(xi, yi) && pf.x() >= x0 - 0.5 && pf.x() <= x1 + 0.5 &&
                pf.y() >= y0 - 0.5 && pf.y() <= y1 + 0.5)
                patch.at(x, y) = mask.at(xi, yi);
        }
    }
    return CropResult{std::move(patch), t};
}

namespace {

std::vector<int> largest_component(const BinaryMask& m, bool* multiple) {
    // label = component id per pixel, -1 outside
    std::vector<int> label(m.data.size(), -1);
    int ncomp = 0;
    std::vector<size_t> best_members;
    std::vector<size_t> stack, members;
    for (size_t i = 0; i < m.data.size(); ++i) {
        if (!m.data[i] || label[i] >= 0) continue;
        stack.assign(1, i);
        members.clear();
        label[i] = ncomp;
        while (!stack.empty()) {
            const size_t p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int px = int(p % m.width), py = int(p / m.width);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    const int qx = px + dx, qy = py + dy;
                    if (!m.in_bounds(qx, qy)) continue;
                    const size_t q = size_t(qy) * m.width + qx;
                    if (m.data[q] && label[q] < 0) {
                        label[q] = ncomp;
                        stack.push_back(q);
                    }
                }
        }
        if (members.size() > best_members.size()) best_members = members;
        ++ncomp;
    }
    if (multiple) *multiple = ncomp > 1;
    std::vector<int> keep(m.data.size(), 0);
    for (size_t p : best_members) keep[p] = 1;
    return keep;
}

} // namespace

double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
}

ContourResult extract_contour(const BinaryMask& mask) {
    if (mask.foreground_count() == 0) throw InvalidInput("extract_contour: empty mask");

    ContourResult result;
    const std::vector<int> keep = largest_component(mask, &result.multiple_components);
    auto fg = [&](int x, int y) {
        return mask.in_bounds(x, y) && keep[size_t(y) * mask.width + x];
    };

    // Directed boundary edges on the corner lattice; corner (x,y) sits at
    // continuous (x-0.5, y-0.5). Orientation keeps foreground on a fixed side
    // so corners have matching in/out degree and greedy stitching closes.
    struct Corner {
        int x, y;
        bool operator<(const Corner& o) const { return y != o.y ? y < o.y : x < o.x; }
    };
    std::map<Corner, std::vector<Corner>> out_edges;
    auto add_edge = [&](int ax, int ay, int bx, int by) {
        out_edges[{ax, ay}].push_back({bx, by});
    };
    for (int y = 0; y <= mask.height; ++y) {
        for (int x = 0; x <= mask.width; ++x) {
            // vertical edge (x,y)-(x,y+1): cells (x-1,y) left, (x,y) right
            if (y < mask.height) {
                const bool l = fg(x - 1, y), r = fg(x, y);
                if (r && !l) add_edge(x, y, x, y + 1);
                if (l && !r) add_edge(x, y + 1, x, y);
            }
            // horizontal edge (x,y)-(x+1,y): cells (x,y-1) above, (x,y) below
            if (x < mask.width) {
                const bool a = fg(x, y - 1), b = fg(x, y);
                if (a && !b) add_edge(x, y, x + 1, y);
                if (b && !a) add_edge(x + 1, y, x, y);
            }
        }
    }

    // start from the smallest corner that has an outgoing edge (outer boundary)
    const Corner start = out_edges.begin()->first;
    std::vector<Vec2> poly;
    Corner cur = start;
    Corner prev = start; // direction undefined at start
    do {
        poly.push_back(Vec2(cur.x - 0.5, cur.y - 0.5));
        auto& outs = out_edges[cur];
        // prefer the tightest left turn at pinch corners for a consistent loop
        int pick = 0;
        if (outs.size() > 1 && !(cur.x == start.x && cur.y == start.y && poly.size() == 1)) {
            const int dx = cur.x - prev.x, dy = cur.y - prev.y;
            int best_score = -10;
            for (int i = 0; i < int(outs.size()); ++i) {
                const int ex = outs[i].x - cur.x, ey = outs[i].y - cur.y;
                const int cross = dx * ey - dy * ex;
                const int dot = dx * ex + dy * ey;
                const int score = cross > 0 ? 2 : (cross == 0 && dot > 0 ? 1 : 0);
                if (score > best_score) {
                    best_score = score;
                    pick = i;
                }
            }
        }
        const Corner next = outs[pick];
        outs.erase(outs.begin() + pick);
        prev = cur;
        cur = next;
    } while (!(cur.x == start.x && cur.y == start.y));

    if (polygon_area(poly) < 0) std::reverse(poly.begin(), poly.end());
    result.polygon = std::move(poly);
    return result;
}

namespace {

double bilinear(const std::vector<double>& img, int w, int h, const Vec2& p) {
    const double x = std::clamp(p.x(), 0.0, double(w - 1));
    const double y = std::clamp(p.y(), 0.0, double(h - 1));
    const int x0 = std::min(int(x), w - 2), y0 = std::min(int(y), h - 2);
    const double fx = x - x0, fy = y - y0;
    const double v00 = img[size_t(y0) * w + x0], v10 = img[size_t(y0) * w + x0 + 1];
    const double v01 = img[size_t(y0 + 1) * w + x0], v11 = img[size_t(y0 + 1) * w + x0 + 1];
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

int snap_to_foreground(const BinaryMask& m, const Vec2& p) {
    const int cx = int(std::lround(p.x())), cy = int(std::lround(p.y()));
    double best = 1e30;
    int best_idx = -1;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const int x = cx + dx, y = cy + dy;
            if (!m.in_bounds(x, y) || !m.at(x, y)) continue;
            const double d = (Vec2(x, y) - p).squaredNorm();
            if (d < best - 1e-12) {
                best = d;
                best_idx = y * m.width + x;
            }
        }
    if (best_idx < 0 || best > 9.0 + 1e-9)
        throw InvalidInput("centerline_2d: endpoint not within 3 px of foreground");
    return best_idx;
}

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& path, int n) {
    std::vector<double> cum(path.size(), 0.0);
    for (size_t i = 1; i < path.size(); ++i)
        cum[i] = cum[i - 1] + (path[i] - path[i - 1]).norm();
    const double total = cum.back();
    if (total < 1e-9) throw InvalidInput("centerline_2d: degenerate path");
    std::vector<Vec2> out(n);
    size_t seg = 0;
    for (int i = 0; i < n; ++i) {
        const double target = total * double(i) / double(n - 1);
        while (seg + 1 < path.size() - 1 && cum[seg + 1] < target) ++seg;
        const double len = cum[seg + 1] - cum[seg];
        const double t = len > 0 ? (target - cum[seg]) / len : 0.0;
        out[i] = path[seg] + t * (path[seg + 1] - path[seg]);
    }
    return out;
}

} // namespace

double edt_at(const BinaryMask& mask, const Vec2& p, kernels::Exec ex) {
    std::vector<double> dt_sq(mask.data.size());
    kernels::edt_sq(mask.data.data(), mask.width, mask.height, dt_sq.data(), ex);
    std::vector<double> dt(dt_sq.size());
    for (size_t i = 0; i < dt.size(); ++i) dt[i] = std::sqrt(dt_sq[i]);
    return bilinear(dt, mask.width, mask.height, p);
}

Centerline2D centerline_2d(const BinaryMask& mask, const Vec2& start_px, const Vec2& end_px,
                           kernels::Exec ex) {
    if (mask.foreground_count() == 0) throw InvalidInput("centerline_2d: empty mask");

    const int w = mask.width, h = mask.height;
    std::vector<double> dt_sq(mask.data.size());
    kernels::edt_sq(mask.data.data(), w, h, dt_sq.data(), ex);

    const int src = snap_to_foreground(mask, start_px);
    const int dst = snap_to_foreground(mask, end_px);

    // Dijkstra over foreground pixels; low EDT is expensive, so the optimal
    // path follows the ridge.
    std::vector<double> dist(mask.data.size(), 1e30);
    std::vector<int> from(mask.data.size(), -1);
    using QEntry = std::pair<double, int>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<QEntry>> queue;
    dist[src] = 0;
    queue.push({0.0, src});
    while (!queue.empty()) {
        const auto [d, p] = queue.top();
        queue.pop();
        if (d > dist[p]) continue;
        if (p == dst) break;
        const int px = p % w, py = p / w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (!dx && !dy) continue;
                const int qx = px + dx, qy = py + dy;
                if (!mask.in_bounds(qx, qy) || !mask.at(qx, qy)) continue;
                const int q = qy * w + qx;
                const double step = (dx && dy) ? 1.4142135623730951 : 1.0;
                const double nd = d + step / (1.0 + dt_sq[q]);
                if (nd < dist[q]) {
                    dist[q] = nd;
                    from[q] = p;
                    queue.push({nd, q});
                }
            }
    }
    if (dist[dst] >= 1e30)
        throw InvalidInput("centerline_2d: endpoints are disconnected in the foreground");

    std::vector<Vec2> path;
    for (int p = dst; p >= 0; p = from[p]) path.push_back(Vec2(p % w, p / w));
    std::reverse(path.begin(), path.end());

    std::vector<double> dt(dt_sq.size());
    for (size_t i = 0; i < dt.size(); ++i) dt[i] = std::sqrt(dt_sq[i]);
    auto dt_interp = [&](const Vec2& p) { return bilinear(dt, w, h, p); };

    // keep exact endpoints when they are safely interior
    if ((start_px - path.front()).norm() > 1e-9 && dt_interp(start_px) > 0.6)
        path.insert(path.begin(), start_px);
    if ((end_px - path.back()).norm() > 1e-9 && dt_interp(end_px) > 0.6)
        path.push_back(end_px);
    if (path.size() < 2) path.push_back(path.front() + Vec2(1e-6, 0));

    Centerline2D cl;
    cl.points = resample_polyline(path, Centerline2D::kPoints);
    cl.radii_px.resize(Centerline2D::kPoints);
    for (int i = 0; i < Centerline2D::kPoints; ++i)
        cl.radii_px[i] = std::max(dt_interp(cl.points[i]) - 0.5, 0.1);
    cl.validate();
    return cl;
}

Centerline2D to_full_image(const Centerline2D& cl, const PatchTransform& t) {
    Centerline2D out = cl;
    for (auto& p : out.points) p = t.full_from_patch(p);
    return out;
}

std::vector<std::pair<int, int>> correspond_views(const Centerline2D& a, const Centerline2D& b) {
    a.validate();
    b.validate();
    std::vector<std::pair<int, int>> pairs(Centerline2D::kPoints);
    for (int i = 0; i < Centerline2D::kPoints; ++i) pairs[i] = {i, i};
    return pairs;
}

} // namespace angio
