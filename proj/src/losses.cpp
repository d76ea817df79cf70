#include "angio/losses.hpp"

#include <cmath>
#include <memory>

namespace angio {

void LossConfig::validate() const {
    if (w_norm < 0 || w_edge < 0 || w_lap < 0 || w_seg < 0)
        throw InvalidInput("LossConfig: weights must be >= 0");
    if (!(raster_sigma > 0)) throw InvalidInput("LossConfig: raster_sigma must be > 0");
    if (raster_resolution < 8) throw InvalidInput("LossConfig: raster_resolution too small");
}

// ------------------------------------------------ direct evaluation ----

double mse_loss(const MatX& pred, const MatX& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw InvalidInput("mse_loss: vertex count mismatch");
    return (pred - gt).squaredNorm() / double(pred.rows());
}

MatX vertex_normals(const MatX& verts, const std::vector<std::array<int, 3>>& tris) {
    MatX acc = MatX::Zero(verts.rows(), 3);
    VecX count = VecX::Zero(verts.rows());
    for (const auto& f : tris) {
        const Vec3 a = verts.row(f[0]);
        const Vec3 n = (Vec3(verts.row(f[1])) - a).cross(Vec3(verts.row(f[2])) - a);
        for (int v : f) {
            acc.row(v) += n.transpose();
            count[v] += 1.0;
        }
    }
    for (long i = 0; i < acc.rows(); ++i) {
        if (count[i] > 0) acc.row(i) /= count[i];
        const double len = acc.row(i).norm();
        if (len < 1e-300)
            throw NumericalError("vertex_normals: degenerate one-ring at vertex " +
                                 std::to_string(i));
        acc.row(i) /= len;
    }
    return acc;
}

MatX vertex_normals(const TubeMesh& mesh) { return vertex_normals(mesh.vertices, mesh.tri_faces); }

double normal_loss(const TubeMesh& pred, const TubeMesh& gt) {
    if (pred.vertices.rows() != gt.vertices.rows())
        throw InvalidInput("normal_loss: vertex count mismatch");
    const MatX np = vertex_normals(pred);
    const MatX ng = vertex_normals(gt.vertices, pred.tri_faces);
    double acc = 0;
    for (long i = 0; i < np.rows(); ++i) acc += 1.0 - std::abs(np.row(i).dot(ng.row(i)));
    return acc / double(np.rows());
}

double edge_loss(const TubeMesh& mesh) {
    double acc = 0;
    for (const auto& e : mesh.edges)
        acc += (mesh.vertices.row(e[0]) - mesh.vertices.row(e[1])).squaredNorm();
    return acc / double(mesh.edges.size());
}

Vec3 laplacian(const TubeMesh& mesh, int vertex_id) {
    if (vertex_id < 0 || vertex_id >= mesh.vertex_count())
        throw InvalidInput("laplacian: vertex id out of range");
    Vec3 acc = Vec3::Zero();
    int deg = 0;
    for (const auto& e : mesh.edges) {
        if (e[0] == vertex_id) {
            acc += mesh.vertices.row(e[1]).transpose();
            ++deg;
        } else if (e[1] == vertex_id) {
            acc += mesh.vertices.row(e[0]).transpose();
            ++deg;
        }
    }
    if (deg == 0) throw InvalidInput("laplacian: isolated vertex");
    return Vec3(mesh.vertices.row(vertex_id).transpose()) - acc / double(deg);
}

double laplacian_loss(const TubeMesh& pred, const TubeMesh& gt) {
    if (pred.vertices.rows() != gt.vertices.rows() || pred.edges != gt.edges)
        throw InvalidInput("laplacian_loss: topology mismatch");
    const ad::SpMat lop = laplacian_operator(int(pred.vertices.rows()), pred.edges);
    const MatX diff = lop * pred.vertices - lop * gt.vertices;
    return diff.squaredNorm() / double(pred.vertices.rows());
}

double bce_dice_loss(const VecX& pred, const VecX& gt) {
    if (pred.size() != gt.size()) throw InvalidInput("bce_dice_loss: dimension mismatch");
    const double eps = 1e-6;
    const double n = double(pred.size());
    double bce = 0, s_pg = 0, s_p = 0, s_g = 0;
    for (long i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], 1e-7, 1.0 - 1e-7);
        const double g = gt[i];
        bce -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
        s_pg += p * g;
        s_p += p;
        s_g += g;
    }
    const double dice = (2.0 * s_pg + eps) / (s_p + s_g + eps);
    return bce / n + (1.0 - dice);
}

// -------------------------------------------------------- rendering ----

RenderWindow soi_render_window(const BinaryMask& mask, int pad_px) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) throw InvalidInput("soi_render_window: empty mask");
    const double side = std::max(x1 - x0, y1 - y0) + 2.0 * pad_px;
    const Vec2 center(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    return RenderWindow{center - Vec2::Constant(0.5 * side), side};
}

VecX sample_mask_on_window(const BinaryMask& mask, const RenderWindow& window, int res) {
    VecX out(long(res) * res);
    for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix) {
            const double u = window.min_px.x() + (ix + 0.5) / res * window.side_px;
            const double v = window.min_px.y() + (iy + 0.5) / res * window.side_px;
            const int xi = int(std::lround(u));
            const int yi = int(std::lround(v));
            out[long(iy) * res + ix] = mask.in_bounds(xi, yi) ? double(mask.at(xi, yi)) : 0.0;
        }
    return out;
}

namespace {

struct Projected2D {
    std::vector<double> x, y;
    bool any_area = false;
};

Projected2D project_mesh_to_window(const MatX& verts_mm, const ProjectionOperator& op,
                                   const RenderWindow& win,
                                   const std::vector<std::array<int, 3>>& tris) {
    Projected2D p;
    p.x.resize(verts_mm.rows());
    p.y.resize(verts_mm.rows());
    for (long i = 0; i < verts_mm.rows(); ++i) {
        const Vec2 q = project(op, verts_mm.row(i).transpose());
        p.x[i] = (q.x() - win.min_px.x()) / win.side_px;
        p.y[i] = (q.y() - win.min_px.y()) / win.side_px;
    }
    for (const auto& t : tris) {
        const double area2 = (p.x[t[1]] - p.x[t[0]]) * (p.y[t[2]] - p.y[t[0]]) -
                             (p.x[t[2]] - p.x[t[0]]) * (p.y[t[1]] - p.y[t[0]]);
        if (std::abs(area2) > 1e-18) {
            p.any_area = true;
            break;
        }
    }
    return p;
}

} // namespace

SilhouetteImage soft_render_silhouette(const TubeMesh& mesh, const ProjectionOperator& op,
                                       const LossConfig& cfg, const RenderWindow& window,
                                       kernels::Exec ex) {
    cfg.validate();
    SilhouetteImage img;
    img.res = cfg.raster_resolution;
    img.values = VecX::Zero(long(img.res) * img.res);
    Projected2D p = project_mesh_to_window(mesh.vertices, op, window, mesh.tri_faces);
    if (!p.any_area) {
        img.empty_warning = true;
        return img;
    }
    const kernels::RasterScene scene = kernels::build_raster_scene(
        std::move(p.x), std::move(p.y), mesh.tri_faces, cfg.raster_sigma, img.res);
    kernels::raster_silhouette(scene, img.values.data(), ex);
    return img;
}

// ------------------------------------------------------- tape graph ----

namespace graph {

ad::Value mse_loss(ad::Tape& t, ad::Value pred, const MatX& gt) {
    if (t.val(pred).rows() != gt.rows())
        throw InvalidInput("mse_loss: vertex count mismatch");
    const ad::Value d = t.sub(pred, t.constant(gt));
    return t.scale(t.sum(t.mul(d, d)), 1.0 / double(gt.rows()));
}

ad::Value vertex_normals(ad::Tape& t, ad::Value verts,
                         const std::vector<std::array<int, 3>>& tris, int n_verts) {
    std::vector<int> i0, i1, i2;
    i0.reserve(tris.size());
    for (const auto& f : tris) {
        i0.push_back(f[0]);
        i1.push_back(f[1]);
        i2.push_back(f[2]);
    }
    const ad::Value a = t.gather_rows(verts, i0);
    const ad::Value fn =
        t.cross_rows(t.sub(t.gather_rows(verts, i1), a), t.sub(t.gather_rows(verts, i2), a));

    // face -> vertex averaging (1/N(f) per adjacent face)
    VecX count = VecX::Zero(n_verts);
    for (const auto& f : tris)
        for (int v : f) count[v] += 1.0;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(tris.size() * 3);
    for (int fi = 0; fi < int(tris.size()); ++fi)
        for (int v : tris[fi]) trips.emplace_back(v, fi, 1.0 / count[v]);
    ad::SpMat favg(n_verts, long(tris.size()));
    favg.setFromTriplets(trips.begin(), trips.end());
    favg.makeCompressed();

    return t.normalize_rows(t.spmm(favg, fn));
}

ad::Value normal_loss(ad::Tape& t, ad::Value verts,
                      const std::vector<std::array<int, 3>>& tris, const MatX& gt_normals) {
    const ad::Value n = vertex_normals(t, verts, tris, int(gt_normals.rows()));
    const ad::Value dots = t.rows_dot(n, t.constant(gt_normals));
    return t.add_scalar(t.scale(t.mean(t.abs(dots)), -1.0), 1.0);
}

ad::Value edge_loss(ad::Tape& t, ad::Value verts, const std::vector<std::array<int, 2>>& edges,
                    const VecX* initial_lengths) {
    std::vector<int> vi, vj;
    vi.reserve(edges.size());
    for (const auto& e : edges) {
        vi.push_back(e[0]);
        vj.push_back(e[1]);
    }
    const ad::Value d = t.sub(t.gather_rows(verts, vi), t.gather_rows(verts, vj));
    if (!initial_lengths)
        return t.scale(t.sum(t.mul(d, d)), 1.0 / double(edges.size()));
    const ad::Value len = t.sqrt_ew(t.rows_dot(d, d));
    const ad::Value diff = t.sub(len, t.constant(*initial_lengths));
    return t.scale(t.sum(t.mul(diff, diff)), 1.0 / double(edges.size()));
}

ad::Value laplacian_loss(ad::Tape& t, ad::Value verts, const ad::SpMat& laplacian_op,
                         const MatX& gt_laplacian) {
    const ad::Value diff = t.sub(t.spmm(laplacian_op, verts), t.constant(gt_laplacian));
    return t.scale(t.sum(t.mul(diff, diff)), 1.0 / double(gt_laplacian.rows()));
}

ad::Value bce_dice(ad::Tape& t, ad::Value pred_pixels, VecX gt_pixels) {
    const MatX& p = t.val(pred_pixels);
    if (p.rows() != gt_pixels.size() || p.cols() != 1)
        throw InvalidInput("bce_dice: dimension mismatch");
    const double loss = bce_dice_loss(p.col(0), gt_pixels);
    MatX out(1, 1);
    out(0, 0) = loss;
    return t.custom(std::move(out), t.needs_grad(pred_pixels),
                    [pred_pixels, gt = std::move(gt_pixels)](ad::Tape& tt, int self) {
                        auto* gp = tt.grad_sink(pred_pixels);
                        if (!gp) return;
                        const double g_out = tt.grad(ad::Value{self})(0, 0);
                        const MatX& pv = tt.val(pred_pixels);
                        const double eps = 1e-6;
                        const double n = double(pv.rows());
                        double s_pg = 0, s_p = 0, s_g = 0;
                        for (long i = 0; i < pv.rows(); ++i) {
                            const double pc = std::clamp(pv(i, 0), 1e-7, 1.0 - 1e-7);
                            s_pg += pc * gt[i];
                            s_p += pc;
                            s_g += gt[i];
                        }
                        const double denom = s_p + s_g + eps;
                        const double num = 2.0 * s_pg + eps;
                        for (long i = 0; i < pv.rows(); ++i) {
                            if (pv(i, 0) <= 1e-7 || pv(i, 0) >= 1.0 - 1e-7) continue;
                            const double pc = pv(i, 0);
                            const double dbce =
                                -(gt[i] / pc - (1.0 - gt[i]) / (1.0 - pc)) / n;
                            const double ddice =
                                (2.0 * gt[i] * denom - num) / (denom * denom);
                            (*gp)(i, 0) += g_out * (dbce - ddice);
                        }
                    });
}

ad::Value project_to_window(ad::Tape& t, ad::Value verts_mm, const ProjectionOperator& op,
                            const RenderWindow& window) {
    const MatX& x = t.val(verts_mm);
    if (x.cols() != 3) throw InvalidInput("project_to_window: expected n x 3");
    MatX out(x.rows(), 2);
    std::vector<double> inv_w(x.rows());
    for (long i = 0; i < x.rows(); ++i) {
        Eigen::Vector4d ph;
        ph << x.row(i).transpose(), 1.0;
        const Vec3 h = op.matrix * ph;
        if (std::abs(h.z()) < 1e-12)
            throw NumericalError("project_to_window: degenerate projection at vertex " +
                                 std::to_string(i));
        inv_w[i] = 1.0 / h.z();
        out(i, 0) = (h.x() * inv_w[i] - window.min_px.x()) / window.side_px;
        out(i, 1) = (h.y() * inv_w[i] - window.min_px.y()) / window.side_px;
    }
    const Eigen::RowVector3d m0 = op.matrix.block<1, 3>(0, 0);
    const Eigen::RowVector3d m1 = op.matrix.block<1, 3>(1, 0);
    const Eigen::RowVector3d m2 = op.matrix.block<1, 3>(2, 0);
    const double side = window.side_px;
    const Vec2 wmin = window.min_px;
    return t.custom(std::move(out), t.needs_grad(verts_mm),
                    [verts_mm, m0, m1, m2, side, wmin, inv_w = std::move(inv_w)](ad::Tape& tt,
                                                                                 int self) {
                        auto* gx = tt.grad_sink(verts_mm);
                        if (!gx) return;
                        const MatX& g = tt.grad(ad::Value{self});
                        const MatX& q = tt.val(ad::Value{self});
                        for (long i = 0; i < g.rows(); ++i) {
                            const double u = q(i, 0) * side + wmin.x();
                            const double v = q(i, 1) * side + wmin.y();
                            const double c = inv_w[i] / side;
                            gx->row(i) += c * (g(i, 0) * (m0 - u * m2) + g(i, 1) * (m1 - v * m2));
                        }
                    });
}

namespace {

// Shared per-pixel factor evaluation for the raster forward and backward.
struct TriFactor {
    int tri;
    double d2;
    double dj;      // sigmoid value
    bool inside;
    int min_edge;   // 0:(a,b) 1:(b,c) 2:(c,a)
    double min_t;   // clamped projection parameter on that edge
};

void pixel_factors(const kernels::RasterScene& s, double qx, double qy,
                   std::vector<TriFactor>& out) {
    out.clear();
    const int bx = std::clamp(int(qx * s.bin_dim), 0, s.bin_dim - 1);
    const int by = std::clamp(int(qy * s.bin_dim), 0, s.bin_dim - 1);
    for (int tri : s.bins[size_t(by) * s.bin_dim + bx]) {
        const auto& f = s.tris[tri];
        const double ax = s.vx[f[0]], ay = s.vy[f[0]];
        const double bx2 = s.vx[f[1]], by2 = s.vy[f[1]];
        const double cx = s.vx[f[2]], cy = s.vy[f[2]];
        double t0, t1, t2;
        const double e0 = kernels::point_segment_dist_sq(qx, qy, ax, ay, bx2, by2, &t0);
        const double e1 = kernels::point_segment_dist_sq(qx, qy, bx2, by2, cx, cy, &t1);
        const double e2 = kernels::point_segment_dist_sq(qx, qy, cx, cy, ax, ay, &t2);
        TriFactor tf;
        tf.tri = tri;
        tf.min_edge = 0;
        tf.d2 = e0;
        tf.min_t = t0;
        if (e1 < tf.d2) { tf.d2 = e1; tf.min_edge = 1; tf.min_t = t1; }
        if (e2 < tf.d2) { tf.d2 = e2; tf.min_edge = 2; tf.min_t = t2; }
        tf.inside = kernels::point_in_tri(qx, qy, ax, ay, bx2, by2, cx, cy);
        if (!tf.inside && tf.d2 > s.cutoff_d2) continue;
        const double x = (tf.inside ? tf.d2 : -tf.d2) / s.sigma;
        tf.dj = 1.0 / (1.0 + std::exp(-x));
        out.push_back(tf);
    }
}

} // namespace

ad::Value soft_raster(ad::Tape& t, ad::Value verts2d, std::vector<std::array<int, 3>> tris,
                      double sigma, int res, kernels::Exec ex) {
    const MatX& v = t.val(verts2d);
    if (v.cols() != 2) throw InvalidInput("soft_raster: expected n x 2 vertices");
    std::vector<double> vx(v.rows()), vy(v.rows());
    for (long i = 0; i < v.rows(); ++i) {
        vx[i] = v(i, 0);
        vy[i] = v(i, 1);
    }
    auto scene = std::make_shared<kernels::RasterScene>(
        kernels::build_raster_scene(std::move(vx), std::move(vy), std::move(tris), sigma, res));
    MatX out(long(res) * res, 1);
    kernels::raster_silhouette(*scene, out.data(), ex);

    return t.custom(std::move(out), t.needs_grad(verts2d), [verts2d, scene](ad::Tape& tt,
                                                                            int self) {
        auto* gv = tt.grad_sink(verts2d);
        if (!gv) return;
        const MatX& g = tt.grad(ad::Value{self});
        const MatX& sil = tt.val(ad::Value{self});
        const kernels::RasterScene& s = *scene;
        std::vector<TriFactor> factors;
        for (int iy = 0; iy < s.res; ++iy) {
            for (int ix = 0; ix < s.res; ++ix) {
                const long pix = long(iy) * s.res + ix;
                const double gp = g(pix, 0);
                if (gp == 0.0) continue;
                const double qx = (ix + 0.5) / s.res;
                const double qy = (iy + 0.5) / s.res;
                pixel_factors(s, qx, qy, factors);
                if (factors.empty()) continue;
                const double prod = 1.0 - sil(pix, 0);
                for (const TriFactor& tf : factors) {
                    // leave-one-out product = d(sil)/d(D_j)
                    double loo;
                    const double one_minus = 1.0 - tf.dj;
                    if (one_minus > 1e-12) {
                        loo = prod / one_minus;
                    } else {
                        loo = 1.0;
                        for (const TriFactor& o : factors)
                            if (o.tri != tf.tri) loo *= (1.0 - o.dj);
                    }
                    const double dD_dd2 =
                        (tf.inside ? 1.0 : -1.0) * tf.dj * (1.0 - tf.dj) / s.sigma;
                    const double coef = gp * loo * dD_dd2;
                    if (coef == 0.0) continue;
                    const auto& f = s.tris[tf.tri];
                    const int ia = f[tf.min_edge];
                    const int ib = f[(tf.min_edge + 1) % 3];
                    const double ax = s.vx[ia], ay = s.vy[ia];
                    const double bx = s.vx[ib], by = s.vy[ib];
                    const double cx = ax + tf.min_t * (bx - ax);
                    const double cy = ay + tf.min_t * (by - ay);
                    // d(d^2)/da = -2 (1-t) (q - c), d(d^2)/db = -2 t (q - c)
                    const double rx = qx - cx, ry = qy - cy;
                    (*gv)(ia, 0) += coef * (-2.0 * (1.0 - tf.min_t) * rx);
                    (*gv)(ia, 1) += coef * (-2.0 * (1.0 - tf.min_t) * ry);
                    (*gv)(ib, 0) += coef * (-2.0 * tf.min_t * rx);
                    (*gv)(ib, 1) += coef * (-2.0 * tf.min_t * ry);
                }
            }
        }
    });
}

ad::Value denormalize_op(ad::Tape& t, ad::Value verts_norm, const MeshNormalization& n) {
    // p = R^T q / scale + translation, as rows: p_row = q_row * R / scale + t^T
    const MatX m = n.rotation / n.scale;
    const ad::Value rotated = t.matmul(verts_norm, t.constant(m));
    return t.add_broadcast_row(rotated, n.translation.transpose());
}

} // namespace graph

ad::SpMat laplacian_operator(int n, const std::vector<std::array<int, 2>>& edges) {
    const ad::SpMat avg = ad::neighbor_average(n, edges);
    ad::SpMat id(n, n);
    id.setIdentity();
    ad::SpMat l = id - avg;
    l.makeCompressed();
    return l;
}

LossContext make_loss_context(const TubeMesh& initial_normalized, const TubeMesh& gt_normalized,
                              const MeshNormalization& n, const ProjectionOperator& op_a,
                              const ProjectionOperator& op_b, const BinaryMask& mask_a,
                              const BinaryMask& mask_b, const LossConfig& cfg) {
    cfg.validate();
    if (initial_normalized.vertices.rows() != gt_normalized.vertices.rows())
        throw InvalidInput("make_loss_context: template correspondence requires equal counts");
    LossContext ctx;
    ctx.edges = initial_normalized.edges;
    ctx.tris = initial_normalized.tri_faces;
    ctx.n_verts = int(initial_normalized.vertices.rows());
    ctx.gt_vertices = gt_normalized.vertices;
    // gt normals/laplacian evaluated on the shared template topology
    ctx.gt_normals = vertex_normals(gt_normalized.vertices, ctx.tris);
    ctx.lap_op = laplacian_operator(ctx.n_verts, ctx.edges);
    ctx.gt_laplacian = ctx.lap_op * gt_normalized.vertices;
    ctx.initial_edge_lengths.resize(long(ctx.edges.size()));
    for (size_t e = 0; e < ctx.edges.size(); ++e)
        ctx.initial_edge_lengths[long(e)] = (initial_normalized.vertices.row(ctx.edges[e][0]) -
                                             initial_normalized.vertices.row(ctx.edges[e][1]))
                                                .norm();
    ctx.denorm = n;
    ctx.op_a = op_a;
    ctx.op_b = op_b;
    ctx.win_a = soi_render_window(mask_a);
    ctx.win_b = soi_render_window(mask_b);
    ctx.gt_pix_a = sample_mask_on_window(mask_a, ctx.win_a, cfg.raster_resolution);
    ctx.gt_pix_b = sample_mask_on_window(mask_b, ctx.win_b, cfg.raster_resolution);
    return ctx;
}

ad::Value total_loss(ad::Tape& t, ad::Value pred_verts_norm, const LossContext& ctx,
                     const LossConfig& cfg, LossBreakdown* breakdown, kernels::Exec ex) {
    const ad::Value mse = graph::mse_loss(t, pred_verts_norm, ctx.gt_vertices);
    const ad::Value norm = graph::normal_loss(t, pred_verts_norm, ctx.tris, ctx.gt_normals);
    const ad::Value edge = graph::edge_loss(t, pred_verts_norm, ctx.edges,
                                            cfg.edge_relative ? &ctx.initial_edge_lengths
                                                              : nullptr);
    const ad::Value lap =
        graph::laplacian_loss(t, pred_verts_norm, ctx.lap_op, ctx.gt_laplacian);

    const ad::Value verts_mm = graph::denormalize_op(t, pred_verts_norm, ctx.denorm);
    const ad::Value sil_a = graph::soft_raster(
        t, graph::project_to_window(t, verts_mm, ctx.op_a, ctx.win_a), ctx.tris,
        cfg.raster_sigma, cfg.raster_resolution, ex);
    const ad::Value sil_b = graph::soft_raster(
        t, graph::project_to_window(t, verts_mm, ctx.op_b, ctx.win_b), ctx.tris,
        cfg.raster_sigma, cfg.raster_resolution, ex);
    const ad::Value seg = t.scale(
        t.add(graph::bce_dice(t, sil_a, ctx.gt_pix_a), graph::bce_dice(t, sil_b, ctx.gt_pix_b)),
        0.5);

    ad::Value total = mse;
    total = t.add(total, t.scale(norm, cfg.w_norm));
    total = t.add(total, t.scale(edge, cfg.w_edge));
    total = t.add(total, t.scale(lap, cfg.w_lap));
    total = t.add(total, t.scale(seg, cfg.w_seg));

    if (breakdown) {
        breakdown->mse = t.scalar(mse);
        breakdown->norm = t.scalar(norm);
        breakdown->edge = t.scalar(edge);
        breakdown->lap = t.scalar(lap);
        breakdown->seg = t.scalar(seg);
        breakdown->total = t.scalar(total);
    }
    return total;
}

} // namespace angio
