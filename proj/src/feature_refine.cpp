#include "angio/feature_refine.hpp"

#include <cmath>
#include <memory>

namespace angio {

namespace {

MatX glorot_matrix(long rows, long cols, double fan_in, double fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    MatX m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
    return m;
}

} // namespace

EncoderWeights EncoderWeights::glorot(const EncoderConfig& cfg, Rng& rng) {
    EncoderWeights w;
    w.config = cfg;
    int in_ch = 1;
    for (int level = 0; level < 4; ++level) {
        const int mid = cfg.hidden_channels;
        const int out = cfg.level_channels[level];
        w.levels[level][0].w = glorot_matrix(mid, long(in_ch) * 9, in_ch * 9.0, mid * 9.0, rng);
        w.levels[level][0].b = MatX::Zero(mid, 1);
        w.levels[level][1].w = glorot_matrix(out, long(mid) * 9, mid * 9.0, out * 9.0, rng);
        w.levels[level][1].b = MatX::Zero(out, 1);
        in_ch = out; // next level consumes this level's output
    }
    return w;
}

GcnWeights GcnWeights::glorot(int input_dim, const GcnConfig& cfg, Rng& rng) {
    GcnWeights w;
    w.config = cfg;
    w.input_dim = input_dim;
    w.w_in = glorot_matrix(input_dim, cfg.hidden_dim, input_dim, cfg.hidden_dim, rng);
    w.w_hidden.resize(cfg.num_layers);
    for (auto& m : w.w_hidden)
        m = glorot_matrix(cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim, rng);
    w.w_out = MatX::Zero(cfg.hidden_dim, 3); // refined mesh starts at the initial mesh
    return w;
}

void for_each_param(EncoderWeights& w, const std::function<void(const std::string&, MatX&)>& fn) {
    for (int level = 0; level < 4; ++level)
        for (int conv = 0; conv < 2; ++conv) {
            const std::string base =
                "enc.l" + std::to_string(level) + ".c" + std::to_string(conv);
            fn(base + ".w", w.levels[level][conv].w);
            fn(base + ".b", w.levels[level][conv].b);
        }
}

void for_each_param(GcnWeights& w, const std::function<void(const std::string&, MatX&)>& fn) {
    fn("gcn.w_in", w.w_in);
    for (size_t l = 0; l < w.w_hidden.size(); ++l)
        fn("gcn.w" + std::to_string(l), w.w_hidden[l]);
    fn("gcn.w_out", w.w_out);
}

GraphTopology make_graph_topology(const TubeMesh& mesh) {
    GraphTopology g;
    g.edges = mesh.edges;
    g.norm_adjacency = ad::normalized_adjacency(mesh.vertex_count(), mesh.edges);
    return g;
}

EncoderBinding bind(ad::Tape& t, EncoderWeights& w, bool trainable) {
    EncoderBinding b;
    for (int level = 0; level < 4; ++level)
        for (int conv = 0; conv < 2; ++conv)
            b.layers[level][conv] = {t.leaf(w.levels[level][conv].w, trainable),
                                     t.leaf(w.levels[level][conv].b, trainable)};
    return b;
}

GcnBinding bind(ad::Tape& t, GcnWeights& w, bool trainable) {
    GcnBinding b;
    b.w_in = t.leaf(w.w_in, trainable);
    for (auto& m : w.w_hidden) b.w_hidden.push_back(t.leaf(m, trainable));
    b.w_out = t.leaf(w.w_out, trainable);
    return b;
}

namespace {

// col: (in_ch*9) x (h*w), 3x3 neighborhood with zero padding
void im2col(const MatX& x, int in_ch, int h, int w, MatX& col) {
    col.resize(long(in_ch) * 9, long(h) * w);
    for (int c = 0; c < in_ch; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const long row = long(c) * 9 + ky * 3 + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    double* dst = &col(row, long(y) * w);
                    if (sy < 0 || sy >= h) {
                        for (int xx = 0; xx < w; ++xx) dst[(long)xx * col.rows()] = 0.0;
                        continue;
                    }
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - 1;
                        dst[(long)xx * col.rows()] =
                            (sx < 0 || sx >= w) ? 0.0 : x(c, long(sy) * w + sx);
                    }
                }
            }
        }
    }
}

// accumulate (in_ch*9) x (h*w) column gradients back into the input map
void col2im_accum(const MatX& dcol, int in_ch, int h, int w, MatX& dx) {
    for (int c = 0; c < in_ch; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const long row = long(c) * 9 + ky * 3 + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        dx(c, long(sy) * w + sx) += dcol(row, long(y) * w + xx);
                    }
                }
            }
}

} // namespace

ad::Value conv3x3(ad::Tape& t, ad::Value x, int h, int w, ad::Value weight, ad::Value bias,
                  int in_ch, int out_ch) {
    const MatX& xv = t.val(x);
    if (xv.rows() != in_ch || xv.cols() != long(h) * w)
        throw InvalidInput("conv3x3: input shape mismatch");
    if (t.val(weight).rows() != out_ch || t.val(weight).cols() != long(in_ch) * 9)
        throw InvalidInput("conv3x3: weight shape mismatch");

    MatX col;
    im2col(xv, in_ch, h, w, col);
    MatX out = t.val(weight) * col;
    out.colwise() += VecX(t.val(bias).col(0));

    const bool needs = t.needs_grad(x) || t.needs_grad(weight) || t.needs_grad(bias);
    return t.custom(std::move(out), needs,
                    [x, weight, bias, h, w, in_ch](ad::Tape& tt, int self) {
                        const MatX& g = tt.grad(ad::Value{self});
                        if (auto* gb = tt.grad_sink(bias)) gb->col(0) += g.rowwise().sum();
                        MatX col;
                        if (tt.needs_grad(weight) || tt.needs_grad(x))
                            im2col(tt.val(x), in_ch, h, w, col);
                        if (auto* gw = tt.grad_sink(weight)) gw->noalias() += g * col.transpose();
                        if (auto* gx = tt.grad_sink(x)) {
                            const MatX dcol = tt.val(weight).transpose() * g;
                            col2im_accum(dcol, in_ch, h, w, *gx);
                        }
                    });
}

ad::Value avgpool2(ad::Tape& t, ad::Value x, int ch, int h, int w) {
    const int h2 = h / 2, w2 = w / 2;
    if (h2 < 1 || w2 < 1) throw InvalidInput("avgpool2: map too small");
    const MatX& xv = t.val(x);
    MatX out(ch, long(h2) * w2);
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < h2; ++y)
            for (int xx = 0; xx < w2; ++xx)
                out(c, long(y) * w2 + xx) =
                    0.25 * (xv(c, long(2 * y) * w + 2 * xx) + xv(c, long(2 * y) * w + 2 * xx + 1) +
                            xv(c, long(2 * y + 1) * w + 2 * xx) +
                            xv(c, long(2 * y + 1) * w + 2 * xx + 1));
    return t.custom(std::move(out), t.needs_grad(x), [x, ch, h2, w2, w](ad::Tape& tt, int self) {
        if (auto* gx = tt.grad_sink(x)) {
            const MatX& g = tt.grad(ad::Value{self});
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h2; ++y)
                    for (int xx = 0; xx < w2; ++xx) {
                        const double gv = 0.25 * g(c, long(y) * w2 + xx);
                        (*gx)(c, long(2 * y) * w + 2 * xx) += gv;
                        (*gx)(c, long(2 * y) * w + 2 * xx + 1) += gv;
                        (*gx)(c, long(2 * y + 1) * w + 2 * xx) += gv;
                        (*gx)(c, long(2 * y + 1) * w + 2 * xx + 1) += gv;
                    }
        }
    });
}

FeaturePyramid extract_features(ad::Tape& t, const MatX& image, int h, int w,
                                const EncoderBinding& enc, const EncoderConfig& cfg) {
    if (h < 16 || w < 16) throw InvalidInput("extract_features: image smaller than 16x16");
    if (image.rows() != 1 || image.cols() != long(h) * w)
        throw InvalidInput("extract_features: image shape mismatch");

    FeaturePyramid pyr;
    ad::Value cur = t.constant(image);
    int cur_ch = 1, cur_h = h, cur_w = w;
    for (int level = 0; level < 4; ++level) {
        if (level > 0) {
            cur = avgpool2(t, cur, cur_ch, cur_h, cur_w);
            cur_h /= 2;
            cur_w /= 2;
        }
        const int mid = cfg.hidden_channels;
        const int out = cfg.level_channels[level];
        cur = t.relu(conv3x3(t, cur, cur_h, cur_w, enc.layers[level][0].first,
                             enc.layers[level][0].second, cur_ch, mid));
        cur = t.relu(conv3x3(t, cur, cur_h, cur_w, enc.layers[level][1].first,
                             enc.layers[level][1].second, mid, out));
        cur_ch = out;
        pyr.levels[level] = PyramidLevel{cur, out, cur_w, cur_h};
    }
    return pyr;
}

MatX image_from_mask(const BinaryMask& m) {
    MatX img(1, long(m.width) * m.height);
    for (size_t i = 0; i < m.data.size(); ++i) img(0, long(i)) = double(m.data[i]);
    return img;
}

MatX project_points_px(const MatX& verts_mm, const ProjectionOperator& op) {
    MatX out(verts_mm.rows(), 2);
    for (long i = 0; i < verts_mm.rows(); ++i) {
        try {
            out.row(i) = project(op, verts_mm.row(i).transpose()).transpose();
        } catch (const std::exception& e) {
            throw NumericalError("projection degenerate at vertex " + std::to_string(i) + ": " +
                                 e.what());
        }
    }
    return out;
}

namespace {

struct BilinearTap {
    long idx[4];
    double wgt[4];
    double du[4], dv[4]; // d(wgt)/du, d(wgt)/dv
    bool inside_u, inside_v;
};

BilinearTap bilinear_tap(double u, double v, int w, int h) {
    BilinearTap tap;
    tap.inside_u = u > 0.0 && u < w - 1.0;
    tap.inside_v = v > 0.0 && v < h - 1.0;
    const double uc = std::clamp(u, 0.0, double(w - 1));
    const double vc = std::clamp(v, 0.0, double(h - 1));
    const int x0 = std::min(int(uc), w - 2);
    const int y0 = std::min(int(vc), h - 2);
    const double fx = uc - x0, fy = vc - y0;
    tap.idx[0] = long(y0) * w + x0;
    tap.idx[1] = long(y0) * w + x0 + 1;
    tap.idx[2] = long(y0 + 1) * w + x0;
    tap.idx[3] = long(y0 + 1) * w + x0 + 1;
    tap.wgt[0] = (1 - fx) * (1 - fy);
    tap.wgt[1] = fx * (1 - fy);
    tap.wgt[2] = (1 - fx) * fy;
    tap.wgt[3] = fx * fy;
    const double su = tap.inside_u ? 1.0 : 0.0;
    const double sv = tap.inside_v ? 1.0 : 0.0;
    tap.du[0] = -(1 - fy) * su;
    tap.du[1] = (1 - fy) * su;
    tap.du[2] = -fy * su;
    tap.du[3] = fy * su;
    tap.dv[0] = -(1 - fx) * sv;
    tap.dv[1] = -fx * sv;
    tap.dv[2] = (1 - fx) * sv;
    tap.dv[3] = fx * sv;
    return tap;
}

} // namespace

ad::Value bilinear_sample(ad::Tape& t, ad::Value map, int ch, int h, int w, ad::Value uv) {
    const MatX& m = t.val(map);
    const MatX& q = t.val(uv);
    if (m.rows() != ch || m.cols() != long(h) * w) throw InvalidInput("bilinear_sample: map shape");
    if (q.cols() != 2) throw InvalidInput("bilinear_sample: uv must be n x 2");
    MatX out(q.rows(), ch);
    for (long i = 0; i < q.rows(); ++i) {
        const BilinearTap tap = bilinear_tap(q(i, 0), q(i, 1), w, h);
        for (int c = 0; c < ch; ++c) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += tap.wgt[k] * m(c, tap.idx[k]);
            out(i, c) = acc;
        }
    }
    const bool needs = t.needs_grad(map) || t.needs_grad(uv);
    return t.custom(std::move(out), needs, [map, uv, ch, h, w](ad::Tape& tt, int self) {
        const MatX& g = tt.grad(ad::Value{self});
        const MatX& m = tt.val(map);
        const MatX& q = tt.val(uv);
        MatX* gm = tt.grad_sink(map);
        MatX* gq = tt.grad_sink(uv);
        for (long i = 0; i < q.rows(); ++i) {
            const BilinearTap tap = bilinear_tap(q(i, 0), q(i, 1), w, h);
            for (int c = 0; c < ch; ++c) {
                const double gv = g(i, c);
                if (gv == 0) continue;
                if (gm)
                    for (int k = 0; k < 4; ++k) (*gm)(c, tap.idx[k]) += gv * tap.wgt[k];
                if (gq) {
                    double du = 0, dv = 0;
                    for (int k = 0; k < 4; ++k) {
                        du += tap.du[k] * m(c, tap.idx[k]);
                        dv += tap.dv[k] * m(c, tap.idx[k]);
                    }
                    (*gq)(i, 0) += gv * du;
                    (*gq)(i, 1) += gv * dv;
                }
            }
        }
    });
}

ad::Value assemble_vertex_features(ad::Tape& t, const FeaturePyramid& pyr_a,
                                   const FeaturePyramid& pyr_b, const MatX& px_a,
                                   const MatX& px_b, const MatX& verts_norm) {
    const long n = verts_norm.rows();
    if (px_a.rows() != n || px_b.rows() != n)
        throw InvalidInput("assemble_vertex_features: projection count mismatch");
    int total = 3;
    for (int k = 0; k < 4; ++k) total += pyr_a.levels[k].channels + pyr_b.levels[k].channels;

    const std::array<const FeaturePyramid*, 2> pyrs = {&pyr_a, &pyr_b};
    const std::array<const MatX*, 2> px = {&px_a, &px_b};

    MatX out(n, total);
    std::vector<int> col_base(8);
    {
        int col = 0;
        for (int v = 0; v < 2; ++v)
            for (int k = 0; k < 4; ++k) {
                col_base[v * 4 + k] = col;
                const auto& lv = pyrs[v]->levels[k];
                const double inv = 1.0 / double(1 << k);
                for (long i = 0; i < n; ++i) {
                    const BilinearTap tap = bilinear_tap((*px[v])(i, 0) * inv,
                                                         (*px[v])(i, 1) * inv, lv.width,
                                                         lv.height);
                    const MatX& m = t.val(lv.map);
                    for (int c = 0; c < lv.channels; ++c) {
                        double acc = 0;
                        for (int kk = 0; kk < 4; ++kk) acc += tap.wgt[kk] * m(c, tap.idx[kk]);
                        out(i, col + c) = acc;
                    }
                }
                col += lv.channels;
            }
        out.block(0, col, n, 3) = verts_norm;
    }

    bool needs = false;
    for (int v = 0; v < 2; ++v)
        for (int k = 0; k < 4; ++k) needs = needs || t.needs_grad(pyrs[v]->levels[k].map);

    struct LevelRef {
        ad::Value map;
        int ch, w, h, col;
        MatX px_scaled;
    };
    auto refs = std::make_shared<std::vector<LevelRef>>();
    for (int v = 0; v < 2; ++v)
        for (int k = 0; k < 4; ++k) {
            const auto& lv = pyrs[v]->levels[k];
            refs->push_back(LevelRef{lv.map, lv.channels, lv.width, lv.height, col_base[v * 4 + k],
                                     *px[v] / double(1 << k)});
        }

    return t.custom(std::move(out), needs, [refs](ad::Tape& tt, int self) {
        const MatX& g = tt.grad(ad::Value{self});
        for (const auto& r : *refs) {
            MatX* gm = tt.grad_sink(r.map);
            if (!gm) continue;
            for (long i = 0; i < r.px_scaled.rows(); ++i) {
                const BilinearTap tap =
                    bilinear_tap(r.px_scaled(i, 0), r.px_scaled(i, 1), r.w, r.h);
                for (int c = 0; c < r.ch; ++c) {
                    const double gv = g(i, r.col + c);
                    if (gv == 0) continue;
                    for (int k = 0; k < 4; ++k) (*gm)(c, tap.idx[k]) += gv * tap.wgt[k];
                }
            }
        }
    });
}

ad::Value gcn_layer(ad::Tape& t, ad::Value h, const ad::SpMat& adj, ad::Value w, bool activate) {
    if (t.val(h).cols() != t.val(w).rows())
        throw InvalidInput("gcn_layer: feature width does not match weight input dim");
    const ad::Value agg = t.spmm(adj, h);
    const ad::Value lin = t.matmul(agg, w);
    return activate ? t.relu(lin) : lin;
}

ad::Value refine_vertices(ad::Tape& t, ad::Value feats, const GraphTopology& topo,
                          const GcnBinding& gcn, const MatX& initial_positions,
                          const GcnConfig& cfg) {
    ad::Value h = gcn_layer(t, feats, topo.norm_adjacency, gcn.w_in, true);
    t.check_finite(h, "gcn input projection");
    for (size_t l = 0; l < gcn.w_hidden.size(); ++l) {
        h = t.add(gcn_layer(t, h, topo.norm_adjacency, gcn.w_hidden[l], true), h);
        t.check_finite(h, "gcn layer " + std::to_string(l));
    }
    const ad::Value offsets = t.matmul(h, gcn.w_out);
    t.check_finite(offsets, "gcn output head");
    if (cfg.absolute_regression) return offsets;
    return t.add(offsets, t.constant(initial_positions));
}

} // namespace angio
