#include "angio/checkpoint.hpp"
#include "angio/feature_refine.hpp"
#include "angio/mesh_init.hpp"
#include "angio/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace angio;

namespace {

TubeMesh toy_tube(int rings = 5, int slots = 8) {
    MatX pts(rings, 3);
    for (int i = 0; i < rings; ++i)
        pts.row(i) = Vec3(0, 0, double(i) / (rings - 1)).transpose();
    return build_tube_generic(pts, VecX::Constant(rings, 0.2), slots);
}

} // namespace

TEST_CASE("zero image with zero biases gives a zero pyramid") {
    Rng rng(3);
    EncoderConfig cfg;
    cfg.level_channels = {4, 4, 4, 4};
    cfg.hidden_channels = 3;
    EncoderWeights w = EncoderWeights::glorot(cfg, rng); // biases start at zero
    ad::Tape t;
    const EncoderBinding eb = bind(t, w, false);
    const FeaturePyramid pyr = extract_features(t, MatX::Zero(1, 32 * 32), 32, 32, eb, cfg);
    for (const auto& lv : pyr.levels) CHECK(t.val(lv.map).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pyr.levels[0].width == 32);
    CHECK(pyr.levels[3].width == 4);
}

TEST_CASE("identity kernels pass the image through level 0") {
    EncoderConfig cfg;
    cfg.level_channels = {1, 1, 1, 1};
    cfg.hidden_channels = 1;
    Rng rng(5);
    EncoderWeights w = EncoderWeights::glorot(cfg, rng);
    for (int conv = 0; conv < 2; ++conv) {
        w.levels[0][conv].w.setZero();
        w.levels[0][conv].w(0, 4) = 1.0; // center tap of the 3x3 kernel
        w.levels[0][conv].b.setZero();
    }
    Rng img_rng(7);
    MatX img(1, 24 * 24);
    for (long i = 0; i < img.cols(); ++i) img(0, i) = img_rng.uniform(0, 1);
    ad::Tape t;
    const EncoderBinding eb = bind(t, w, false);
    const FeaturePyramid pyr = extract_features(t, img, 24, 24, eb, cfg);
    CHECK((t.val(pyr.levels[0].map) - img).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("images below 16x16 are rejected") {
    Rng rng(9);
    EncoderConfig cfg;
    cfg.level_channels = {2, 2, 2, 2};
    cfg.hidden_channels = 2;
    EncoderWeights w = EncoderWeights::glorot(cfg, rng);
    ad::Tape t;
    const EncoderBinding eb = bind(t, w, false);
    CHECK_THROWS_AS(extract_features(t, MatX::Zero(1, 8 * 8), 8, 8, eb, cfg), InvalidInput);
}

TEST_CASE("conv weight gradients match finite differences") {
    Rng rng(11);
    const int h = 10, w = 12;
    MatX img(2, h * w);
    for (long i = 0; i < img.size(); ++i) img(i / img.cols(), i % img.cols()) = rng.uniform(-1, 1);
    const MatX w0 = oracles::random_matrix(3, 2 * 9, rng);
    const MatX b0 = oracles::random_matrix(3, 1, rng);
    const MatX probe = oracles::random_matrix(3, h * w, rng);

    auto readout = [&](ad::Tape& t, ad::Value weight, ad::Value bias, ad::Value x) {
        return t.sum(t.mul(t.relu(conv3x3(t, x, h, w, weight, bias, 2, 3)), t.constant(probe)));
    };

    // d/dW
    {
        ad::Tape t;
        const ad::Value wv = t.leaf(w0, true);
        const ad::Value bv = t.constant(b0);
        const ad::Value xv = t.constant(img);
        const ad::Value y = readout(t, wv, bv, xv);
        t.backward(y);
        const MatX numeric = oracles::finite_difference(
            [&](const MatX& wm) {
                ad::Tape tt;
                return tt.scalar(
                    readout(tt, tt.leaf(wm, false), tt.constant(b0), tt.constant(img)));
            },
            w0);
        CHECK(oracles::max_rel_err(t.grad(wv), numeric) < 1e-4);
    }
    // d/dx (input map)
    {
        ad::Tape t;
        const ad::Value xv = t.leaf(img, true);
        const ad::Value y = readout(t, t.constant(w0), t.constant(b0), xv);
        t.backward(y);
        const MatX numeric = oracles::finite_difference(
            [&](const MatX& xm) {
                ad::Tape tt;
                return tt.scalar(
                    readout(tt, tt.constant(w0), tt.constant(b0), tt.leaf(xm, false)));
            },
            img);
        CHECK(oracles::max_rel_err(t.grad(xv), numeric) < 1e-4);
    }
}

TEST_CASE("avgpool halves and back-propagates evenly") {
    Rng rng(13);
    MatX img = oracles::random_matrix(1, 6 * 6, rng);
    ad::Tape t;
    const ad::Value x = t.leaf(img, true);
    const ad::Value p = avgpool2(t, x, 1, 6, 6);
    CHECK(t.val(p).cols() == 9);
    CHECK(t.val(p)(0, 0) ==
          doctest::Approx(0.25 * (img(0, 0) + img(0, 1) + img(0, 6) + img(0, 7))));
    const ad::Value y = t.sum(p);
    t.backward(y);
    CHECK(t.grad(x).minCoeff() == doctest::Approx(0.25));
}

TEST_CASE("bilinear_sample: texels, midpoints, derivative in u") {
    MatX map(1, 4 * 3); // 4 wide, 3 tall
    for (int i = 0; i < 12; ++i) map(0, i) = i * i * 0.37;
    Rng rng(17);

    ad::Tape t;
    MatX uv(3, 2);
    uv << 2.0, 1.0, 1.5, 1.0, 0.25, 1.75;
    const ad::Value uvv = t.constant(uv);
    const ad::Value mv = t.constant(map);
    const ad::Value s = bilinear_sample(t, mv, 1, 3, 4, uvv);
    CHECK(t.val(s)(0, 0) == doctest::Approx(map(0, 1 * 4 + 2))); // integer coords
    CHECK(t.val(s)(1, 0) == doctest::Approx(0.5 * (map(0, 5) + map(0, 6)))); // midpoint

    // du gradient matches finite differences at random interior points
    for (int trial = 0; trial < 100; ++trial) {
        MatX q(1, 2);
        q << rng.uniform(0.51, 2.49), rng.uniform(0.51, 1.49);
        ad::Tape tt;
        const ad::Value qv = tt.leaf(q, true);
        const ad::Value out = tt.sum(bilinear_sample(tt, tt.constant(map), 1, 3, 4, qv));
        tt.backward(out);
        const MatX numeric = oracles::finite_difference(
            [&](const MatX& qm) {
                ad::Tape t3;
                return t3.scalar(
                    t3.sum(bilinear_sample(t3, t3.constant(map), 1, 3, 4, t3.leaf(qm, false))));
            },
            q, 1e-6);
        CHECK(oracles::max_rel_err(tt.grad(qv), numeric) < 1e-6);
    }
}

TEST_CASE("assemble_vertex_features: constants, shape, and gradients") {
    const TubeMesh tube = toy_tube();
    const long n = tube.vertices.rows();
    Rng rng(19);

    // constant-valued pyramids
    auto const_pyramid = [&](ad::Tape& t, double value, std::array<int, 4> chans,
                             int w0, int h0) {
        FeaturePyramid p;
        int w = w0, h = h0;
        for (int k = 0; k < 4; ++k) {
            p.levels[k] = PyramidLevel{
                t.constant(MatX::Constant(chans[k], long(w) * h, value)), chans[k], w, h};
            w /= 2;
            h /= 2;
        }
        return p;
    };

    ad::Tape t;
    const FeaturePyramid pa = const_pyramid(t, 3.25, {2, 3, 4, 5}, 32, 32);
    const FeaturePyramid pb = const_pyramid(t, 3.25, {2, 3, 4, 5}, 32, 32);
    MatX px(n, 2);
    for (long i = 0; i < n; ++i) px.row(i) = Eigen::RowVector2d(rng.uniform(2, 29), rng.uniform(2, 29));
    const ad::Value feats = assemble_vertex_features(t, pa, pb, px, px, tube.vertices);
    const int total = 2 * (2 + 3 + 4 + 5) + 3;
    CHECK(t.val(feats).rows() == n);
    CHECK(t.val(feats).cols() == total);
    for (long i = 0; i < n; ++i) {
        for (int c = 0; c < total - 3; ++c) CHECK(t.val(feats)(i, c) == doctest::Approx(3.25));
        CHECK(t.val(feats)(i, total - 3) == tube.vertices(i, 0));
        CHECK(t.val(feats)(i, total - 1) == tube.vertices(i, 2));
    }

    // default configuration produces 483 columns
    CHECK(2 * EncoderConfig{}.total_channels() + 3 == 483);

    // gradient into the pyramid maps matches finite differences
    const MatX map0 = oracles::random_matrix(2, 16 * 16, rng);
    auto build = [&](ad::Tape& tt, ad::Value m0) {
        FeaturePyramid p;
        int w = 16, h = 16;
        for (int k = 0; k < 4; ++k) {
            p.levels[k] = PyramidLevel{k == 0 ? m0 : tt.constant(MatX::Ones(2, long(w) * h)), 2,
                                       w, h};
            w /= 2;
            h /= 2;
        }
        MatX pxs(n, 2);
        Rng r2(23);
        for (long i = 0; i < n; ++i)
            pxs.row(i) = Eigen::RowVector2d(r2.uniform(1, 14), r2.uniform(1, 14));
        const ad::Value f = assemble_vertex_features(tt, p, p, pxs, pxs, tube.vertices);
        return tt.mean(tt.mul(f, f));
    };
    ad::Tape tg;
    const ad::Value m0 = tg.leaf(map0, true);
    tg.backward(build(tg, m0));
    const MatX numeric = oracles::finite_difference(
        [&](const MatX& m) {
            ad::Tape tt;
            return tt.scalar(build(tt, tt.leaf(m, false)));
        },
        map0);
    CHECK(oracles::max_rel_err(tg.grad(m0), numeric) < 1e-4);
}

TEST_CASE("a one-pixel detector shift moves level-0 sampling by one pixel") {
    const TubeMesh tube = build_tube_generic(
        (MatX(2, 3) << 0, 0, -10, 0, 0, 10).finished(), VecX::Constant(2, 2.0), 8);
    ViewGeometry g;
    g.sid_mm = 1000;
    g.sod_mm = 750;
    g.pixel_spacing_mm = 0.4;
    g.image_width = g.image_height = 128;
    g.principal_point_px = Vec2(63.5, 63.5);
    ViewGeometry g_shift = g;
    g_shift.detector_shift_px = Vec2(1, 0);

    const MatX px = project_points_px(tube.vertices, projection_from_geometry(g));
    const MatX px_shift = project_points_px(tube.vertices, projection_from_geometry(g_shift));
    CHECK(((px_shift - px).col(0).array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK((px_shift - px).col(1).cwiseAbs().maxCoeff() < 1e-9);

    // sampling a horizontal-gradient image at the shifted positions adds the
    // gradient slope per channel
    MatX grad_img(1, 128 * 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) grad_img(0, y * 128 + x) = 0.01 * x;
    ad::Tape t;
    const ad::Value m = t.constant(grad_img);
    const ad::Value s0 = bilinear_sample(t, m, 1, 128, 128, t.constant(px));
    const ad::Value s1 = bilinear_sample(t, m, 1, 128, 128, t.constant(px_shift));
    CHECK(((t.val(s1) - t.val(s0)).array() - 0.01).abs().maxCoeff() < 1e-9);
}

TEST_CASE("normalized adjacency: hand cases and the tube degree structure") {
    // single node, no edges
    const ad::SpMat s1 = ad::normalized_adjacency(1, {});
    CHECK(MatX(s1)(0, 0) == doctest::Approx(1.0));

    // two nodes, one edge: degrees 2,2 -> all entries 1/2
    const ad::SpMat s2 = ad::normalized_adjacency(2, {{0, 1}});
    const MatX d2 = MatX(s2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(d2(i, j) == doctest::Approx(0.5));

    // tube: every vertex has degree 4 (+ self-loop)
    const TubeMesh tube = toy_tube(6, 10);
    std::vector<int> degree(tube.vertex_count(), 0);
    for (const auto& e : tube.edges) {
        ++degree[e[0]];
        ++degree[e[1]];
    }
    int interior = 0;
    for (int i = 0; i < tube.vertex_count(); ++i) {
        const int ring = tube.ring_of(i);
        if (ring > 0 && ring < tube.rings - 1) {
            CHECK(degree[i] == 4);
            ++interior;
        } else {
            CHECK(degree[i] == 3); // boundary rings lack one longitudinal edge
        }
    }
    CHECK(interior == (tube.rings - 2) * tube.slots);
    const GraphTopology topo = make_graph_topology(tube);
    for (int i = 0; i < tube.vertex_count(); ++i)
        CHECK(topo.norm_adjacency.coeff(i, i) ==
              doctest::Approx(1.0 / double(degree[i] + 1)));

    // symmetry and spectral bound via dense eigensolve on a small graph
    const MatX dense = MatX(ad::normalized_adjacency(int(tube.vertex_count()), tube.edges));
    CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<MatX> eig(dense);
    CHECK(eig.eigenvalues().minCoeff() > -1.0 - 1e-9);
    CHECK(eig.eigenvalues().maxCoeff() < 1.0 + 1e-9);
}

TEST_CASE("gcn_layer: algebraic cases and dense oracle") {
    // single node with self-loop, identity weight
    {
        ad::Tape t;
        MatX h(1, 2);
        h << -1.5, 2.0;
        const ad::SpMat s = ad::normalized_adjacency(1, {});
        const ad::Value out = gcn_layer(t, t.constant(h), s, t.constant(MatX::Identity(2, 2)),
                                        true);
        CHECK(t.val(out)(0, 0) == 0.0);
        CHECK(t.val(out)(0, 1) == doctest::Approx(2.0));
    }
    // two-node graph, H = I, W = I
    {
        ad::Tape t;
        const ad::SpMat s = ad::normalized_adjacency(2, {{0, 1}});
        const ad::Value out =
            gcn_layer(t, t.constant(MatX::Identity(2, 2)), s, t.constant(MatX::Identity(2, 2)),
                      true);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(t.val(out)(i, j) == doctest::Approx(0.5));
    }
    // sparse equals dense on random graphs
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + int(rng.uniform_index(199));
        std::vector<std::array<int, 2>> edges;
        const int m = 1 + int(rng.uniform_index(3 * n));
        for (int e = 0; e < m; ++e) {
            const int a = int(rng.uniform_index(n));
            const int b = int(rng.uniform_index(n));
            if (a != b) edges.push_back({a, b});
        }
        // dedupe so degrees match the dense adjacency construction
        std::sort(edges.begin(), edges.end(), [](auto x, auto y) {
            return std::minmax(x[0], x[1]) < std::minmax(y[0], y[1]);
        });
        edges.erase(std::unique(edges.begin(), edges.end(),
                                [](auto x, auto y) {
                                    return std::minmax(x[0], x[1]) == std::minmax(y[0], y[1]);
                                }),
                    edges.end());
        const MatX h = oracles::random_matrix(n, 5, rng);
        const MatX w = oracles::random_matrix(5, 4, rng);
        ad::Tape t;
        const ad::Value out =
            gcn_layer(t, t.constant(h), ad::normalized_adjacency(n, edges), t.constant(w), true);
        const MatX want = oracles::dense_gcn(edges, h, w, true);
        CHECK((t.val(out) - want).cwiseAbs().maxCoeff() < 1e-12);
    }
    // shape mismatch
    ad::Tape t;
    CHECK_THROWS_AS(gcn_layer(t, t.constant(MatX::Ones(2, 3)),
                              ad::normalized_adjacency(2, {{0, 1}}),
                              t.constant(MatX::Ones(4, 4)), true),
                    InvalidInput);
}

TEST_CASE("refine_vertices: zero head is the identity; weights receive gradients") {
    const TubeMesh tube = toy_tube();
    const GraphTopology topo = make_graph_topology(tube);
    Rng rng(31);
    GcnConfig cfg;
    cfg.hidden_dim = 16;
    cfg.num_layers = 3;
    GcnWeights w = GcnWeights::glorot(11, cfg, rng);

    ad::Tape t;
    const GcnBinding gb = bind(t, w, true);
    const MatX feats = oracles::random_matrix(tube.vertices.rows(), 11, rng);
    const ad::Value verts = refine_vertices(t, t.constant(feats), topo, gb, tube.vertices, cfg);
    CHECK((t.val(verts) - tube.vertices).cwiseAbs().maxCoeff() == 0.0); // zero-init head

    // gradients flow to every layer
    const ad::Value loss = t.sum(t.mul(verts, verts));
    t.backward(loss);
    CHECK(t.grad(gb.w_out).cwiseAbs().maxCoeff() > 0.0);
    CHECK(t.grad(gb.w_in).cwiseAbs().maxCoeff() == 0.0); // blocked by the zero head
}

TEST_CASE("gcn layer weight gradients match finite differences on the toy mesh") {
    const TubeMesh tube = toy_tube();
    const GraphTopology topo = make_graph_topology(tube);
    Rng rng(37);
    GcnConfig cfg;
    cfg.hidden_dim = 8;
    cfg.num_layers = 2;
    GcnWeights weights = GcnWeights::glorot(6, cfg, rng);
    // non-zero head so gradients reach the hidden layers
    weights.w_out = oracles::random_matrix(cfg.hidden_dim, 3, rng) * 0.1;
    const MatX feats = oracles::random_matrix(tube.vertices.rows(), 6, rng);
    const MatX target = tube.vertices;


    ad::Tape t;
    const GcnBinding gb = bind(t, weights, true);
    const ad::Value verts = refine_vertices(t, t.constant(feats), topo, gb, tube.vertices, cfg);
    const ad::Value d =
        t.sub(verts, t.constant(target + MatX::Constant(target.rows(), 3, 0.01)));
    const ad::Value loss = t.scale(t.sum(t.mul(d, d)), 1.0 / double(target.rows()));
    t.backward(loss);

    auto numeric_for = [&](MatX& param) {
        return oracles::finite_difference(
            [&](const MatX& p) {
                const MatX saved = param;
                param = p;
                ad::Tape tt;
                const GcnBinding gbb = bind(tt, weights, false);
                const ad::Value vv =
                    refine_vertices(tt, tt.constant(feats), topo, gbb, tube.vertices, cfg);
                const ad::Value dd = tt.sub(
                    vv, tt.constant(target + MatX::Constant(target.rows(), 3, 0.01)));
                const double out =
                    tt.scalar(tt.scale(tt.sum(tt.mul(dd, dd)), 1.0 / double(target.rows())));
                param = saved;
                return out;
            },
            param);
    };
    CHECK(oracles::max_rel_err(t.grad(gb.w_in), numeric_for(weights.w_in)) < 1e-4);
    CHECK(oracles::max_rel_err(t.grad(gb.w_hidden[0]), numeric_for(weights.w_hidden[0])) < 1e-4);
    CHECK(oracles::max_rel_err(t.grad(gb.w_hidden[1]), numeric_for(weights.w_hidden[1])) < 1e-4);
    CHECK(oracles::max_rel_err(t.grad(gb.w_out), numeric_for(weights.w_out)) < 1e-4);
}

TEST_CASE("checkpoint round trip validates shapes") {
    Rng rng(41);
    EncoderConfig ec;
    ec.level_channels = {3, 3, 3, 3};
    ec.hidden_channels = 2;
    GcnConfig gc;
    gc.hidden_dim = 8;
    gc.num_layers = 2;
    EncoderWeights enc = EncoderWeights::glorot(ec, rng);
    GcnWeights gcn = GcnWeights::glorot(2 * ec.total_channels() + 3, gc, rng);
    gcn.w_out = oracles::random_matrix(8, 3, rng);

    const std::string path =
        std::filesystem::temp_directory_path().string() + "/angio_test_ckpt.bin";
    save_checkpoint(path, enc, gcn, 1234);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.seed == 1234);
    CHECK((ck.gcn.w_out - gcn.w_out).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ck.encoder.levels[2][1].w - enc.levels[2][1].w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ck.gcn.config.num_layers == 2);

    // corrupting the magic invalidates the file
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(path), InvalidInput);
}
