#include "angio/optim.hpp"

#include "angio/rng.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

namespace angio {

double lr_schedule(int epoch, double initial, double decay) {
    if (epoch < 0) throw InvalidInput("lr_schedule: negative epoch");
    return initial * std::pow(decay, double(epoch));
}

void adam_step(MatX& param, const MatX& grad, MatX& m, MatX& v, long step_number, double lr,
               const AdamConfig& cfg) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
        throw InvalidInput("adam_step: parameter/gradient shape mismatch");
    if (m.size() == 0) m = MatX::Zero(param.rows(), param.cols());
    if (v.size() == 0) v = MatX::Zero(param.rows(), param.cols());
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(step_number));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(step_number));
    param.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

void AdamOptimizer::add_block(std::string name, MatX* param) {
    blocks_.push_back(Block{std::move(name), param, {}, {}});
}

void AdamOptimizer::step(const std::vector<const MatX*>& grads, double lr) {
    if (grads.size() != blocks_.size())
        throw InvalidInput("AdamOptimizer: gradient count mismatch");
    for (size_t i = 0; i < blocks_.size(); ++i)
        if (!grads[i]->allFinite())
            throw NumericalError("AdamOptimizer: non-finite gradient in block " +
                                 blocks_[i].name);
    ++step_;
    for (size_t i = 0; i < blocks_.size(); ++i)
        adam_step(*blocks_[i].param, *grads[i], blocks_[i].m, blocks_[i].v, step_, lr, cfg_);
}

void TrainConfig::validate() const {
    if (epochs < 0) throw InvalidInput("TrainConfig: negative epochs");
    if (batch_size != 1) throw InvalidInput("TrainConfig: the SR stage uses batch size 1");
    if (val_fraction < 0 || val_fraction >= 1) throw InvalidInput("TrainConfig: bad val fraction");
    if (eigen_threads < 1) throw InvalidInput("TrainConfig: need >= 1 thread");
}

namespace {

struct PreparedCase {
    LossContext ctx;
    MatX image_a, image_b;
    int image_w_a = 0, image_h_a = 0, image_w_b = 0, image_h_b = 0;
    MatX px_a, px_b;          // initial-mesh projections, full-image pixels
    MatX initial_positions;   // normalized frame
};

PreparedCase prepare_case(const TrainCase& c, const LossConfig& loss_cfg) {
    if (c.mi_mesh_normalized.vertices.rows() != c.gt_mesh_normalized.vertices.rows())
        throw InvalidInput("train_sr: case is not template-corresponded");
    PreparedCase p;
    const ProjectionOperator op_a = projection_from_geometry(c.geom_a);
    const ProjectionOperator op_b = projection_from_geometry(c.geom_b);
    p.ctx = make_loss_context(c.mi_mesh_normalized, c.gt_mesh_normalized, c.normalization, op_a,
                              op_b, c.mask_a, c.mask_b, loss_cfg);
    p.image_a = image_from_mask(c.mask_a);
    p.image_b = image_from_mask(c.mask_b);
    p.image_w_a = c.mask_a.width;
    p.image_h_a = c.mask_a.height;
    p.image_w_b = c.mask_b.width;
    p.image_h_b = c.mask_b.height;
    const MatX verts_mm = c.normalization.invert(c.mi_mesh_normalized.vertices);
    p.px_a = project_points_px(verts_mm, op_a);
    p.px_b = project_points_px(verts_mm, op_b);
    p.initial_positions = c.mi_mesh_normalized.vertices;
    return p;
}

std::vector<ad::Value> binding_handles(const EncoderBinding& eb, const GcnBinding& gb) {
    // must mirror the for_each_param order
    std::vector<ad::Value> h;
    for (int level = 0; level < 4; ++level)
        for (int conv = 0; conv < 2; ++conv) {
            h.push_back(eb.layers[level][conv].first);
            h.push_back(eb.layers[level][conv].second);
        }
    h.push_back(gb.w_in);
    for (const auto& v : gb.w_hidden) h.push_back(v);
    h.push_back(gb.w_out);
    return h;
}

ad::Value forward_case(ad::Tape& tape, const PreparedCase& p, const EncoderBinding& eb,
                       const GcnBinding& gb, const EncoderConfig& enc_cfg,
                       const GcnConfig& gcn_cfg, const GraphTopology& topo,
                       const LossConfig& loss_cfg, kernels::Exec ex, LossBreakdown* bd) {
    const FeaturePyramid pyr_a =
        extract_features(tape, p.image_a, p.image_h_a, p.image_w_a, eb, enc_cfg);
    const FeaturePyramid pyr_b =
        extract_features(tape, p.image_b, p.image_h_b, p.image_w_b, eb, enc_cfg);
    const ad::Value feats =
        assemble_vertex_features(tape, pyr_a, pyr_b, p.px_a, p.px_b, p.initial_positions);
    const ad::Value verts =
        refine_vertices(tape, feats, topo, gb, p.initial_positions, gcn_cfg);
    return total_loss(tape, verts, p.ctx, loss_cfg, bd, ex);
}

void accumulate(LossBreakdown& acc, const LossBreakdown& bd) {
    acc.mse += bd.mse;
    acc.norm += bd.norm;
    acc.edge += bd.edge;
    acc.lap += bd.lap;
    acc.seg += bd.seg;
    acc.total += bd.total;
}

LossBreakdown divide(LossBreakdown acc, double n) {
    acc.mse /= n;
    acc.norm /= n;
    acc.edge /= n;
    acc.lap /= n;
    acc.seg /= n;
    acc.total /= n;
    return acc;
}

} // namespace

TrainResult train_sr(const std::vector<TrainCase>& cases, const TrainConfig& cfg,
                     const LossConfig& loss_cfg, const EncoderConfig& enc_cfg,
                     const GcnConfig& gcn_cfg) {
    cfg.validate();
    loss_cfg.validate();
    if (cases.empty()) throw InvalidInput("train_sr: empty dataset");

    Eigen::setNbThreads(cfg.eigen_threads);

    const int in_dim = 2 * enc_cfg.total_channels() + 3;
    Rng rng(cfg.seed);
    TrainResult result;
    result.encoder = EncoderWeights::glorot(enc_cfg, rng);
    result.gcn = GcnWeights::glorot(in_dim, gcn_cfg, rng);

    std::vector<PreparedCase> prepared;
    prepared.reserve(cases.size());
    for (const auto& c : cases) prepared.push_back(prepare_case(c, loss_cfg));
    const GraphTopology topo = make_graph_topology(cases[0].mi_mesh_normalized);
    for (const auto& c : cases)
        if (c.mi_mesh_normalized.edges != cases[0].mi_mesh_normalized.edges)
            throw InvalidInput("train_sr: cases must share the template topology");

    // split
    std::vector<int> train_idx, val_idx;
    if (!cfg.val_indices.empty()) {
        std::vector<uint8_t> is_val(cases.size(), 0);
        for (int i : cfg.val_indices) {
            if (i < 0 || i >= int(cases.size()))
                throw InvalidInput("train_sr: val index out of range");
            is_val[i] = 1;
        }
        for (int i = 0; i < int(cases.size()); ++i)
            (is_val[i] ? val_idx : train_idx).push_back(i);
    } else {
        std::vector<int> order(cases.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        rng.shuffle(order);
        const int n_val = int(std::floor(cfg.val_fraction * double(cases.size())));
        val_idx.assign(order.begin(), order.begin() + n_val);
        train_idx.assign(order.begin() + n_val, order.end());
    }
    if (train_idx.empty()) throw InvalidInput("train_sr: no training cases after split");

    AdamOptimizer opt;
    for_each_param(result.encoder, [&](const std::string& n, MatX& m) { opt.add_block(n, &m); });
    for_each_param(result.gcn, [&](const std::string& n, MatX& m) { opt.add_block(n, &m); });

    EncoderWeights best_enc = result.encoder;
    GcnWeights best_gcn = result.gcn;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.lr_initial, cfg.lr_decay);
        std::vector<int> order = train_idx;
        rng.shuffle(order);

        LossBreakdown train_acc{};
        for (int ci : order) {
            try {
                ad::Tape tape;
                EncoderBinding eb = bind(tape, result.encoder, true);
                GcnBinding gb = bind(tape, result.gcn, true);
                LossBreakdown bd;
                const ad::Value loss = forward_case(tape, prepared[ci], eb, gb, enc_cfg,
                                                    gcn_cfg, topo, loss_cfg, cfg.exec, &bd);
                tape.backward(loss);
                accumulate(train_acc, bd);

                const std::vector<ad::Value> handles = binding_handles(eb, gb);
                double norm_sq = 0;
                for (const ad::Value h : handles) norm_sq += tape.grad(h).squaredNorm();
                const double gnorm = std::sqrt(norm_sq);
                double scale = 1.0;
                if (cfg.grad_clip_norm > 0 && gnorm > cfg.grad_clip_norm) {
                    scale = cfg.grad_clip_norm / gnorm;
                    ++result.clip_events;
                    if (cfg.verbose)
                        std::cerr << "[train_sr] gradient clipped at epoch " << epoch
                                  << " case " << ci << " (norm " << gnorm << ")\n";
                }
                std::vector<MatX> scaled;
                std::vector<const MatX*> grads;
                scaled.reserve(handles.size());
                grads.reserve(handles.size());
                for (const ad::Value h : handles) {
                    scaled.push_back(scale * tape.grad(h));
                    grads.push_back(&scaled.back());
                }
                opt.step(grads, lr);
            } catch (const NumericalError& e) {
                throw NumericalError("train_sr: epoch " + std::to_string(epoch) + " case " +
                                     std::to_string(ci) + ": " + e.what());
            }
        }
        result.history.push_back(
            {epoch, "train", divide(train_acc, double(order.size())), lr});

        double val_total = 0;
        if (!val_idx.empty()) {
            LossBreakdown val_acc{};
            for (int ci : val_idx) {
                ad::Tape tape;
                EncoderBinding eb = bind(tape, result.encoder, false);
                GcnBinding gb = bind(tape, result.gcn, false);
                LossBreakdown bd;
                forward_case(tape, prepared[ci], eb, gb, enc_cfg, gcn_cfg, topo, loss_cfg,
                             cfg.exec, &bd);
                accumulate(val_acc, bd);
            }
            const LossBreakdown val_mean = divide(val_acc, double(val_idx.size()));
            result.history.push_back({epoch, "val", val_mean, lr});
            val_total = val_mean.total;
        } else {
            val_total = result.history.back().terms.total; // fall back to train loss
        }

        if (val_total < best_val) {
            best_val = val_total;
            best_epoch = epoch;
            best_enc = result.encoder;
            best_gcn = result.gcn;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (cfg.verbose)
            std::cerr << "[train_sr] epoch " << epoch << " lr " << lr << " train "
                      << result.history[result.history.size() - (val_idx.empty() ? 1 : 2)]
                             .terms.total
                      << " val " << val_total << "\n";
        if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
    }

    if (cfg.epochs > 0) {
        result.encoder = best_enc;
        result.gcn = best_gcn;
        result.best_epoch = best_epoch;
        result.best_val_loss = best_val;
    }
    return result;
}

TubeMesh sr_refine(const TrainCase& c, EncoderWeights& enc, GcnWeights& gcn, kernels::Exec ex) {
    (void)ex;
    const PreparedCase p = prepare_case(c, LossConfig{});
    const GraphTopology topo = make_graph_topology(c.mi_mesh_normalized);
    ad::Tape tape;
    EncoderBinding eb = bind(tape, enc, false);
    GcnBinding gb = bind(tape, gcn, false);
    const FeaturePyramid pyr_a =
        extract_features(tape, p.image_a, p.image_h_a, p.image_w_a, eb, enc.config);
    const FeaturePyramid pyr_b =
        extract_features(tape, p.image_b, p.image_h_b, p.image_w_b, eb, enc.config);
    const ad::Value feats =
        assemble_vertex_features(tape, pyr_a, pyr_b, p.px_a, p.px_b, p.initial_positions);
    const ad::Value verts =
        refine_vertices(tape, feats, topo, gb, p.initial_positions, gcn.config);
    TubeMesh out = c.mi_mesh_normalized;
    out.vertices = tape.val(verts);
    return out;
}

void write_history_csv(const std::vector<LossRecord>& history, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw InvalidInput("cannot write history csv: " + path);
    std::fprintf(f, "epoch,split,mse,norm,edge,lap,seg,total,lr\n");
    for (const auto& r : history)
        std::fprintf(f, "%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                     r.split.c_str(), r.terms.mse, r.terms.norm, r.terms.edge, r.terms.lap,
                     r.terms.seg, r.terms.total, r.lr);
    std::fclose(f);
}

} // namespace angio
