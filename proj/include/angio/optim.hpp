#pragma once

#include "angio/feature_refine.hpp"
#include "angio/losses.hpp"
#include "angio/mesh_init.hpp"

namespace angio {

double lr_schedule(int epoch, double initial = 1e-3, double decay = 0.99);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update; moments updated in place.
void adam_step(MatX& param, const MatX& grad, MatX& m, MatX& v, long step_number, double lr,
               const AdamConfig& cfg = {});

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void add_block(std::string name, MatX* param);

    /// Applies one step to every block; grads must follow block order.
    /// Throws NumericalError naming the block on any non-finite gradient.
    void step(const std::vector<const MatX*>& grads, double lr);

    long step_count() const { return step_; }
    size_t block_count() const { return blocks_.size(); }

private:
    struct Block {
        std::string name;
        MatX* param;
        MatX m, v;
    };
    std::vector<Block> blocks_;
    long step_ = 0;
    AdamConfig cfg_;
};

struct TrainConfig {
    int epochs = 500;
    int batch_size = 1; // the SR stage contract
    uint64_t seed = 0;
    int checkpoint_every = 0;    // epochs; 0 = off
    int early_stop_patience = 0; // epochs without val improvement; 0 = off
    double lr_initial = 1e-3;
    double lr_decay = 0.99;
    double grad_clip_norm = 10.0;
    double val_fraction = 0.15;
    std::vector<int> val_indices; // explicit split; empty = seeded internal split
    kernels::Exec exec = kernels::Exec::serial;
    int eigen_threads = 1;
    std::string checkpoint_dir;
    bool verbose = false;

    void validate() const;
};

/// One SR training example: two masks, two geometries, the MI mesh and the
/// template-corresponded ground truth, both in the MI normalization frame.
struct TrainCase {
    BinaryMask mask_a, mask_b;
    ViewGeometry geom_a, geom_b;
    TubeMesh mi_mesh_normalized;
    TubeMesh gt_mesh_normalized;
    MeshNormalization normalization;
};

struct LossRecord {
    int epoch = 0;
    std::string split;
    LossBreakdown terms;
    double lr = 0;
};

struct TrainResult {
    EncoderWeights encoder;
    GcnWeights gcn;
    std::vector<LossRecord> history;
    int best_epoch = -1;
    double best_val_loss = 0;
    int clip_events = 0;
};

TrainResult train_sr(const std::vector<TrainCase>& cases, const TrainConfig& cfg,
                     const LossConfig& loss_cfg, const EncoderConfig& enc_cfg = {},
                     const GcnConfig& gcn_cfg = {});

/// Forward-only SR inference: refined vertices for one case.
TubeMesh sr_refine(const TrainCase& c, EncoderWeights& enc, GcnWeights& gcn,
                   kernels::Exec ex = kernels::Exec::serial);

void write_history_csv(const std::vector<LossRecord>& history, const std::string& path);

} // namespace angio
