#pragma once

#include "angio/autodiff.hpp"
#include "angio/geometry.hpp"
#include "angio/mask.hpp"
#include "angio/mesh.hpp"
#include "angio/rng.hpp"

#include <array>
#include <functional>

namespace angio {

// ------------------------------------------------------------ weights ----

struct EncoderConfig {
    std::array<int, 4> level_channels = {60, 60, 60, 60};
    int hidden_channels = 12;

    int total_channels() const {
        return level_channels[0] + level_channels[1] + level_channels[2] + level_channels[3];
    }
};

struct ConvLayer {
    MatX w; // out_ch x (in_ch * 9)
    MatX b; // out_ch x 1
};

struct EncoderWeights {
    EncoderConfig config;
    std::array<std::array<ConvLayer, 2>, 4> levels;

    static EncoderWeights glorot(const EncoderConfig& cfg, Rng& rng);
};

struct GcnConfig {
    int hidden_dim = 128;
    int num_layers = 8;
    bool absolute_regression = false;
};

struct GcnWeights {
    GcnConfig config;
    int input_dim = 0;
    MatX w_in;                 // input_dim x hidden
    std::vector<MatX> w_hidden; // hidden x hidden
    MatX w_out;                // hidden x 3, zero-initialized

    static GcnWeights glorot(int input_dim, const GcnConfig& cfg, Rng& rng);
};

/// Canonical parameter enumeration; bindings, the optimizer, and the
/// checkpoint format all share this order.
void for_each_param(EncoderWeights& w, const std::function<void(const std::string&, MatX&)>& fn);
void for_each_param(GcnWeights& w, const std::function<void(const std::string&, MatX&)>& fn);

// ----------------------------------------------------------- topology ----

struct GraphTopology {
    ad::SpMat norm_adjacency; // D^-1/2 (A+I) D^-1/2
    std::vector<std::array<int, 2>> edges;
};

GraphTopology make_graph_topology(const TubeMesh& mesh);

// -------------------------------------------------------- tape pieces ----

struct PyramidLevel {
    ad::Value map; // channels x (width*height)
    int channels = 0, width = 0, height = 0;
};

struct FeaturePyramid {
    std::array<PyramidLevel, 4> levels;
};

struct EncoderBinding {
    std::array<std::array<std::pair<ad::Value, ad::Value>, 2>, 4> layers; // (w, b)
};
struct GcnBinding {
    ad::Value w_in;
    std::vector<ad::Value> w_hidden;
    ad::Value w_out;
};

EncoderBinding bind(ad::Tape& t, EncoderWeights& w, bool trainable);
GcnBinding bind(ad::Tape& t, GcnWeights& w, bool trainable);

/// 3x3 same-padding convolution over a channels x (h*w) map, via im2col.
ad::Value conv3x3(ad::Tape& t, ad::Value x, int h, int w, ad::Value weight, ad::Value bias,
                  int in_ch, int out_ch);

/// 2x2 average pooling (floor semantics on odd sizes).
ad::Value avgpool2(ad::Tape& t, ad::Value x, int ch, int h, int w);

/// Two 3x3 conv+ReLU blocks per level, 2x downsampling between levels.
FeaturePyramid extract_features(ad::Tape& t, const MatX& image, int h, int w,
                                const EncoderBinding& enc, const EncoderConfig& cfg);

MatX image_from_mask(const BinaryMask& m); // 1 x (w*h), values {0,1}

MatX project_points_px(const MatX& verts_mm, const ProjectionOperator& op);

/// Clamp-to-border bilinear sampling; differentiable in both the map and uv.
ad::Value bilinear_sample(ad::Tape& t, ad::Value map, int ch, int h, int w, ad::Value uv);

/// Per-vertex concatenation: both views' pyramid samples at (u,v)/2^k, then
/// the vertex's normalized coordinates. Width = 2 * sum(C_k) + 3.
ad::Value assemble_vertex_features(ad::Tape& t, const FeaturePyramid& pyr_a,
                                   const FeaturePyramid& pyr_b, const MatX& px_a,
                                   const MatX& px_b, const MatX& verts_norm);

/// Eq-1 layer: sigma(A_norm * H * W), identity when activate is false.
ad::Value gcn_layer(ad::Tape& t, ad::Value h, const ad::SpMat& adj, ad::Value w, bool activate);

/// Input projection -> residual GCN stack -> linear head. Offsets are added
/// to the initial positions unless absolute regression is configured.
ad::Value refine_vertices(ad::Tape& t, ad::Value feats, const GraphTopology& topo,
                          const GcnBinding& gcn, const MatX& initial_positions,
                          const GcnConfig& cfg);

} // namespace angio
