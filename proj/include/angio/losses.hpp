#pragma once

#include "angio/autodiff.hpp"
#include "angio/geometry.hpp"
#include "angio/kernels.hpp"
#include "angio/mask.hpp"
#include "angio/mesh.hpp"
#include "angio/mesh_init.hpp"

namespace angio {

struct LossConfig {
    double w_norm = 0.01;
    double w_edge = 2.5;
    double w_lap = 100.0;
    double w_seg = 0.0002;
    double raster_sigma = 1e-4;
    int raster_resolution = 128;
    bool edge_relative = false; // penalize deviation from initial edge lengths instead

    void validate() const;
};

// ------------------------------------------------ direct evaluation ----

double mse_loss(const MatX& pred, const MatX& gt);

/// Per-vertex mean of adjacent (unnormalized) triangle cross products,
/// normalized to unit length. Throws NumericalError on a zero-area one-ring.
MatX vertex_normals(const MatX& verts, const std::vector<std::array<int, 3>>& tris);
MatX vertex_normals(const TubeMesh& mesh);

/// Mean over vertices of 1 - |n_pred . n_gt|.
double normal_loss(const TubeMesh& pred, const TubeMesh& gt);

double edge_loss(const TubeMesh& mesh);

Vec3 laplacian(const TubeMesh& mesh, int vertex_id);

double laplacian_loss(const TubeMesh& pred, const TubeMesh& gt);

/// BCE + (1 - soft Dice), predictions clamped to [1e-7, 1-1e-7].
double bce_dice_loss(const VecX& pred, const VecX& gt);

// -------------------------------------------------------- rendering ----

/// Square image-plane region (pixels) a silhouette is rendered over.
struct RenderWindow {
    Vec2 min_px = Vec2::Zero();
    double side_px = 1.0;
};

/// Foreground bbox padded and squared; may extend past the image border.
RenderWindow soi_render_window(const BinaryMask& mask, int pad_px = 8);

struct SilhouetteImage {
    int res = 0;
    VecX values; // res*res, row-major, occupancy probability
    bool empty_warning = false;
};

SilhouetteImage soft_render_silhouette(const TubeMesh& mesh, const ProjectionOperator& op,
                                       const LossConfig& cfg, const RenderWindow& window,
                                       kernels::Exec ex = kernels::Exec::serial);

/// Ground-truth mask resampled (nearest) onto the raster grid of `window`.
VecX sample_mask_on_window(const BinaryMask& mask, const RenderWindow& window, int res);

// ------------------------------------------------------- tape graph ----

namespace graph {

ad::Value mse_loss(ad::Tape& t, ad::Value pred, const MatX& gt);

ad::Value vertex_normals(ad::Tape& t, ad::Value verts,
                         const std::vector<std::array<int, 3>>& tris, int n_verts);

ad::Value normal_loss(ad::Tape& t, ad::Value verts,
                      const std::vector<std::array<int, 3>>& tris, const MatX& gt_normals);

ad::Value edge_loss(ad::Tape& t, ad::Value verts, const std::vector<std::array<int, 2>>& edges,
                    const VecX* initial_lengths = nullptr); // relative when provided

ad::Value laplacian_loss(ad::Tape& t, ad::Value verts, const ad::SpMat& laplacian_op,
                         const MatX& gt_laplacian);

ad::Value bce_dice(ad::Tape& t, ad::Value pred_pixels, VecX gt_pixels);

/// mm -> window-normalized 2D projection, differentiable in the vertices.
ad::Value project_to_window(ad::Tape& t, ad::Value verts_mm, const ProjectionOperator& op,
                            const RenderWindow& window);

/// Soft silhouette of projected triangles (normalized window coords).
ad::Value soft_raster(ad::Tape& t, ad::Value verts2d, std::vector<std::array<int, 3>> tris,
                      double sigma, int res, kernels::Exec ex = kernels::Exec::serial);

/// Inverse MeshNormalization as a tape op (affine).
ad::Value denormalize_op(ad::Tape& t, ad::Value verts_norm, const MeshNormalization& n);

} // namespace graph

/// I - neighbor_average over the mesh edges (uniform Laplacian operator).
ad::SpMat laplacian_operator(int n, const std::vector<std::array<int, 2>>& edges);

struct LossBreakdown {
    double mse = 0, norm = 0, edge = 0, lap = 0, seg = 0, total = 0;
};

/// Everything constant about one training case.
struct LossContext {
    // topology of the (initial) mesh; vertex values live on the tape
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> tris;
    int n_verts = 0;

    MatX gt_vertices;  // normalized frame
    MatX gt_normals;   // unit, from the gt mesh
    MatX gt_laplacian; // L(gt)
    ad::SpMat lap_op;  // I - neighbor average
    VecX initial_edge_lengths; // for the edge_relative variant

    MeshNormalization denorm;
    ProjectionOperator op_a, op_b;
    RenderWindow win_a, win_b;
    VecX gt_pix_a, gt_pix_b; // masks sampled on the raster grids
};

LossContext make_loss_context(const TubeMesh& initial_normalized, const TubeMesh& gt_normalized,
                              const MeshNormalization& n, const ProjectionOperator& op_a,
                              const ProjectionOperator& op_b, const BinaryMask& mask_a,
                              const BinaryMask& mask_b, const LossConfig& cfg);

/// Eq-weighted total: mse + w_norm*norm + w_edge*edge + w_lap*lap + w_seg*seg,
/// seg averaged over the two views. Breakdown returns the unweighted terms.
ad::Value total_loss(ad::Tape& t, ad::Value pred_verts_norm, const LossContext& ctx,
                     const LossConfig& cfg, LossBreakdown* breakdown = nullptr,
                     kernels::Exec ex = kernels::Exec::serial);

} // namespace angio
