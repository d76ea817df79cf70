#pragma once

#include "angio/geometry.hpp"
#include "angio/kernels.hpp"
#include "angio/mask.hpp"
#include "angio/mesh.hpp"

namespace angio {

struct MetricReport {
    double mae_mm = 0;
    double hd_mm = 0;
    double precision_pct = 0;
    double recall_pct = 0;
    double fscore_pct = 0;
    double dice_pct = 0;
    double jaccard_pct = 0;
    double tau = 0.0005; // normalized-frame threshold

    std::string to_json() const;
    std::string table() const; // fixed-width, one row
};

/// Symmetrized mean nearest-neighbor distance between vertex sets.
double mae(const MatX& pred, const MatX& gt, kernels::Exec ex = kernels::Exec::parallel);

/// Exact symmetric Hausdorff distance between vertex sets.
double hausdorff(const MatX& pred, const MatX& gt, kernels::Exec ex = kernels::Exec::parallel);

struct FScoreResult {
    double precision_pct = 0;
    double recall_pct = 0;
    double fscore_pct = 0;
};

/// Precision/recall as the percentage of points with a neighbor within tau;
/// inputs are expected in the normalized [0,1] frame.
FScoreResult f_score(const MatX& pred, const MatX& gt, double tau = 0.0005,
                     kernels::Exec ex = kernels::Exec::parallel);

/// Exact-coverage rasterization of the projected triangles (pixel centers).
BinaryMask rasterize_silhouette(const MatX& verts_mm,
                                const std::vector<std::array<int, 3>>& tris,
                                const ProjectionOperator& op, int width, int height);

struct OverlapResult {
    double dice_pct = 0;
    double jaccard_pct = 0;
};

OverlapResult projection_overlap(const TubeMesh& mesh, const ProjectionOperator& op,
                                 const BinaryMask& gt_mask);
OverlapResult mask_overlap(const BinaryMask& pred, const BinaryMask& gt);

} // namespace angio
