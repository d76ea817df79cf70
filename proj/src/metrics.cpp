#include "angio/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

namespace angio {

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["mae_mm"] = mae_mm;
    j["hd_mm"] = hd_mm;
    j["precision_pct"] = precision_pct;
    j["recall_pct"] = recall_pct;
    j["fscore_pct"] = fscore_pct;
    j["dice_pct"] = dice_pct;
    j["jaccard_pct"] = jaccard_pct;
    j["tau"] = tau;
    return j.dump(2);
}

std::string MetricReport::table() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%-10s %-10s %-10s %-10s %-10s\n%-10.4f %-10.4f %-10.2f %-10.2f %-10.2f\n",
                  "MAE(mm)", "HD(mm)", "F-score", "Dice", "Jaccard", mae_mm, hd_mm, fscore_pct,
                  dice_pct, jaccard_pct);
    return buf;
}

namespace {

void check_sets(const MatX& a, const MatX& b, const char* what) {
    if (a.rows() == 0 || b.rows() == 0)
        throw InvalidInput(std::string(what) + ": empty point set");
    if (a.cols() != 3 || b.cols() != 3)
        throw InvalidInput(std::string(what) + ": expected n x 3 point sets");
}

VecX directed_distances(const MatX& from, const MatX& to, kernels::Exec ex) {
    const kernels::PointGrid grid = kernels::PointGrid::build(to);
    VecX d(from.rows());
    kernels::nn_min_distances(grid, from, d.data(), ex);
    return d;
}

} // namespace

double mae(const MatX& pred, const MatX& gt, kernels::Exec ex) {
    check_sets(pred, gt, "mae");
    const VecX d_pg = directed_distances(pred, gt, ex);
    const VecX d_gp = directed_distances(gt, pred, ex);
    return 0.5 * (d_pg.mean() + d_gp.mean());
}

double hausdorff(const MatX& pred, const MatX& gt, kernels::Exec ex) {
    check_sets(pred, gt, "hausdorff");
    const VecX d_pg = directed_distances(pred, gt, ex);
    const VecX d_gp = directed_distances(gt, pred, ex);
    return std::max(d_pg.maxCoeff(), d_gp.maxCoeff());
}

FScoreResult f_score(const MatX& pred, const MatX& gt, double tau, kernels::Exec ex) {
    check_sets(pred, gt, "f_score");
    if (!(tau > 0)) throw InvalidInput("f_score: tau must be > 0");
    const VecX d_pg = directed_distances(pred, gt, ex);
    const VecX d_gp = directed_distances(gt, pred, ex);
    const double precision =
        100.0 * double((d_pg.array() <= tau).count()) / double(pred.rows());
    const double recall = 100.0 * double((d_gp.array() <= tau).count()) / double(gt.rows());
    FScoreResult r{precision, recall, 0.0};
    if (precision + recall > 0) r.fscore_pct = 2.0 * precision * recall / (precision + recall);
    return r;
}

BinaryMask rasterize_silhouette(const MatX& verts_mm,
                                const std::vector<std::array<int, 3>>& tris,
                                const ProjectionOperator& op, int width, int height) {
    BinaryMask out(width, height);
    MatX px(verts_mm.rows(), 2);
    for (long i = 0; i < verts_mm.rows(); ++i)
        px.row(i) = project(op, verts_mm.row(i).transpose()).transpose();
    for (const auto& t : tris) {
        const double ax = px(t[0], 0), ay = px(t[0], 1);
        const double bx = px(t[1], 0), by = px(t[1], 1);
        const double cx = px(t[2], 0), cy = px(t[2], 1);
        const int x0 = std::max(0, int(std::ceil(std::min({ax, bx, cx}))));
        const int x1 = std::min(width - 1, int(std::floor(std::max({ax, bx, cx}))));
        const int y0 = std::max(0, int(std::ceil(std::min({ay, by, cy}))));
        const int y1 = std::min(height - 1, int(std::floor(std::max({ay, by, cy}))));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (!out.at(x, y) && kernels::point_in_tri(x, y, ax, ay, bx, by, cx, cy))
                    out.at(x, y) = 1;
    }
    return out;
}

OverlapResult mask_overlap(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw InvalidInput("mask_overlap: size mismatch");
    size_t np = 0, ng = 0, ni = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        np += pred.data[i] != 0;
        ng += gt.data[i] != 0;
        ni += pred.data[i] && gt.data[i];
    }
    if (np == 0 && ng == 0) return {100.0, 100.0}; // both empty
    if (np == 0 || ng == 0) return {0.0, 0.0};
    OverlapResult r;
    r.dice_pct = 100.0 * 2.0 * double(ni) / double(np + ng);
    r.jaccard_pct = 100.0 * double(ni) / double(np + ng - ni);
    return r;
}

OverlapResult projection_overlap(const TubeMesh& mesh, const ProjectionOperator& op,
                                 const BinaryMask& gt_mask) {
    const BinaryMask pred =
        rasterize_silhouette(mesh.vertices, mesh.tri_faces, op, gt_mask.width, gt_mask.height);
    return mask_overlap(pred, gt_mask);
}

} // namespace angio
