#pragma once

#include "angio/checkpoint.hpp"
#include "angio/losses.hpp"
#include "angio/metrics.hpp"
#include "angio/optim.hpp"
#include "angio/phantom.hpp"
#include "angio/stitch.hpp"

#include <map>
#include <optional>

namespace angio {

struct PipelineConfig {
    // per-view inputs (main branch)
    std::string mask_a, mask_b;
    std::string geometry_a, geometry_b;
    std::string soi; // json with per-view start/end

    // optional side branch
    std::string side_mask_a, side_mask_b, side_soi;

    // optional analytic ground truth (centerline csv -> template mesh)
    std::string gt_centerline;

    std::string checkpoint; // required when refine is on
    std::string out_dir;
    uint64_t seed = 0;

    bool calibrate = true;
    bool refine = false;
    bool stitch = false;
    int stitch_resolution = 256;

    LossConfig loss;
    kernels::Exec exec = kernels::Exec::parallel;
    int eigen_threads = 1;

    static PipelineConfig from_json_file(const std::string& path);
    std::string to_json() const;
    void validate() const; // throws InvalidInput before any compute

    /// Point the per-view inputs at a phantom case bundle directory.
    void use_case_bundle(const std::string& dir);
};

struct BranchRecon {
    Centerline3D centerline; // mm
    RadiusProfile radii;
    TubeMesh mi_mesh;      // mm
    TubeMesh final_mesh;   // mm; equals mi_mesh when refine is off
    MeshNormalization normalization;
    double max_triangulation_residual_mm = 0;
};

struct ReconstructResult {
    std::optional<CalibrationResult> calibration;
    BranchRecon main;
    std::optional<BranchRecon> side;
    std::optional<TriMesh> stitched;
    std::optional<MetricReport> metrics;
    std::map<std::string, double> stage_seconds;
};

/// MI stage for one branch: SOI crop/rotate, centerline extraction in both
/// views, triangulation, tube construction.
BranchRecon mi_reconstruct(const BinaryMask& mask_a, const BinaryMask& mask_b,
                           const SoiSpec& soi_a, const SoiSpec& soi_b, const ViewGeometry& g_a,
                           const ViewGeometry& g_b, kernels::Exec ex = kernels::Exec::parallel);

/// Builds an SR training case from a phantom: runs MI, normalizes, and maps
/// the analytic ground-truth mesh into the same frame.
TrainCase make_train_case(const PhantomCase& c, kernels::Exec ex = kernels::Exec::parallel);

ReconstructResult run_reconstruct(const PipelineConfig& cfg);

/// Rebuilds the ring structure from a quad OBJ written by this project
/// (vertices ring-major, 60 slots).
TubeMesh tube_from_obj(const std::string& path, int slots = 60);

SoiSpec soi_from_json_file(const std::string& path, const std::string& view); // view: "a"|"b"
void soi_pair_to_json_file(const SoiSpec& a, const SoiSpec& b, const std::string& path);

} // namespace angio
