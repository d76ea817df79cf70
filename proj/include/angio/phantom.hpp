#pragma once

#include "angio/geometry.hpp"
#include "angio/mask.hpp"
#include "angio/mask_pipeline.hpp"
#include "angio/mesh_init.hpp"

#include <optional>

namespace angio {

enum class CenterlineKind { straight, arc, helix, spline };

struct StenosisSpec {
    double position = 0.5;  // arc-length fraction
    double severity = 0.5;  // fractional radius dip, (0, 0.9]
    double width_mm = 5.0;  // Gaussian sigma along the centerline
};

struct BifurcationSpec {
    double branch_point = 0.5; // arc-length fraction on the main branch
    double branch_angle_deg = 60.0;
    double branch_radius_mm = 1.2;
    double branch_length_mm = 15.0;
};

struct PhantomSpec {
    CenterlineKind kind = CenterlineKind::straight;
    double length_mm = 40.0;
    double base_radius_mm = 2.0;
    std::optional<StenosisSpec> stenosis;
    std::optional<BifurcationSpec> bifurcation;
    ViewGeometry view_a;
    ViewGeometry view_b;
    double noise_px = 0.0; // boundary jitter band width
    uint64_t seed = 0;

    // shape parameters
    double arc_angle_deg = 90.0;
    double helix_turns = 1.0;
    double helix_radius_mm = 6.0;
    std::vector<Vec3> spline_control; // >= 4 points for kind == spline
    Mat3 orientation = Mat3::Identity();
    Vec3 center_offset_mm = Vec3::Zero();

    void validate() const;
};

/// One reconstructable branch with its analytic ground truth.
struct PhantomBranch {
    Centerline3D centerline;
    RadiusProfile radii;
    TubeMesh mesh;
    BinaryMask mask_a, mask_b; // silhouette of this branch alone
    SoiSpec soi_a, soi_b;
};

struct PhantomCase {
    PhantomSpec spec;
    ViewGeometry geom_a, geom_b;
    PhantomBranch main;
    std::optional<PhantomBranch> side;       // present when spec.bifurcation is set
    std::optional<BinaryMask> combined_mask_a, combined_mask_b;
};

PhantomCase generate(const PhantomSpec& spec,
                     kernels::Exec ex = kernels::Exec::parallel);

enum class Split { train, val, test };

struct SuiteOptions {
    int image_size = 128;
    double noise_px = 0.0;
    double min_length_mm = 20.0, max_length_mm = 60.0;
    double min_radius_mm = 1.0, max_radius_mm = 3.0;
    double stenosis_fraction = 0.5; // fraction of cases with a stenosis
};

struct SuiteCase {
    PhantomCase phantom;
    Split split;
};

/// n randomized cases with 70/15/15 split labels
/// (train = floor(0.7 n), val = floor(0.15 n), test = remainder).
std::vector<SuiteCase> generate_suite(int n, uint64_t seed, const SuiteOptions& opts = {},
                                      kernels::Exec ex = kernels::Exec::parallel);

/// Sphere-chain samples of a centerline+radius profile, for silhouette tests.
std::vector<kernels::SphereSample> capsule_samples(const Centerline3D& cl,
                                                   const RadiusProfile& rp,
                                                   int samples_per_segment = 10);

void write_case_bundle(const PhantomCase& c, const std::string& dir);
PhantomCase read_case_bundle(const std::string& dir);

std::string spec_hash(const PhantomSpec& spec);

} // namespace angio
