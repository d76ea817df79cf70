#pragma once

#include "angio/common.hpp"

#include <optional>
#include <vector>

namespace angio {

/// C-arm acquisition parameters for one view.
///
/// World frame: isocenter at the origin. At zero angles the source sits on
/// -y and the detector on +y. The primary angle (LAO positive) rotates about
/// the patient axis z, the secondary angle (CRA positive) about x, composed
/// as Rz(primary) * Rx(secondary).
struct ViewGeometry {
    double primary_angle_deg = 0.0;
    double secondary_angle_deg = 0.0;
    double sid_mm = 0.0;          // source-to-image distance
    double sod_mm = 0.0;          // source-to-object (isocenter) distance
    double pixel_spacing_mm = 0.0; // isotropic
    int image_width = 0;
    int image_height = 0;
    Vec2 principal_point_px = Vec2::Zero();
    Vec2 detector_shift_px = Vec2::Zero();

    void validate() const; // throws InvalidInput
    double magnification() const { return sid_mm / sod_mm; }
};

/// 3x4 homogeneous mapping world mm -> image pixels, plus the source position.
struct ProjectionOperator {
    Mat34 matrix = Mat34::Zero();
    Vec3 source_position_mm = Vec3::Zero();

    // Detector frame, kept for exact ray construction.
    Vec3 ray_dir = Vec3::Zero();   // unit, source -> isocenter
    Vec3 detector_u = Vec3::Zero();
    Vec3 detector_v = Vec3::Zero();
    double focal_px = 0.0;         // sid / pixel_spacing
    Vec2 center_px = Vec2::Zero(); // principal point + detector shift
};

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit
};

enum class CorrespondenceLabel { start, end };

struct PointCorrespondence {
    Vec2 view_a_point;
    Vec2 view_b_point;
    CorrespondenceLabel label = CorrespondenceLabel::start;
};

struct TriangulationResult {
    Vec3 point_mm;
    double residual_mm; // half the gap between the two rays
};

struct CalibrationResult {
    ViewGeometry geometry_a;
    ViewGeometry geometry_b;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    bool converged = false;
};

ProjectionOperator projection_from_geometry(const ViewGeometry& g);

/// Homogeneous multiply + perspective divide. Throws NumericalError when the
/// point lies on the source plane (|w| < 1e-12).
Vec2 project(const ProjectionOperator& op, const Vec3& p_mm);

/// Back-projected ray through pixel p, from the source.
Ray backproject_ray(const ProjectionOperator& op, const Vec2& p_px);

/// Midpoint of the common perpendicular between the two back-projected rays.
TriangulationResult triangulate(const ProjectionOperator& op_a, const ProjectionOperator& op_b,
                                const Vec2& pa_px, const Vec2& pb_px);

struct CalibrationOptions {
    int max_iter = 200;
    double lambda_init = 1e-3;
    double cost_decrease_tol = 1e-12;
    double step_norm_tol = 1e-10;
};

/// Levenberg-Marquardt over [detector_shift_a, detector_shift_b] minimizing
/// the symmetric reprojection error of the triangulated correspondences.
CalibrationResult refine_calibration(const ViewGeometry& g_a, const ViewGeometry& g_b,
                                     const std::vector<PointCorrespondence>& corr,
                                     const CalibrationOptions& opts = {});

void to_json_file(const ViewGeometry& g, const std::string& path);
ViewGeometry view_geometry_from_json_file(const std::string& path);

} // namespace angio
