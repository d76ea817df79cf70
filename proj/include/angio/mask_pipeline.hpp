#pragma once

#include "angio/kernels.hpp"
#include "angio/mask.hpp"

namespace angio {

/// Clinician-style segment-of-interest marks, full-image pixel coordinates.
/// Pixel centers sit at integer coordinates throughout.
struct SoiSpec {
    Vec2 start_px;
    Vec2 end_px;
    int crop_margin = 32;

    void validate(int image_w, int image_h) const;
};

/// Rigid crop+rotate bookkeeping between full-image and patch coordinates.
/// crop_origin is the full-image point that maps to the patch center;
/// rotation_angle is the angle of the original start->end chord, so the
/// patch->full map applies R(+rotation_angle).
struct PatchTransform {
    Vec2 crop_origin = Vec2::Zero();
    double rotation_angle = 0.0;
    int patch_width = 0;
    int patch_height = 0;

    Vec2 patch_center() const {
        return Vec2((patch_width - 1) * 0.5, (patch_height - 1) * 0.5);
    }
    Vec2 full_from_patch(const Vec2& p) const;
    Vec2 patch_from_full(const Vec2& p) const;
};

/// Arc-length-ordered 2D centerline with per-point half-width, in pixels.
struct Centerline2D {
    static constexpr int kPoints = 100;
    std::vector<Vec2> points; // exactly 100
    std::vector<double> radii_px;

    void validate() const;
};

struct CropResult {
    BinaryMask patch;
    PatchTransform transform;
};

/// Crops a margin-padded box around the SOI endpoints and rotates
/// (nearest-neighbor) so the start->end chord is horizontal, start left.
CropResult crop_and_rotate(const BinaryMask& mask, const SoiSpec& soi);

struct ContourResult {
    std::vector<Vec2> polygon; // closed (last edge wraps to front), CCW
    bool multiple_components = false;
};

/// Outer boundary of the largest 8-connected component, traced on the
/// half-integer cell-corner lattice so the enclosed area equals pixel count.
ContourResult extract_contour(const BinaryMask& mask);

double polygon_area(const std::vector<Vec2>& poly);

/// Distance-transform ridge path between the endpoints, resampled to exactly
/// 100 points; radius_i is the interpolated EDT minus the half-pixel boundary
/// offset.
Centerline2D centerline_2d(const BinaryMask& mask, const Vec2& start_px, const Vec2& end_px,
                           kernels::Exec ex = kernels::Exec::serial);

Centerline2D to_full_image(const Centerline2D& cl, const PatchTransform& t);

/// Identity pairing by normalized arc length.
std::vector<std::pair<int, int>> correspond_views(const Centerline2D& a, const Centerline2D& b);

/// Bilinear sample of the EDT (in px) at a continuous point, for tests.
double edt_at(const BinaryMask& mask, const Vec2& p, kernels::Exec ex = kernels::Exec::serial);

} // namespace angio
