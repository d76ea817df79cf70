#include "angio/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace angio {

void ViewGeometry::validate() const {
    if (!(sid_mm > sod_mm && sod_mm > 0.0))
        throw InvalidInput("ViewGeometry: require sid > sod > 0, got sid=" +
                           std::to_string(sid_mm) + " sod=" + std::to_string(sod_mm));
    if (!(pixel_spacing_mm > 0.0))
        throw InvalidInput("ViewGeometry: pixel_spacing must be > 0");
    if (image_width < 2 || image_height < 2)
        throw InvalidInput("ViewGeometry: image_size components must be >= 2");
    if (!std::isfinite(primary_angle_deg) || !std::isfinite(secondary_angle_deg))
        throw InvalidInput("ViewGeometry: non-finite angle");
}

ProjectionOperator projection_from_geometry(const ViewGeometry& g) {
    g.validate();

    const double a = deg2rad(g.primary_angle_deg);
    const double b = deg2rad(g.secondary_angle_deg);

    Mat3 rz;
    rz << std::cos(a), -std::sin(a), 0,
          std::sin(a),  std::cos(a), 0,
          0, 0, 1;
    Mat3 rx;
    rx << 1, 0, 0,
          0, std::cos(b), -std::sin(b),
          0, std::sin(b),  std::cos(b);
    const Mat3 r = rz * rx;

    ProjectionOperator op;
    const Vec3 src_dir = r * Vec3(0, -1, 0);
    op.source_position_mm = g.sod_mm * src_dir;
    op.ray_dir = -src_dir;
    op.detector_u = r * Vec3(1, 0, 0);
    op.detector_v = r * Vec3(0, 0, -1);
    op.focal_px = g.sid_mm / g.pixel_spacing_mm;
    op.center_px = g.principal_point_px + g.detector_shift_px;

    Eigen::Matrix<double, 3, 3> m;
    m.row(0) = op.focal_px * op.detector_u.transpose() + op.center_px.x() * op.ray_dir.transpose();
    m.row(1) = op.focal_px * op.detector_v.transpose() + op.center_px.y() * op.ray_dir.transpose();
    m.row(2) = op.ray_dir.transpose();

    op.matrix.block<3, 3>(0, 0) = m;
    op.matrix.col(3) = -m * op.source_position_mm;
    return op;
}

Vec2 project(const ProjectionOperator& op, const Vec3& p_mm) {
    Eigen::Vector4d ph;
    ph << p_mm, 1.0;
    const Vec3 h = op.matrix * ph;
    if (std::abs(h.z()) < 1e-12)
        throw NumericalError("project: point on the source plane (w ~ 0)");
    return Vec2(h.x() / h.z(), h.y() / h.z());
}

Ray backproject_ray(const ProjectionOperator& op, const Vec2& p_px) {
    const Vec2 c = p_px - op.center_px;
    Vec3 d = c.x() * op.detector_u + c.y() * op.detector_v + op.focal_px * op.ray_dir;
    return Ray{op.source_position_mm, d.normalized()};
}

TriangulationResult triangulate(const ProjectionOperator& op_a, const ProjectionOperator& op_b,
                                const Vec2& pa_px, const Vec2& pb_px) {
    if ((op_a.source_position_mm - op_b.source_position_mm).norm() <= 1.0)
        throw InvalidInput("triangulate: the two views must be distinct (sources differ by > 1mm)");

    const Ray ra = backproject_ray(op_a, pa_px);
    const Ray rb = backproject_ray(op_b, pb_px);

    // closest points of two lines; denom = sin^2(angle between rays)
    const Vec3 w0 = ra.origin - rb.origin;
    const double bdot = ra.dir.dot(rb.dir);
    const double d = ra.dir.dot(w0);
    const double e = rb.dir.dot(w0);
    const double denom = 1.0 - bdot * bdot;
    if (denom < 1e-12)
        throw NumericalError("triangulate: near-parallel rays (angle < 1e-6 rad)");

    const double s = (bdot * e - d) / denom;
    const double t = (e - bdot * d) / denom;
    const Vec3 p1 = ra.origin + s * ra.dir;
    const Vec3 p2 = rb.origin + t * rb.dir;
    return TriangulationResult{0.5 * (p1 + p2), 0.5 * (p1 - p2).norm()};
}

namespace {

VecX calibration_residuals(const ViewGeometry& g_a, const ViewGeometry& g_b,
                           const std::vector<PointCorrespondence>& corr,
                           const Eigen::Vector4d& shifts) {
    ViewGeometry a = g_a;
    ViewGeometry b = g_b;
    a.detector_shift_px = g_a.detector_shift_px + Vec2(shifts[0], shifts[1]);
    b.detector_shift_px = g_b.detector_shift_px + Vec2(shifts[2], shifts[3]);
    const ProjectionOperator op_a = projection_from_geometry(a);
    const ProjectionOperator op_b = projection_from_geometry(b);

    VecX r(4 * corr.size());
    for (size_t i = 0; i < corr.size(); ++i) {
        const auto tri = triangulate(op_a, op_b, corr[i].view_a_point, corr[i].view_b_point);
        const Vec2 ra = project(op_a, tri.point_mm) - corr[i].view_a_point;
        const Vec2 rb = project(op_b, tri.point_mm) - corr[i].view_b_point;
        r.segment<2>(4 * i) = ra;
        r.segment<2>(4 * i + 2) = rb;
    }
    return r;
}

} // namespace

CalibrationResult refine_calibration(const ViewGeometry& g_a, const ViewGeometry& g_b,
                                     const std::vector<PointCorrespondence>& corr,
                                     const CalibrationOptions& opts) {
    if (corr.size() < 2)
        throw InvalidInput("refine_calibration: need at least 2 correspondences");
    auto in_bounds = [](const Vec2& p, const ViewGeometry& g) {
        return p.x() >= 0 && p.y() >= 0 && p.x() < g.image_width && p.y() < g.image_height;
    };
    for (const auto& c : corr) {
        if (!in_bounds(c.view_a_point, g_a) || !in_bounds(c.view_b_point, g_b))
            throw InvalidInput("refine_calibration: correspondence point outside image bounds");
    }
    for (size_t i = 0; i < corr.size(); ++i)
        for (size_t j = i + 1; j < corr.size(); ++j)
            if ((corr[i].view_a_point - corr[j].view_a_point).norm() < 1e-9 &&
                (corr[i].view_b_point - corr[j].view_b_point).norm() < 1e-9)
                throw InvalidInput("refine_calibration: coincident correspondences");

    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    VecX r = calibration_residuals(g_a, g_b, corr, x);
    double cost = r.squaredNorm();

    CalibrationResult result;
    result.initial_cost = cost;

    double lambda = opts.lambda_init;
    const double fd_h = 1e-6;
    int iter = 0;
    bool converged = false;

    for (; iter < opts.max_iter; ++iter) {
        Eigen::Matrix<double, Eigen::Dynamic, 4> jac(r.size(), 4);
        for (int k = 0; k < 4; ++k) {
            Eigen::Vector4d xp = x;
            xp[k] += fd_h;
            jac.col(k) = (calibration_residuals(g_a, g_b, corr, xp) - r) / fd_h;
        }
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d jtr = jac.transpose() * r;

        bool accepted = false;
        while (!accepted) {
            const Eigen::Vector4d step =
                (jtj + lambda * Eigen::Matrix4d::Identity()).ldlt().solve(-jtr);
            const Eigen::Vector4d x_new = x + step;
            const VecX r_new = calibration_residuals(g_a, g_b, corr, x_new);
            const double cost_new = r_new.squaredNorm();
            if (cost_new <= cost) {
                const double decrease = cost - cost_new;
                x = x_new;
                r = r_new;
                cost = cost_new;
                lambda = std::max(lambda * 0.1, 1e-15);
                accepted = true;
                if (decrease < opts.cost_decrease_tol || step.norm() < opts.step_norm_tol)
                    converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e12) { // cannot improve from here
                    converged = true;
                    accepted = true;
                }
            }
        }
        if (converged) {
            ++iter;
            break;
        }
    }

    result.geometry_a = g_a;
    result.geometry_b = g_b;
    result.geometry_a.detector_shift_px = g_a.detector_shift_px + Vec2(x[0], x[1]);
    result.geometry_b.detector_shift_px = g_b.detector_shift_px + Vec2(x[2], x[3]);
    result.final_cost = cost;
    result.iterations = iter;
    result.converged = converged;
    return result;
}

void to_json_file(const ViewGeometry& g, const std::string& path) {
    nlohmann::json j;
    j["primary_angle_deg"] = g.primary_angle_deg;
    j["secondary_angle_deg"] = g.secondary_angle_deg;
    j["sid_mm"] = g.sid_mm;
    j["sod_mm"] = g.sod_mm;
    j["pixel_spacing_mm"] = g.pixel_spacing_mm;
    j["image_width"] = g.image_width;
    j["image_height"] = g.image_height;
    j["principal_point_px"] = {g.principal_point_px.x(), g.principal_point_px.y()};
    j["detector_shift_px"] = {g.detector_shift_px.x(), g.detector_shift_px.y()};
    std::ofstream f(path);
    if (!f) throw InvalidInput("cannot write geometry file: " + path);
    f << j.dump(2) << "\n";
}

ViewGeometry view_geometry_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot read geometry file: " + path);
    nlohmann::json j;
    f >> j;
    ViewGeometry g;
    g.primary_angle_deg = j.at("primary_angle_deg").get<double>();
    g.secondary_angle_deg = j.at("secondary_angle_deg").get<double>();
    g.sid_mm = j.at("sid_mm").get<double>();
    g.sod_mm = j.at("sod_mm").get<double>();
    if (j.contains("pixel_spacing_mm")) {
        g.pixel_spacing_mm = j.at("pixel_spacing_mm").get<double>();
    } else if (j.contains("pixel_spacing_mm_xy")) {
        // anisotropic spacing is rejected at parse time
        auto xy = j.at("pixel_spacing_mm_xy");
        if (std::abs(xy[0].get<double>() - xy[1].get<double>()) > 1e-12)
            throw InvalidInput("anisotropic pixel spacing is not supported: " + path);
        g.pixel_spacing_mm = xy[0].get<double>();
    }
    g.image_width = j.at("image_width").get<int>();
    g.image_height = j.at("image_height").get<int>();
    auto pp = j.at("principal_point_px");
    g.principal_point_px = Vec2(pp[0].get<double>(), pp[1].get<double>());
    if (j.contains("detector_shift_px")) {
        auto ds = j.at("detector_shift_px");
        g.detector_shift_px = Vec2(ds[0].get<double>(), ds[1].get<double>());
    }
    g.validate();
    return g;
}

} // namespace angio
