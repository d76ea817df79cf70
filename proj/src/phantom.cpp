#include "angio/phantom.hpp"

#include "angio/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace angio {

namespace {

constexpr int kN = Centerline3D::kPoints;

MatX resample_by_arc_length(const MatX& dense, int n) {
    std::vector<double> cum(dense.rows(), 0.0);
    for (long i = 1; i < dense.rows(); ++i)
        cum[i] = cum[i - 1] + (dense.row(i) - dense.row(i - 1)).norm();
    MatX out(n, 3);
    long seg = 0;
    for (int i = 0; i < n; ++i) {
        const double target = cum.back() * double(i) / double(n - 1);
        while (seg + 2 < dense.rows() && cum[seg + 1] < target) ++seg;
        const double len = cum[seg + 1] - cum[seg];
        const double t = len > 0 ? (target - cum[seg]) / len : 0.0;
        out.row(i) = dense.row(seg) + t * (dense.row(seg + 1) - dense.row(seg));
    }
    return out;
}

MatX sample_local_centerline(const PhantomSpec& s) {
    MatX p(kN, 3);
    switch (s.kind) {
    case CenterlineKind::straight:
        for (int i = 0; i < kN; ++i) {
            const double u = double(i) / (kN - 1);
            p.row(i) = Vec3(0, 0, s.length_mm * (u - 0.5)).transpose();
        }
        break;
    case CenterlineKind::arc: {
        const double theta = deg2rad(s.arc_angle_deg);
        const double r = s.length_mm / theta;
        for (int i = 0; i < kN; ++i) {
            const double phi = theta * (double(i) / (kN - 1) - 0.5);
            p.row(i) = Vec3(r * (std::cos(phi) - std::cos(0.5 * theta)), 0,
                            r * std::sin(phi))
                           .transpose();
        }
        break;
    }
    case CenterlineKind::helix: {
        const double span = 2.0 * kPi * s.helix_turns;
        const double lateral = s.helix_radius_mm * span;
        if (lateral >= 0.95 * s.length_mm)
            throw InvalidInput("phantom: helix lateral travel exceeds the requested length");
        const double axial = std::sqrt(s.length_mm * s.length_mm - lateral * lateral);
        for (int i = 0; i < kN; ++i) {
            const double u = double(i) / (kN - 1);
            const double a = span * (u - 0.5);
            p.row(i) = Vec3(s.helix_radius_mm * std::cos(a), s.helix_radius_mm * std::sin(a),
                            axial * (u - 0.5))
                           .transpose();
        }
        const Vec3 mid = 0.5 * (Vec3(p.row(0)) + Vec3(p.row(kN - 1)));
        p.rowwise() -= mid.transpose();
        break;
    }
    case CenterlineKind::spline: {
        if (s.spline_control.size() < 4)
            throw InvalidInput("phantom: spline needs >= 4 control points");
        const auto& c = s.spline_control;
        const int segs = int(c.size()) - 3;
        const int dense_per_seg = 400;
        MatX dense(segs * dense_per_seg + 1, 3);
        long row = 0;
        for (int k = 0; k < segs; ++k) {
            for (int i = 0; i < dense_per_seg + (k == segs - 1 ? 1 : 0); ++i) {
                const double t = double(i) / dense_per_seg;
                const double t2 = t * t, t3 = t2 * t;
                // uniform Catmull-Rom
                const Vec3 q = 0.5 * ((2.0 * c[k + 1]) + (-c[k] + c[k + 2]) * t +
                                      (2.0 * c[k] - 5.0 * c[k + 1] + 4.0 * c[k + 2] - c[k + 3]) * t2 +
                                      (-c[k] + 3.0 * c[k + 1] - 3.0 * c[k + 2] + c[k + 3]) * t3);
                dense.row(row++) = q.transpose();
            }
        }
        MatX sampled = resample_by_arc_length(dense, kN);
        // rescale to the requested arc length
        double len = 0;
        for (int i = 1; i < kN; ++i) len += (sampled.row(i) - sampled.row(i - 1)).norm();
        const Vec3 mid = 0.5 * (Vec3(sampled.row(0)) + Vec3(sampled.row(kN - 1)));
        sampled.rowwise() -= mid.transpose();
        p = sampled * (s.length_mm / len);
        break;
    }
    }
    return p;
}

VecX radius_profile(const PhantomSpec& s) {
    VecX r(kN);
    for (int i = 0; i < kN; ++i) {
        const double u = double(i) / (kN - 1);
        double val = s.base_radius_mm;
        if (s.stenosis) {
            const double sig = s.stenosis->width_mm / s.length_mm;
            const double d = (u - s.stenosis->position) / sig;
            val *= 1.0 - s.stenosis->severity * std::exp(-0.5 * d * d);
        }
        r[i] = val;
    }
    return r;
}

void jitter_mask(BinaryMask& m, double noise_px, Rng& rng) {
    if (noise_px <= 0) return;
    std::vector<double> dt_fg(m.data.size()), dt_bg(m.data.size());
    std::vector<uint8_t> inv(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) inv[i] = m.data[i] ? 0 : 1;
    kernels::edt_sq(m.data.data(), m.width, m.height, dt_fg.data(), kernels::Exec::serial);
    kernels::edt_sq(inv.data(), m.width, m.height, dt_bg.data(), kernels::Exec::serial);
    const double band_sq = noise_px * noise_px + 1e-9;
    for (size_t i = 0; i < m.data.size(); ++i) {
        const double d = m.data[i] ? dt_fg[i] : dt_bg[i];
        if (d > 0 && d <= band_sq && rng.bernoulli(0.5)) m.data[i] = m.data[i] ? 0 : 1;
    }
}

SoiSpec project_soi(const Centerline3D& cl, const ProjectionOperator& op) {
    SoiSpec soi;
    soi.start_px = project(op, cl.points.row(0).transpose());
    soi.end_px = project(op, cl.points.row(kN - 1).transpose());
    return soi;
}

PhantomBranch make_branch(const MatX& pts, const VecX& radii, const ViewGeometry& ga,
                          const ViewGeometry& gb, double noise_px, Rng& rng,
                          kernels::Exec ex) {
    PhantomBranch br;
    br.centerline.points = pts;
    br.centerline.validate();
    br.radii.radii_mm = radii;
    br.radii.validate();
    br.mesh = build_tube(br.centerline, br.radii);

    const ProjectionOperator op_a = projection_from_geometry(ga);
    const ProjectionOperator op_b = projection_from_geometry(gb);
    const auto samples = capsule_samples(br.centerline, br.radii);
    br.mask_a = BinaryMask(ga.image_width, ga.image_height);
    br.mask_b = BinaryMask(gb.image_width, gb.image_height);
    kernels::capsule_silhouette(op_a, samples, ga.image_width, ga.image_height,
                                br.mask_a.data.data(), ex);
    kernels::capsule_silhouette(op_b, samples, gb.image_width, gb.image_height,
                                br.mask_b.data.data(), ex);
    jitter_mask(br.mask_a, noise_px, rng);
    jitter_mask(br.mask_b, noise_px, rng);

    br.soi_a = project_soi(br.centerline, op_a);
    br.soi_b = project_soi(br.centerline, op_b);
    return br;
}

} // namespace

void PhantomSpec::validate() const {
    if (!(length_mm > 0)) throw InvalidInput("phantom: length must be > 0");
    if (!(base_radius_mm > 0)) throw InvalidInput("phantom: radius must be > 0");
    if (stenosis) {
        if (!(stenosis->severity > 0 && stenosis->severity <= 0.9))
            throw InvalidInput("phantom: stenosis severity must lie in (0, 0.9]");
        if (!(stenosis->width_mm > 0) || stenosis->position < 0 || stenosis->position > 1)
            throw InvalidInput("phantom: bad stenosis placement");
    }
    if (bifurcation) {
        if (bifurcation->branch_point < 0.05 || bifurcation->branch_point > 0.95)
            throw InvalidInput("phantom: bifurcation point too close to an endpoint");
        if (!(bifurcation->branch_radius_mm > 0) || !(bifurcation->branch_length_mm > 0))
            throw InvalidInput("phantom: bad bifurcation size");
    }
    if (noise_px < 0) throw InvalidInput("phantom: negative noise");
    view_a.validate();
    view_b.validate();
}

std::vector<kernels::SphereSample> capsule_samples(const Centerline3D& cl,
                                                   const RadiusProfile& rp,
                                                   int samples_per_segment) {
    std::vector<kernels::SphereSample> out;
    out.reserve(size_t(cl.points.rows()) * samples_per_segment);
    for (long i = 0; i + 1 < cl.points.rows(); ++i) {
        for (int k = 0; k < samples_per_segment; ++k) {
            const double t = double(k) / samples_per_segment;
            const Vec3 c = (1 - t) * Vec3(cl.points.row(i)) + t * Vec3(cl.points.row(i + 1));
            const double r = (1 - t) * rp.radii_mm[i] + t * rp.radii_mm[i + 1];
            out.push_back({c, r});
        }
    }
    out.push_back({cl.points.row(cl.points.rows() - 1).transpose(),
                   rp.radii_mm[cl.points.rows() - 1]});
    return out;
}

PhantomCase generate(const PhantomSpec& spec, kernels::Exec ex) {
    spec.validate();
    Rng rng(spec.seed);

    PhantomCase c;
    c.spec = spec;
    c.geom_a = spec.view_a;
    c.geom_b = spec.view_b;

    MatX local = sample_local_centerline(spec);
    MatX world(kN, 3);
    for (int i = 0; i < kN; ++i)
        world.row(i) =
            (spec.orientation * Vec3(local.row(i).transpose()) + spec.center_offset_mm)
                .transpose();

    c.main = make_branch(world, radius_profile(spec), c.geom_a, c.geom_b, spec.noise_px, rng, ex);

    if (spec.bifurcation) {
        const auto& bf = *spec.bifurcation;
        const int ib = std::clamp(int(std::lround(bf.branch_point * (kN - 1))), 1, kN - 2);
        const Vec3 origin = world.row(ib).transpose();
        const Vec3 t = (Vec3(world.row(ib + 1)) - Vec3(world.row(ib - 1))).normalized();
        int k_min = 0;
        for (int k = 1; k < 3; ++k)
            if (std::abs(t[k]) < std::abs(t[k_min])) k_min = k;
        const Vec3 w = Vec3::Unit(k_min).cross(t).normalized();
        const double ang = deg2rad(bf.branch_angle_deg);
        const Vec3 dir = std::cos(ang) * t + std::sin(ang) * w;

        MatX side_pts(kN, 3);
        for (int i = 0; i < kN; ++i)
            side_pts.row(i) =
                (origin + dir * bf.branch_length_mm * double(i) / (kN - 1)).transpose();
        c.side = make_branch(side_pts, VecX::Constant(kN, bf.branch_radius_mm), c.geom_a,
                             c.geom_b, spec.noise_px, rng, ex);

        // clean union silhouette of both branches (2D validation reference)
        auto comb_samples = capsule_samples(c.main.centerline, c.main.radii);
        auto side_samples = capsule_samples(c.side->centerline, c.side->radii);
        comb_samples.insert(comb_samples.end(), side_samples.begin(), side_samples.end());
        c.combined_mask_a = BinaryMask(c.geom_a.image_width, c.geom_a.image_height);
        c.combined_mask_b = BinaryMask(c.geom_b.image_width, c.geom_b.image_height);
        kernels::capsule_silhouette(projection_from_geometry(c.geom_a), comb_samples,
                                    c.geom_a.image_width, c.geom_a.image_height,
                                    c.combined_mask_a->data.data(), ex);
        kernels::capsule_silhouette(projection_from_geometry(c.geom_b), comb_samples,
                                    c.geom_b.image_width, c.geom_b.image_height,
                                    c.combined_mask_b->data.data(), ex);
    }
    return c;
}

namespace {

ViewGeometry suite_view(double primary, double secondary, int image_size, double spacing) {
    ViewGeometry g;
    g.primary_angle_deg = primary;
    g.secondary_angle_deg = secondary;
    g.sid_mm = 1000.0;
    g.sod_mm = 750.0;
    g.pixel_spacing_mm = spacing;
    g.image_width = g.image_height = image_size;
    g.principal_point_px = Vec2((image_size - 1) * 0.5, (image_size - 1) * 0.5);
    return g;
}

Mat3 random_rotation(Rng& rng) {
    // random axis + angle; uniformity is not required, coverage is
    const double z = rng.uniform(-1.0, 1.0);
    const double a = rng.uniform(0.0, 2.0 * kPi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 axis(r * std::cos(a), r * std::sin(a), z);
    return Eigen::AngleAxisd(rng.uniform(0.0, kPi), axis).toRotationMatrix();
}

} // namespace

std::vector<SuiteCase> generate_suite(int n, uint64_t seed, const SuiteOptions& opts,
                                      kernels::Exec ex) {
    if (n < 1) throw InvalidInput("generate_suite: n must be >= 1");
    Rng rng(seed);

    std::vector<SuiteCase> cases;
    cases.reserve(n);
    for (int i = 0; i < n; ++i) {
        PhantomSpec s;
        s.seed = rng.fork(uint64_t(i));
        Rng local(s.seed);
        s.length_mm = local.uniform(opts.min_length_mm, opts.max_length_mm);
        s.base_radius_mm = local.uniform(opts.min_radius_mm, opts.max_radius_mm);
        const int kind = int(local.uniform_index(4));
        s.kind = CenterlineKind(kind);
        s.arc_angle_deg = local.uniform(30.0, 120.0);
        s.helix_turns = local.uniform(0.4, 1.0);
        s.helix_radius_mm = local.uniform(0.05, 0.12) * s.length_mm;
        if (s.kind == CenterlineKind::spline) {
            const double third = s.length_mm / 3.0;
            s.spline_control.clear();
            for (int k = 0; k < 4; ++k)
                s.spline_control.push_back(Vec3(local.uniform(-third * 0.45, third * 0.45),
                                                local.uniform(-third * 0.45, third * 0.45),
                                                (k - 1.5) * third));
        }
        if (local.uniform() < opts.stenosis_fraction) {
            StenosisSpec st;
            st.position = local.uniform(0.3, 0.7);
            st.severity = local.uniform(0.3, 0.7);
            st.width_mm = local.uniform(3.0, 8.0);
            s.stenosis = st;
        }
        s.orientation = random_rotation(local);
        s.center_offset_mm = Vec3(local.uniform(-5, 5), local.uniform(-5, 5), local.uniform(-5, 5));
        s.noise_px = opts.noise_px;

        const double primary_a = local.uniform(-30.0, 30.0);
        const double primary_b = primary_a + 90.0 + local.uniform(-15.0, 15.0);
        const double sec_a = local.uniform(-15.0, 15.0);
        const double sec_b = local.uniform(-15.0, 15.0);
        // field of view sized so the vessel plus margin fits
        const double fov = 1.45 * s.length_mm + 10.0;
        const double spacing = fov / (opts.image_size * 750.0 / 1000.0);
        s.view_a = suite_view(primary_a, sec_a, opts.image_size, spacing);
        s.view_b = suite_view(primary_b, sec_b, opts.image_size, spacing);

        SuiteCase sc{generate(s, ex), Split::test};
        cases.push_back(std::move(sc));
    }

    const int n_train = int(std::floor(0.7 * n));
    const int n_val = int(std::floor(0.15 * n));
    for (int i = 0; i < n; ++i)
        cases[i].split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    return cases;
}

// ----------------------------------------------------------- bundle io ----

namespace {

nlohmann::json soi_to_json(const SoiSpec& s) {
    return {{"start_px", {s.start_px.x(), s.start_px.y()}},
            {"end_px", {s.end_px.x(), s.end_px.y()}},
            {"crop_margin", s.crop_margin}};
}

SoiSpec soi_from_json(const nlohmann::json& j) {
    SoiSpec s;
    s.start_px = Vec2(j.at("start_px")[0], j.at("start_px")[1]);
    s.end_px = Vec2(j.at("end_px")[0], j.at("end_px")[1]);
    s.crop_margin = j.at("crop_margin");
    return s;
}

nlohmann::json spec_to_json(const PhantomSpec& s) {
    nlohmann::json j;
    j["kind"] = int(s.kind);
    j["length_mm"] = s.length_mm;
    j["base_radius_mm"] = s.base_radius_mm;
    if (s.stenosis)
        j["stenosis"] = {{"position", s.stenosis->position},
                         {"severity", s.stenosis->severity},
                         {"width_mm", s.stenosis->width_mm}};
    if (s.bifurcation)
        j["bifurcation"] = {{"branch_point", s.bifurcation->branch_point},
                            {"branch_angle_deg", s.bifurcation->branch_angle_deg},
                            {"branch_radius_mm", s.bifurcation->branch_radius_mm},
                            {"branch_length_mm", s.bifurcation->branch_length_mm}};
    j["noise_px"] = s.noise_px;
    j["seed"] = s.seed;
    j["arc_angle_deg"] = s.arc_angle_deg;
    j["helix_turns"] = s.helix_turns;
    j["helix_radius_mm"] = s.helix_radius_mm;
    for (const auto& c : s.spline_control)
        j["spline_control"].push_back({c.x(), c.y(), c.z()});
    std::vector<double> rot(s.orientation.data(), s.orientation.data() + 9);
    j["orientation"] = rot;
    j["center_offset_mm"] = {s.center_offset_mm.x(), s.center_offset_mm.y(),
                             s.center_offset_mm.z()};
    j["view_angles"] = {s.view_a.primary_angle_deg, s.view_a.secondary_angle_deg,
                        s.view_b.primary_angle_deg, s.view_b.secondary_angle_deg};
    j["view_spacing"] = {s.view_a.pixel_spacing_mm, s.view_b.pixel_spacing_mm};
    return j;
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
    PhantomSpec s;
    s.kind = CenterlineKind(j.at("kind").get<int>());
    s.length_mm = j.at("length_mm");
    s.base_radius_mm = j.at("base_radius_mm");
    if (j.contains("stenosis")) {
        StenosisSpec st;
        st.position = j["stenosis"]["position"];
        st.severity = j["stenosis"]["severity"];
        st.width_mm = j["stenosis"]["width_mm"];
        s.stenosis = st;
    }
    if (j.contains("bifurcation")) {
        BifurcationSpec b;
        b.branch_point = j["bifurcation"]["branch_point"];
        b.branch_angle_deg = j["bifurcation"]["branch_angle_deg"];
        b.branch_radius_mm = j["bifurcation"]["branch_radius_mm"];
        b.branch_length_mm = j["bifurcation"]["branch_length_mm"];
        s.bifurcation = b;
    }
    s.noise_px = j.at("noise_px");
    s.seed = j.at("seed");
    s.arc_angle_deg = j.at("arc_angle_deg");
    s.helix_turns = j.at("helix_turns");
    s.helix_radius_mm = j.at("helix_radius_mm");
    if (j.contains("spline_control"))
        for (const auto& c : j["spline_control"])
            s.spline_control.push_back(Vec3(c[0], c[1], c[2]));
    const auto rot = j.at("orientation").get<std::vector<double>>();
    s.orientation = Eigen::Map<const Mat3>(rot.data());
    auto off = j.at("center_offset_mm");
    s.center_offset_mm = Vec3(off[0], off[1], off[2]);
    return s;
}

} // namespace

void write_case_bundle(const PhantomCase& c, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    to_json_file(c.geom_a, dir + "/geometry_a.json");
    to_json_file(c.geom_b, dir + "/geometry_b.json");
    write_mask_png(c.main.mask_a, dir + "/mask_a.png");
    write_mask_png(c.main.mask_b, dir + "/mask_b.png");
    write_obj(c.main.mesh, dir + "/gt_mesh.obj");
    write_centerline_csv(c.main.centerline, c.main.radii, dir + "/gt_centerline.csv");

    nlohmann::json soi = {{"a", soi_to_json(c.main.soi_a)}, {"b", soi_to_json(c.main.soi_b)}};
    std::ofstream(dir + "/soi.json") << soi.dump(2) << "\n";

    nlohmann::json spec = spec_to_json(c.spec);
    std::ofstream(dir + "/spec.json") << spec.dump(2) << "\n";

    if (c.side) {
        write_mask_png(c.side->mask_a, dir + "/side_mask_a.png");
        write_mask_png(c.side->mask_b, dir + "/side_mask_b.png");
        write_obj(c.side->mesh, dir + "/side_gt_mesh.obj");
        write_centerline_csv(c.side->centerline, c.side->radii, dir + "/side_gt_centerline.csv");
        nlohmann::json ssoi = {{"a", soi_to_json(c.side->soi_a)},
                               {"b", soi_to_json(c.side->soi_b)}};
        std::ofstream(dir + "/side_soi.json") << ssoi.dump(2) << "\n";
        write_mask_png(*c.combined_mask_a, dir + "/combined_mask_a.png");
        write_mask_png(*c.combined_mask_b, dir + "/combined_mask_b.png");
    }
}

namespace {

PhantomBranch read_branch(const std::string& dir, const std::string& mask_prefix,
                          const std::string& cl_file, const std::string& soi_file) {
    PhantomBranch br;
    br.mask_a = read_mask_png(dir + "/" + mask_prefix + "_a.png");
    br.mask_b = read_mask_png(dir + "/" + mask_prefix + "_b.png");
    auto [cl, rp] = read_centerline_csv(dir + "/" + cl_file);
    br.centerline = std::move(cl);
    br.radii = std::move(rp);
    br.mesh = build_tube(br.centerline, br.radii);
    std::ifstream f(dir + "/" + soi_file);
    if (!f) throw InvalidInput("missing " + soi_file + " in " + dir);
    nlohmann::json j;
    f >> j;
    br.soi_a = soi_from_json(j.at("a"));
    br.soi_b = soi_from_json(j.at("b"));
    return br;
}

} // namespace

PhantomCase read_case_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    PhantomCase c;
    c.geom_a = view_geometry_from_json_file(dir + "/geometry_a.json");
    c.geom_b = view_geometry_from_json_file(dir + "/geometry_b.json");
    c.main = read_branch(dir, "mask", "gt_centerline.csv", "soi.json");
    {
        std::ifstream f(dir + "/spec.json");
        if (f) {
            nlohmann::json j;
            f >> j;
            c.spec = spec_from_json(j);
        }
    }
    c.spec.view_a = c.geom_a;
    c.spec.view_b = c.geom_b;
    if (fs::exists(dir + "/side_mask_a.png")) {
        c.side = read_branch(dir, "side_mask", "side_gt_centerline.csv", "side_soi.json");
        c.combined_mask_a = read_mask_png(dir + "/combined_mask_a.png");
        c.combined_mask_b = read_mask_png(dir + "/combined_mask_b.png");
    }
    return c;
}

std::string spec_hash(const PhantomSpec& spec) {
    const std::string s = spec_to_json(spec).dump();
    uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

} // namespace angio
