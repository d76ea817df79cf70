#include "angio/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace angio {

namespace {

nlohmann::json soi_json(const SoiSpec& s) {
    return {{"start_px", {s.start_px.x(), s.start_px.y()}},
            {"end_px", {s.end_px.x(), s.end_px.y()}},
            {"crop_margin", s.crop_margin}};
}

SoiSpec soi_parse(const nlohmann::json& j) {
    SoiSpec s;
    s.start_px = Vec2(j.at("start_px")[0], j.at("start_px")[1]);
    s.end_px = Vec2(j.at("end_px")[0], j.at("end_px")[1]);
    if (j.contains("crop_margin")) s.crop_margin = j.at("crop_margin");
    return s;
}

double fnv_hash_str(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return double(h >> 12); // fits a double exactly
}

struct StageTimer {
    std::map<std::string, double>& sink;
    std::string name;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    StageTimer(std::map<std::string, double>& s, std::string n) : sink(s), name(std::move(n)) {}
    ~StageTimer() {
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        sink[name] += dt;
        std::cerr << "[stage] " << name << ": " << dt << " s\n";
    }
};

} // namespace

SoiSpec soi_from_json_file(const std::string& path, const std::string& view) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot read soi file: " + path);
    nlohmann::json j;
    f >> j;
    return soi_parse(j.at(view));
}

void soi_pair_to_json_file(const SoiSpec& a, const SoiSpec& b, const std::string& path) {
    nlohmann::json j = {{"a", soi_json(a)}, {"b", soi_json(b)}};
    std::ofstream f(path);
    if (!f) throw InvalidInput("cannot write soi file: " + path);
    f << j.dump(2) << "\n";
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot read config: " + path);
    nlohmann::json j;
    f >> j;
    PipelineConfig c;
    if (j.contains("case_bundle")) c.use_case_bundle(j.at("case_bundle"));
    auto get = [&](const char* k, std::string& dst) {
        if (j.contains(k)) dst = j.at(k).get<std::string>();
    };
    get("mask_a", c.mask_a);
    get("mask_b", c.mask_b);
    get("geometry_a", c.geometry_a);
    get("geometry_b", c.geometry_b);
    get("soi", c.soi);
    get("side_mask_a", c.side_mask_a);
    get("side_mask_b", c.side_mask_b);
    get("side_soi", c.side_soi);
    get("gt_centerline", c.gt_centerline);
    get("checkpoint", c.checkpoint);
    get("out_dir", c.out_dir);
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("calibrate")) c.calibrate = j.at("calibrate");
    if (j.contains("refine")) c.refine = j.at("refine");
    if (j.contains("stitch")) c.stitch = j.at("stitch");
    if (j.contains("stitch_resolution")) c.stitch_resolution = j.at("stitch_resolution");
    if (j.contains("parallel")) c.exec = j.at("parallel").get<bool>() ? kernels::Exec::parallel
                                                                      : kernels::Exec::serial;
    if (j.contains("eigen_threads")) c.eigen_threads = j.at("eigen_threads");
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        if (l.contains("w_norm")) c.loss.w_norm = l.at("w_norm");
        if (l.contains("w_edge")) c.loss.w_edge = l.at("w_edge");
        if (l.contains("w_lap")) c.loss.w_lap = l.at("w_lap");
        if (l.contains("w_seg")) c.loss.w_seg = l.at("w_seg");
        if (l.contains("raster_sigma")) c.loss.raster_sigma = l.at("raster_sigma");
        if (l.contains("raster_resolution")) c.loss.raster_resolution = l.at("raster_resolution");
        if (l.contains("edge_relative")) c.loss.edge_relative = l.at("edge_relative");
    }
    return c;
}

std::string PipelineConfig::to_json() const {
    nlohmann::json j;
    j["mask_a"] = mask_a;
    j["mask_b"] = mask_b;
    j["geometry_a"] = geometry_a;
    j["geometry_b"] = geometry_b;
    j["soi"] = soi;
    j["side_mask_a"] = side_mask_a;
    j["side_mask_b"] = side_mask_b;
    j["side_soi"] = side_soi;
    j["gt_centerline"] = gt_centerline;
    j["checkpoint"] = checkpoint;
    j["out_dir"] = out_dir;
    j["seed"] = seed;
    j["calibrate"] = calibrate;
    j["refine"] = refine;
    j["stitch"] = stitch;
    j["stitch_resolution"] = stitch_resolution;
    j["parallel"] = exec == kernels::Exec::parallel;
    j["eigen_threads"] = eigen_threads;
    j["loss"] = {{"w_norm", loss.w_norm},
                 {"w_edge", loss.w_edge},
                 {"w_lap", loss.w_lap},
                 {"w_seg", loss.w_seg},
                 {"raster_sigma", loss.raster_sigma},
                 {"raster_resolution", loss.raster_resolution},
                 {"edge_relative", loss.edge_relative}};
    return j.dump(2);
}

void PipelineConfig::use_case_bundle(const std::string& dir) {
    mask_a = dir + "/mask_a.png";
    mask_b = dir + "/mask_b.png";
    geometry_a = dir + "/geometry_a.json";
    geometry_b = dir + "/geometry_b.json";
    soi = dir + "/soi.json";
    gt_centerline = dir + "/gt_centerline.csv";
    namespace fs = std::filesystem;
    if (fs::exists(dir + "/side_mask_a.png")) {
        side_mask_a = dir + "/side_mask_a.png";
        side_mask_b = dir + "/side_mask_b.png";
        side_soi = dir + "/side_soi.json";
    }
}

void PipelineConfig::validate() const {
    namespace fs = std::filesystem;
    auto require = [](const std::string& p, const char* what) {
        if (p.empty()) throw InvalidInput(std::string("config: missing ") + what);
        if (!fs::exists(p))
            throw InvalidInput(std::string("config: ") + what + " does not exist: " + p);
    };
    require(mask_a, "mask_a");
    require(mask_b, "mask_b");
    require(geometry_a, "geometry_a");
    require(geometry_b, "geometry_b");
    require(soi, "soi");
    if (refine) {
        if (checkpoint.empty())
            throw InvalidInput("config: refine requires a checkpoint (or run train-sr first)");
        require(checkpoint, "checkpoint");
    }
    if (stitch) {
        require(side_mask_a, "side_mask_a");
        require(side_mask_b, "side_mask_b");
        require(side_soi, "side_soi");
    }
    if (!gt_centerline.empty()) require(gt_centerline, "gt_centerline");
    if (out_dir.empty()) throw InvalidInput("config: missing out_dir");
    loss.validate();
}

BranchRecon mi_reconstruct(const BinaryMask& mask_a, const BinaryMask& mask_b,
                           const SoiSpec& soi_a, const SoiSpec& soi_b, const ViewGeometry& g_a,
                           const ViewGeometry& g_b, kernels::Exec ex) {
    const CropResult crop_a = crop_and_rotate(mask_a, soi_a);
    const CropResult crop_b = crop_and_rotate(mask_b, soi_b);

    const Centerline2D cl_patch_a =
        centerline_2d(crop_a.patch, crop_a.transform.patch_from_full(soi_a.start_px),
                      crop_a.transform.patch_from_full(soi_a.end_px), ex);
    const Centerline2D cl_patch_b =
        centerline_2d(crop_b.patch, crop_b.transform.patch_from_full(soi_b.start_px),
                      crop_b.transform.patch_from_full(soi_b.end_px), ex);

    const Centerline2D cl_a = to_full_image(cl_patch_a, crop_a.transform);
    const Centerline2D cl_b = to_full_image(cl_patch_b, crop_b.transform);
    (void)correspond_views(cl_a, cl_b); // identity pairing by arc length

    BranchRecon out;
    BackProjectionResult bp = back_project_centerline(cl_a, cl_b, g_a, g_b);
    out.centerline = std::move(bp.centerline);
    out.radii = std::move(bp.radii);
    out.max_triangulation_residual_mm = bp.max_triangulation_residual_mm;
    out.mi_mesh = build_tube(out.centerline, out.radii);
    out.final_mesh = out.mi_mesh;
    out.normalization = normalize_mesh(out.mi_mesh).second;
    return out;
}

TrainCase make_train_case(const PhantomCase& c, kernels::Exec ex) {
    BranchRecon mi = mi_reconstruct(c.main.mask_a, c.main.mask_b, c.main.soi_a, c.main.soi_b,
                                    c.geom_a, c.geom_b, ex);
    TrainCase tc;
    tc.mask_a = c.main.mask_a;
    tc.mask_b = c.main.mask_b;
    tc.geom_a = c.geom_a;
    tc.geom_b = c.geom_b;
    tc.normalization = mi.normalization;
    tc.mi_mesh_normalized = mi.mi_mesh;
    tc.mi_mesh_normalized.vertices = mi.normalization.apply(mi.mi_mesh.vertices);
    tc.gt_mesh_normalized = c.main.mesh;
    tc.gt_mesh_normalized.vertices = mi.normalization.apply(c.main.mesh.vertices);
    return tc;
}

namespace {

BranchRecon reconstruct_branch(const PipelineConfig& cfg, const BinaryMask& mask_a,
                               const BinaryMask& mask_b, const SoiSpec& soi_a,
                               const SoiSpec& soi_b, const ViewGeometry& g_a,
                               const ViewGeometry& g_b, Checkpoint* ck,
                               std::map<std::string, double>& times, const char* tag) {
    BranchRecon br;
    {
        StageTimer t(times, std::string("mi_") + tag);
        br = mi_reconstruct(mask_a, mask_b, soi_a, soi_b, g_a, g_b, cfg.exec);
    }
    if (cfg.refine && ck) {
        StageTimer t(times, std::string("refine_") + tag);
        TrainCase tc;
        tc.mask_a = mask_a;
        tc.mask_b = mask_b;
        tc.geom_a = g_a;
        tc.geom_b = g_b;
        tc.normalization = br.normalization;
        tc.mi_mesh_normalized = br.mi_mesh;
        tc.mi_mesh_normalized.vertices = br.normalization.apply(br.mi_mesh.vertices);
        tc.gt_mesh_normalized = tc.mi_mesh_normalized; // unused during inference
        TubeMesh refined_norm = sr_refine(tc, ck->encoder, ck->gcn, cfg.exec);
        br.final_mesh = refined_norm;
        br.final_mesh.vertices = br.normalization.invert(refined_norm.vertices);
    }
    return br;
}

} // namespace

ReconstructResult run_reconstruct(const PipelineConfig& cfg) {
    cfg.validate();
    Eigen::setNbThreads(cfg.eigen_threads);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    ReconstructResult res;

    const BinaryMask mask_a = read_mask_png(cfg.mask_a);
    const BinaryMask mask_b = read_mask_png(cfg.mask_b);
    ViewGeometry g_a = view_geometry_from_json_file(cfg.geometry_a);
    ViewGeometry g_b = view_geometry_from_json_file(cfg.geometry_b);
    const SoiSpec soi_a = soi_from_json_file(cfg.soi, "a");
    const SoiSpec soi_b = soi_from_json_file(cfg.soi, "b");

    if (cfg.calibrate) {
        StageTimer t(res.stage_seconds, "calibrate");
        const std::vector<PointCorrespondence> corr = {
            {soi_a.start_px, soi_b.start_px, CorrespondenceLabel::start},
            {soi_a.end_px, soi_b.end_px, CorrespondenceLabel::end}};
        res.calibration = refine_calibration(g_a, g_b, corr);
        g_a = res.calibration->geometry_a;
        g_b = res.calibration->geometry_b;
    }

    Checkpoint ck;
    if (cfg.refine) ck = load_checkpoint(cfg.checkpoint);

    res.main = reconstruct_branch(cfg, mask_a, mask_b, soi_a, soi_b, g_a, g_b,
                                  cfg.refine ? &ck : nullptr, res.stage_seconds, "main");

    if (!cfg.side_mask_a.empty()) {
        const BinaryMask smask_a = read_mask_png(cfg.side_mask_a);
        const BinaryMask smask_b = read_mask_png(cfg.side_mask_b);
        const SoiSpec ssoi_a = soi_from_json_file(cfg.side_soi, "a");
        const SoiSpec ssoi_b = soi_from_json_file(cfg.side_soi, "b");
        res.side = reconstruct_branch(cfg, smask_a, smask_b, ssoi_a, ssoi_b, g_a, g_b,
                                      cfg.refine ? &ck : nullptr, res.stage_seconds, "side");
    }

    if (cfg.stitch && res.side) {
        StageTimer t(res.stage_seconds, "stitch");
        BranchSet set;
        set.main = Branch{res.main.final_mesh, res.main.centerline};
        set.sides.push_back(Branch{res.side->final_mesh, res.side->centerline});
        res.stitched = stitch_branches(set, cfg.stitch_resolution, cfg.exec);
    }

    if (!cfg.gt_centerline.empty()) {
        StageTimer t(res.stage_seconds, "metrics");
        auto [gt_cl, gt_rp] = read_centerline_csv(cfg.gt_centerline);
        const TubeMesh gt_mesh = build_tube(gt_cl, gt_rp);
        MetricReport rep;
        rep.mae_mm = mae(res.main.final_mesh.vertices, gt_mesh.vertices, cfg.exec);
        rep.hd_mm = hausdorff(res.main.final_mesh.vertices, gt_mesh.vertices, cfg.exec);
        const MeshNormalization gt_norm = normalize_mesh(gt_mesh).second;
        const FScoreResult fs_res =
            f_score(gt_norm.apply(res.main.final_mesh.vertices),
                    gt_norm.apply(gt_mesh.vertices), rep.tau, cfg.exec);
        rep.precision_pct = fs_res.precision_pct;
        rep.recall_pct = fs_res.recall_pct;
        rep.fscore_pct = fs_res.fscore_pct;
        const OverlapResult ov_a =
            projection_overlap(res.main.final_mesh, projection_from_geometry(g_a), mask_a);
        const OverlapResult ov_b =
            projection_overlap(res.main.final_mesh, projection_from_geometry(g_b), mask_b);
        rep.dice_pct = 0.5 * (ov_a.dice_pct + ov_b.dice_pct);
        rep.jaccard_pct = 0.5 * (ov_a.jaccard_pct + ov_b.jaccard_pct);
        res.metrics = rep;
    }

    // artifacts
    write_obj(res.main.mi_mesh, cfg.out_dir + "/mi_mesh.obj");
    write_obj(res.main.final_mesh, cfg.out_dir + "/mesh.obj");
    write_centerline_csv(res.main.centerline, res.main.radii, cfg.out_dir + "/centerline.csv");
    to_json_file(g_a, cfg.out_dir + "/geometry_a_used.json");
    to_json_file(g_b, cfg.out_dir + "/geometry_b_used.json");
    if (res.side) {
        write_obj(res.side->final_mesh, cfg.out_dir + "/side_mesh.obj");
        write_centerline_csv(res.side->centerline, res.side->radii,
                             cfg.out_dir + "/side_centerline.csv");
    }
    if (res.stitched) write_obj(*res.stitched, cfg.out_dir + "/stitched.obj");
    if (res.metrics)
        std::ofstream(cfg.out_dir + "/metrics.json") << res.metrics->to_json() << "\n";

    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(cfg.to_json());
    manifest["config_hash"] = fnv_hash_str(cfg.to_json());
    manifest["seed"] = cfg.seed;
    manifest["version"] = "angio 0.1.0";
    manifest["inputs"] = {cfg.mask_a, cfg.mask_b, cfg.geometry_a, cfg.geometry_b, cfg.soi};
    std::ofstream(cfg.out_dir + "/manifest.json") << manifest.dump(2) << "\n";

    return res;
}

TubeMesh tube_from_obj(const std::string& path, int slots) {
    const TriMesh tri = read_obj(path); // fan-triangulated quads
    const long n = tri.vertices.rows();
    if (n % slots != 0) throw InvalidInput("tube_from_obj: vertex count not a multiple of slots");
    return make_tube_topology(int(n / slots), slots, tri.vertices);
}

} // namespace angio
