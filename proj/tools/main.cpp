#include "angio/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace angio;

namespace {

int run_phantom_gen(const std::string& out_dir, int n, uint64_t seed, double noise,
                    int image_size, const std::string& kind, bool bifurcation, double length,
                    double radius, double stenosis) {
    fs::create_directories(out_dir);
    if (n > 1) {
        SuiteOptions opts;
        opts.image_size = image_size;
        opts.noise_px = noise;
        const auto suite = generate_suite(n, seed, opts);
        nlohmann::json manifest;
        manifest["seed"] = seed;
        manifest["n"] = n;
        manifest["cases"] = nlohmann::json::array();
        for (int i = 0; i < n; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "case_%03d", i);
            write_case_bundle(suite[i].phantom, out_dir + "/" + name);
            const char* split = suite[i].split == Split::train
                                    ? "train"
                                    : (suite[i].split == Split::val ? "val" : "test");
            manifest["cases"].push_back({{"dir", name}, {"split", split}});
        }
        std::ofstream(out_dir + "/suite.json") << manifest.dump(2) << "\n";
        std::cout << "wrote " << n << " cases to " << out_dir << "\n";
        return 0;
    }

    PhantomSpec spec;
    spec.seed = seed;
    spec.length_mm = length;
    spec.base_radius_mm = radius;
    spec.noise_px = noise;
    if (kind == "straight") spec.kind = CenterlineKind::straight;
    else if (kind == "arc") spec.kind = CenterlineKind::arc;
    else if (kind == "helix") spec.kind = CenterlineKind::helix;
    else if (kind == "spline") spec.kind = CenterlineKind::spline;
    else throw InvalidInput("unknown centerline kind: " + kind);
    if (spec.kind == CenterlineKind::spline) {
        const double third = length / 3.0;
        for (int k = 0; k < 4; ++k)
            spec.spline_control.push_back(
                Vec3(0.12 * third * (k % 2 ? 1 : -1), 0.1 * third, (k - 1.5) * third));
    }
    if (stenosis > 0) spec.stenosis = StenosisSpec{0.5, stenosis, 5.0};
    if (bifurcation) spec.bifurcation = BifurcationSpec{};
    const double spacing = (1.45 * length + 10.0) / (image_size * 0.75);
    ViewGeometry g;
    g.sid_mm = 1000;
    g.sod_mm = 750;
    g.pixel_spacing_mm = spacing;
    g.image_width = g.image_height = image_size;
    g.principal_point_px = Vec2((image_size - 1) * 0.5, (image_size - 1) * 0.5);
    spec.view_a = g;
    g.primary_angle_deg = 90;
    spec.view_b = g;
    write_case_bundle(generate(spec), out_dir);
    std::cout << "wrote case to " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& dataset, const std::string& out_dir, TrainConfig cfg,
              LossConfig loss_cfg) {
    fs::create_directories(out_dir);
    std::vector<TrainCase> cases;
    std::vector<int> val_indices;

    const std::string suite_path = dataset + "/suite.json";
    if (fs::exists(suite_path)) {
        nlohmann::json manifest;
        std::ifstream(suite_path) >> manifest;
        for (const auto& entry : manifest.at("cases")) {
            const std::string split = entry.at("split");
            if (split == "test") continue; // held out
            if (split == "val") val_indices.push_back(int(cases.size()));
            cases.push_back(make_train_case(
                read_case_bundle(dataset + "/" + entry.at("dir").get<std::string>()), cfg.exec));
        }
    } else {
        std::vector<std::string> dirs;
        for (const auto& e : fs::directory_iterator(dataset))
            if (e.is_directory()) dirs.push_back(e.path().string());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) cases.push_back(make_train_case(read_case_bundle(d), cfg.exec));
    }
    if (cases.empty()) throw InvalidInput("train-sr: no cases found in " + dataset);
    cfg.val_indices = val_indices;
    cfg.checkpoint_dir = out_dir;

    const TrainResult result = train_sr(cases, cfg, loss_cfg);
    EncoderWeights enc = result.encoder;
    GcnWeights gcn = result.gcn;
    save_checkpoint(out_dir + "/checkpoint.bin", enc, gcn, cfg.seed);
    write_history_csv(result.history, out_dir + "/history.csv");
    std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
              << "; checkpoint written to " << out_dir << "/checkpoint.bin\n";
    return 0;
}

int run_evaluate(const std::string& pred_obj, const std::string& gt_csv,
                 const std::string& mask_a, const std::string& geom_a,
                 const std::string& mask_b, const std::string& geom_b,
                 const std::string& out_json) {
    const TubeMesh pred = tube_from_obj(pred_obj);
    auto [gt_cl, gt_rp] = read_centerline_csv(gt_csv);
    const TubeMesh gt_mesh = build_tube(gt_cl, gt_rp);

    MetricReport rep;
    rep.mae_mm = mae(pred.vertices, gt_mesh.vertices);
    rep.hd_mm = hausdorff(pred.vertices, gt_mesh.vertices);
    const MeshNormalization gt_norm = normalize_mesh(gt_mesh).second;
    const FScoreResult fs_res =
        f_score(gt_norm.apply(pred.vertices), gt_norm.apply(gt_mesh.vertices), rep.tau);
    rep.precision_pct = fs_res.precision_pct;
    rep.recall_pct = fs_res.recall_pct;
    rep.fscore_pct = fs_res.fscore_pct;
    if (!mask_a.empty()) {
        const OverlapResult ov_a = projection_overlap(
            pred, projection_from_geometry(view_geometry_from_json_file(geom_a)),
            read_mask_png(mask_a));
        double dice = ov_a.dice_pct, jac = ov_a.jaccard_pct;
        if (!mask_b.empty()) {
            const OverlapResult ov_b = projection_overlap(
                pred, projection_from_geometry(view_geometry_from_json_file(geom_b)),
                read_mask_png(mask_b));
            dice = 0.5 * (dice + ov_b.dice_pct);
            jac = 0.5 * (jac + ov_b.jaccard_pct);
        }
        rep.dice_pct = dice;
        rep.jaccard_pct = jac;
    }
    std::cout << rep.table();
    if (!out_json.empty()) std::ofstream(out_json) << rep.to_json() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-view vessel mesh reconstruction"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("phantom-gen", "generate synthetic phantom cases");
    std::string gen_out = "phantoms";
    int gen_n = 1;
    uint64_t gen_seed = 0;
    double gen_noise = 0, gen_length = 40, gen_radius = 2, gen_stenosis = 0;
    int gen_size = 128;
    std::string gen_kind = "arc";
    bool gen_bif = false;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--n", gen_n, "number of cases (suite when > 1)");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--noise", gen_noise, "mask boundary jitter band (px)");
    gen->add_option("--image-size", gen_size, "view image size (px)");
    gen->add_option("--kind", gen_kind, "straight|arc|helix|spline (single case)");
    gen->add_option("--length", gen_length, "vessel length (mm, single case)");
    gen->add_option("--radius", gen_radius, "base radius (mm, single case)");
    gen->add_option("--stenosis", gen_stenosis, "stenosis severity 0..0.9 (single case)");
    gen->add_flag("--bifurcation", gen_bif, "add a side branch (single case)");

    auto* cal = app.add_subcommand("calibrate", "refine detector shifts from SOI correspondences");
    std::string cal_ga, cal_gb, cal_soi, cal_out = "calibrated";
    cal->add_option("--geometry-a", cal_ga)->required();
    cal->add_option("--geometry-b", cal_gb)->required();
    cal->add_option("--soi", cal_soi)->required();
    cal->add_option("--out", cal_out, "output directory");

    auto* ctr = app.add_subcommand("centerline", "extract the 2D centerline of one view");
    std::string ctr_mask, ctr_soi, ctr_view = "a", ctr_out = "centerline2d.csv";
    ctr->add_option("--mask", ctr_mask)->required();
    ctr->add_option("--soi", ctr_soi)->required();
    ctr->add_option("--view", ctr_view, "a|b");
    ctr->add_option("--out", ctr_out);

    auto* mi = app.add_subcommand("init-mesh", "MI stage: masks -> initial tube mesh");
    std::string mi_case, mi_out = "mi_out";
    mi->add_option("--case", mi_case, "phantom case bundle directory")->required();
    mi->add_option("--out", mi_out);

    auto* tr = app.add_subcommand("train-sr", "train the surface refinement stage");
    std::string tr_dataset, tr_out = "sr_out";
    TrainConfig tr_cfg;
    LossConfig tr_loss;
    bool tr_parallel = false;
    tr->add_option("--dataset", tr_dataset, "directory of case bundles")->required();
    tr->add_option("--out", tr_out);
    tr->add_option("--epochs", tr_cfg.epochs);
    tr->add_option("--seed", tr_cfg.seed);
    tr->add_option("--lr", tr_cfg.lr_initial);
    tr->add_option("--decay", tr_cfg.lr_decay);
    tr->add_option("--val-fraction", tr_cfg.val_fraction);
    tr->add_option("--checkpoint-every", tr_cfg.checkpoint_every);
    tr->add_option("--early-stop", tr_cfg.early_stop_patience);
    tr->add_option("--threads", tr_cfg.eigen_threads);
    tr->add_option("--w-seg", tr_loss.w_seg);
    tr->add_option("--raster-resolution", tr_loss.raster_resolution);
    tr->add_flag("--parallel", tr_parallel, "parallel kernels (deterministic)");
    tr->add_flag("--verbose", tr_cfg.verbose);

    auto* rf = app.add_subcommand("refine", "SR inference on one case");
    std::string rf_case, rf_ckpt, rf_out = "refine_out";
    rf->add_option("--case", rf_case)->required();
    rf->add_option("--checkpoint", rf_ckpt)->required();
    rf->add_option("--out", rf_out);

    auto* st = app.add_subcommand("stitch", "boolean-union two reconstructed branches");
    std::string st_main, st_side, st_out = "stitched.obj";
    int st_res = 256;
    st->add_option("--main", st_main, "reconstruction output dir of the main branch")->required();
    st->add_option("--side", st_side, "reconstruction output dir of the side branch")->required();
    st->add_option("--out", st_out);
    st->add_option("--resolution", st_res, "voxels along the longest axis");

    auto* ev = app.add_subcommand("evaluate", "compare a mesh against ground truth");
    std::string ev_pred, ev_gt, ev_mask_a, ev_geom_a, ev_mask_b, ev_geom_b, ev_out;
    ev->add_option("--pred", ev_pred, "predicted tube mesh (obj)")->required();
    ev->add_option("--gt-centerline", ev_gt, "ground-truth centerline csv")->required();
    ev->add_option("--mask-a", ev_mask_a);
    ev->add_option("--geometry-a", ev_geom_a);
    ev->add_option("--mask-b", ev_mask_b);
    ev->add_option("--geometry-b", ev_geom_b);
    ev->add_option("--out", ev_out, "metrics json path");

    auto* rc = app.add_subcommand("reconstruct", "full pipeline on one case");
    std::string rc_config, rc_case, rc_ckpt, rc_out;
    bool rc_refine = false, rc_stitch = false, rc_no_calibrate = false, rc_serial = false;
    uint64_t rc_seed = 0;
    int rc_threads = 1;
    rc->add_option("--config", rc_config, "pipeline config json");
    rc->add_option("--case", rc_case, "phantom case bundle directory");
    rc->add_option("--checkpoint", rc_ckpt);
    rc->add_option("--out", rc_out);
    rc->add_option("--seed", rc_seed);
    rc->add_option("--threads", rc_threads);
    rc->add_flag("--refine", rc_refine);
    rc->add_flag("--stitch", rc_stitch);
    rc->add_flag("--no-calibrate", rc_no_calibrate);
    rc->add_flag("--serial", rc_serial);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return run_phantom_gen(gen_out, gen_n, gen_seed, gen_noise, gen_size, gen_kind,
                                   gen_bif, gen_length, gen_radius, gen_stenosis);

        if (cal->parsed()) {
            fs::create_directories(cal_out);
            const SoiSpec sa = soi_from_json_file(cal_soi, "a");
            const SoiSpec sb = soi_from_json_file(cal_soi, "b");
            const std::vector<PointCorrespondence> corr = {
                {sa.start_px, sb.start_px, CorrespondenceLabel::start},
                {sa.end_px, sb.end_px, CorrespondenceLabel::end}};
            const CalibrationResult result = refine_calibration(
                view_geometry_from_json_file(cal_ga), view_geometry_from_json_file(cal_gb), corr);
            to_json_file(result.geometry_a, cal_out + "/geometry_a.json");
            to_json_file(result.geometry_b, cal_out + "/geometry_b.json");
            nlohmann::json rep = {{"initial_cost", result.initial_cost},
                                  {"final_cost", result.final_cost},
                                  {"iterations", result.iterations},
                                  {"converged", result.converged}};
            std::ofstream(cal_out + "/calibration.json") << rep.dump(2) << "\n";
            std::cout << rep.dump(2) << "\n";
            return 0;
        }

        if (ctr->parsed()) {
            const BinaryMask mask = read_mask_png(ctr_mask);
            const SoiSpec soi = soi_from_json_file(ctr_soi, ctr_view);
            const CropResult crop = crop_and_rotate(mask, soi);
            const Centerline2D cl_patch =
                centerline_2d(crop.patch, crop.transform.patch_from_full(soi.start_px),
                              crop.transform.patch_from_full(soi.end_px));
            const Centerline2D cl = to_full_image(cl_patch, crop.transform);
            std::FILE* f = std::fopen(ctr_out.c_str(), "wb");
            if (!f) throw InvalidInput("cannot write " + ctr_out);
            std::fprintf(f, "u,v,r_px\n");
            for (int i = 0; i < Centerline2D::kPoints; ++i)
                std::fprintf(f, "%.17g,%.17g,%.17g\n", cl.points[i].x(), cl.points[i].y(),
                             cl.radii_px[i]);
            std::fclose(f);
            return 0;
        }

        if (mi->parsed()) {
            PipelineConfig cfg;
            cfg.use_case_bundle(mi_case);
            cfg.out_dir = mi_out;
            cfg.calibrate = false;
            run_reconstruct(cfg);
            return 0;
        }

        if (tr->parsed()) {
            tr_cfg.exec = tr_parallel ? kernels::Exec::parallel : kernels::Exec::serial;
            return run_train(tr_dataset, tr_out, tr_cfg, tr_loss);
        }

        if (rf->parsed()) {
            PipelineConfig cfg;
            cfg.use_case_bundle(rf_case);
            cfg.out_dir = rf_out;
            cfg.calibrate = false;
            cfg.refine = true;
            cfg.checkpoint = rf_ckpt;
            run_reconstruct(cfg);
            return 0;
        }

        if (st->parsed()) {
            BranchSet set;
            set.main.mesh = tube_from_obj(st_main + "/mesh.obj");
            auto [main_cl, main_rp] = read_centerline_csv(st_main + "/centerline.csv");
            set.main.centerline = std::move(main_cl);
            Branch side;
            side.mesh = tube_from_obj(st_side + "/mesh.obj");
            auto [side_cl, side_rp] = read_centerline_csv(st_side + "/centerline.csv");
            side.centerline = std::move(side_cl);
            set.sides.push_back(std::move(side));
            const TriMesh merged = stitch_branches(set, st_res);
            write_obj(merged, st_out);
            std::cout << "stitched mesh: " << merged.vertices.rows() << " vertices, "
                      << merged.faces.size() << " triangles\n";
            return 0;
        }

        if (ev->parsed())
            return run_evaluate(ev_pred, ev_gt, ev_mask_a, ev_geom_a, ev_mask_b, ev_geom_b,
                                ev_out);

        if (rc->parsed()) {
            PipelineConfig cfg;
            if (!rc_config.empty()) cfg = PipelineConfig::from_json_file(rc_config);
            if (!rc_case.empty()) cfg.use_case_bundle(rc_case);
            if (!rc_ckpt.empty()) cfg.checkpoint = rc_ckpt;
            if (!rc_out.empty()) cfg.out_dir = rc_out;
            if (rc_refine) cfg.refine = true;
            if (rc_stitch) cfg.stitch = true;
            if (rc_no_calibrate) cfg.calibrate = false;
            if (rc_serial) cfg.exec = kernels::Exec::serial;
            cfg.seed = rc_seed;
            cfg.eigen_threads = rc_threads;
            const ReconstructResult res = run_reconstruct(cfg);
            if (res.metrics) std::cout << res.metrics->table();
            double total = 0;
            for (const auto& [k, v] : res.stage_seconds) total += v;
            std::cout << "total pipeline time: " << total << " s\n";
            return 0;
        }
    } catch (const InvalidInput& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
