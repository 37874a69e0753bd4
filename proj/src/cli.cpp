#include "catcorr/cli.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <iostream>
#include <sstream>

namespace catcorr {

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct RunRecord {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

void write_run_manifest(const std::filesystem::path& path, const RunRecord& r, double seconds)
{
    write_json(path, json{{"version", kSchemaVersion},
                          {"command", r.command},
                          {"config_path", r.config_path},
                          {"seed", r.seed},
                          {"inputs", r.inputs},
                          {"outputs", r.outputs},
                          {"tool_version", kToolVersion},
                          {"duration_s", seconds}});
}

std::filesystem::path sidecar(const std::filesystem::path& file)
{
    std::filesystem::path p = file;
    p += ".run.json";
    return p;
}

const ViewRecord& view_of(const Dataset& ds, const std::string& vid, const InstanceRecord** inst)
{
    const auto [id, k] = parse_view_id(vid);
    const InstanceRecord* r = ds.find(id);
    if (r == nullptr || k >= r->views.size()) {
        throw InputError("unknown view '" + vid + "'");
    }
    *inst = r;
    return r->views[k];
}

std::vector<Mesh> load_occluders(const Dataset& ds, const ViewRecord& v)
{
    std::vector<Mesh> out;
    for (const std::string& p : v.occluder_paths) {
        out.push_back(read_obj(ds.root / p));
    }
    return out;
}

struct MaskBox {
    bool empty = true;
    double width = 0.0;
    double height = 0.0;
};

MaskBox mask_box(const MaskImage& m)
{
    int c0 = m.width, c1 = -1, r0 = m.height, r1 = -1;
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
            if (m.at(c, r) >= 0.5) {
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
            }
        }
    }
    if (c1 < 0) {
        return {};
    }
    return {false, static_cast<double>(c1 - c0 + 1), static_cast<double>(r1 - r0 + 1)};
}

} // namespace

std::vector<TrainSample> load_train_samples(const Dataset& ds)
{
    std::vector<TrainSample> out;
    for (const InstanceRecord& r : ds.instances) {
        const Mesh mesh = read_obj(ds.root / r.mesh_path);
        for (const ViewRecord& v : r.views) {
            TrainSample s;
            s.instance_id = r.id;
            s.gt_vertices = mesh.vertices();
            s.mask = read_pgm(ds.root / v.amodal_mask_path);
            if (s.mask.width != v.camera.width || s.mask.height != v.camera.height) {
                throw InputError(v.amodal_mask_path + ": mask size does not match the camera");
            }
            s.mask_dt = distance_transform(s.mask);
            s.pose = v.pose;
            s.camera = v.camera;
            out.push_back(std::move(s));
        }
    }
    return out;
}

EvalReport evaluate_predictions(const Dataset& ds, const std::vector<PairResult>& predictions, double threshold_ratio)
{
    std::map<std::string, Mesh> meshes;
    std::map<std::string, MaskBox> boxes;
    std::map<std::string, std::vector<Mesh>> occluders;
    std::vector<KeypointPair> pairs3d;
    std::vector<KeypointPair2D> pairs2d;
    for (const PairResult& pr : predictions) {
        const InstanceRecord* qi = nullptr;
        const InstanceRecord* ti = nullptr;
        const ViewRecord& qv = view_of(ds, pr.pair.query_view, &qi);
        const ViewRecord& tv = view_of(ds, pr.pair.target_view, &ti);
        const auto k = static_cast<std::size_t>(pr.pair.keypoint);
        if (pr.pair.keypoint < 0 || k >= qi->keypoints.size() || k >= ti->keypoints.size()) {
            throw InputError("pair '" + pr.pair.pair_id + "' references a missing keypoint");
        }
        const Mesh& qmesh = meshes.contains(qi->id) ? meshes.at(qi->id) : (meshes[qi->id] = read_obj(ds.root / qi->mesh_path));
        const Mesh& tmesh = meshes.contains(ti->id) ? meshes.at(ti->id) : (meshes[ti->id] = read_obj(ds.root / ti->mesh_path));
        auto occ = [&](const std::string& vid, const ViewRecord& v) -> const std::vector<Mesh>& {
            auto it = occluders.find(vid);
            if (it == occluders.end()) {
                it = occluders.emplace(vid, load_occluders(ds, v)).first;
            }
            return it->second;
        };
        const ViewScene qs{qmesh, qv.pose, qv.camera, occ(pr.pair.query_view, qv)};
        const ViewScene ts{tmesh, tv.pose, tv.camera, occ(pr.pair.target_view, tv)};

        KeypointPair p;
        p.pair_id = pr.pair.pair_id;
        p.category = ds.category;
        p.gt_target = tv.pose.apply(ti->keypoints[k]);
        p.has_prediction = pr.prediction.has_value();
        p.predicted = p.has_prediction ? pr.prediction->point : Vec3::Zero();
        p.target_bbox = bounds3d(tmesh.vertices());
        p.target_scale = tv.pose.scale;
        p.symmetry = ti->symmetry.transformed(tv.pose);
        p.modality = classify_modality(qi->keypoints[k], qs, ti->keypoints[k], ts);
        pairs3d.push_back(p);

        if (p.modality.modal) {
            auto it = boxes.find(pr.pair.target_view);
            if (it == boxes.end()) {
                it = boxes.emplace(pr.pair.target_view, mask_box(read_pgm(ds.root / tv.amodal_mask_path))).first;
            }
            if (!it->second.empty) {
                KeypointPair2D q;
                q.pair_id = p.pair_id;
                q.category = p.category;
                q.gt = project_point(tv.camera, p.gt_target);
                q.has_prediction = p.has_prediction && p.predicted[2] > 0.0;
                q.predicted = q.has_prediction ? project_point(tv.camera, p.predicted) : Vec2::Zero();
                q.bbox_width = it->second.width;
                q.bbox_height = it->second.height;
                pairs2d.push_back(q);
            }
        }
    }
    EvalReport report = pck(pairs3d, threshold_ratio);
    if (!pairs2d.empty()) {
        add_pck2d(report, pck2d(pairs2d, threshold_ratio));
    }
    return report;
}

namespace {

Vec3 parse_triplet(const std::string& s)
{
    std::stringstream ss(s);
    std::string tok;
    std::vector<double> v;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) {
                throw std::invalid_argument(tok);
            }
        } catch (const std::exception&) {
            throw InputError("expected three comma-separated numbers, got '" + s + "'");
        }
    }
    if (v.size() != 3) {
        throw InputError("expected three comma-separated numbers, got '" + s + "'");
    }
    return {v[0], v[1], v[2]};
}

std::map<std::string, Bounds3D> load_merge_bounds(const std::filesystem::path& path)
{
    const json j = read_json(path);
    std::map<std::string, Bounds3D> out;
    if (j.contains("instances")) {
        const Dataset ds = dataset_from_json(j, path.parent_path());
        for (const InstanceRecord& r : ds.instances) {
            out[r.id] = bounds3d(read_obj(ds.root / r.mesh_path).vertices());
        }
        return out;
    }
    if (!j.is_object()) {
        throw InputError(path.string() + ": expected an object mapping instance ids to OBJ paths");
    }
    for (const auto& [id, p] : j.items()) {
        if (id == "version") {
            continue;
        }
        if (!p.is_string()) {
            throw InputError(path.string() + ": mesh path for '" + id + "' must be a string");
        }
        out[id] = bounds3d(read_obj(path.parent_path() / p.get<std::string>()).vertices());
    }
    return out;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Category-level 3D correspondence toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    int jobs = 0;
    std::string run_manifest;
    app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--jobs", jobs, "Maximum worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
    app.add_option("--run-manifest", run_manifest, "Where to write the run manifest");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic category dataset");
    std::string gen_spec, gen_out, gen_occ = "none";
    int gen_instances = 20, gen_views = 6;
    gen->add_option("--spec", gen_spec, "Category spec JSON")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--instances", gen_instances)->capture_default_str();
    gen->add_option("--views", gen_views)->capture_default_str();
    gen->add_option("--occluders", gen_occ, "none | random | full")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Fit the category template and deformation model");
    std::string tr_dataset, tr_config, tr_out, tr_resume, tr_snapshot, tr_csv;
    double tr_lr = 0.0;
    train->add_option("--dataset", tr_dataset, "Dataset manifest")->required();
    train->add_option("--config", tr_config, "Training config JSON")->required();
    train->add_option("--out", tr_out, "Checkpoint directory")->required();
    train->add_option("--resume", tr_resume, "Continue from this checkpoint");
    train->add_option("--lr", tr_lr, "Override the learning rate (e.g. 1e-4)");
    train->add_option("--stage1-snapshot", tr_snapshot, "Also save the state reached after stage 1");
    train->add_option("--loss-csv", tr_csv, "Loss history CSV (default <out>/loss.csv)");

    // predict
    auto* predict = app.add_subcommand("predict", "Transfer query points to target views");
    std::string pr_ckpt, pr_dataset, pr_pairs, pr_out, pr_noise;
    predict->add_option("--checkpoint", pr_ckpt)->required();
    predict->add_option("--dataset", pr_dataset, "Dataset manifest providing poses and cameras")->required();
    predict->add_option("--pairs", pr_pairs, "Pairs JSONL")->required();
    predict->add_option("--out", pr_out, "Predictions JSONL")->required();
    predict->add_option("--pose-noise", pr_noise, "rot_deg,trans,scale standard deviations");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions");
    std::string ev_pred, ev_dataset, ev_out, ev_csv;
    double ev_threshold = 0.1;
    eval->add_option("--predictions", ev_pred)->required();
    eval->add_option("--dataset", ev_dataset)->required();
    eval->add_option("--threshold", ev_threshold)->capture_default_str();
    eval->add_option("--out", ev_out, "Report JSON")->required();
    eval->add_option("--csv", ev_csv, "Optional CSV export");

    // merge
    auto* merge = app.add_subcommand("merge", "Merge two annotators' keypoint sets");
    std::string mg_a, mg_b, mg_meshes, mg_decisions, mg_out;
    double mg_threshold = 0.05;
    merge->add_option("--set-a", mg_a)->required();
    merge->add_option("--set-b", mg_b)->required();
    merge->add_option("--meshes", mg_meshes, "Dataset manifest or {id: obj path} JSON")->required();
    merge->add_option("--threshold", mg_threshold)->capture_default_str();
    merge->add_option("--decisions", mg_decisions, "Manual decisions for AMBIGUOUS keypoints");
    merge->add_option("--out", mg_out)->required();

    // huegrid
    auto* hue = app.add_subcommand("huegrid", "Color a mesh with the HueGrid scheme");
    std::string hg_mesh, hg_out;
    int hg_cells = 8;
    hue->add_option("--mesh", hg_mesh)->required();
    hue->add_option("--out", hg_out)->required();
    hue->add_option("--cells", hg_cells)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    if (jobs > 0) {
        omp_set_num_threads(jobs);
    }
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.seed = seed;
    std::filesystem::path manifest_path;
    int code = kExitOk;
    try {
        if (gen->parsed()) {
            rec.command = "gen";
            rec.config_path = gen_spec;
            rec.inputs = {gen_spec};
            if (gen_instances < 0 || gen_views < 1) {
                throw InputError("--instances must be >= 0 and --views >= 1");
            }
            const CategorySpec spec = category_spec_from_json(read_json(gen_spec));
            const Dataset ds = generate_dataset(spec, gen_out, gen_instances, gen_views,
                                                occluder_policy_from_string(gen_occ), seed);
            rec.outputs = {(std::filesystem::path(gen_out) / "manifest.json").string(),
                           (std::filesystem::path(gen_out) / "pairs.jsonl").string()};
            manifest_path = std::filesystem::path(gen_out) / "run_manifest.json";
            err << "generated " << ds.instances.size() << " instances of '" << ds.category << "'\n";
        } else if (train->parsed()) {
            rec.command = "train";
            rec.config_path = tr_config;
            rec.inputs = {tr_dataset, tr_config};
            TrainConfig config = train_config_from_json(read_json(tr_config));
            if (app.get_option("--seed")->count() > 0) {
                config.seed = seed;
            }
            rec.seed = config.seed;
            if (train->get_option("--lr")->count() > 0) {
                config.learning_rate = tr_lr;
                config.validate();
            }
            const Dataset ds = load_dataset(tr_dataset);
            const std::vector<TrainSample> samples = load_train_samples(ds);
            if (samples.empty()) {
                throw InputError("dataset has no views to train on");
            }
            TrainState state;
            if (!tr_resume.empty()) {
                rec.inputs.push_back(tr_resume);
                state = load_checkpoint(tr_resume, config);
            } else {
                std::vector<std::string> ids;
                for (const TrainSample& s : samples) {
                    ids.push_back(s.instance_id);
                }
                state = init_state(config, ids);
            }
            FitCallbacks cb;
            cb.on_epoch = [&](const LossRecord& r) {
                err << "epoch " << r.epoch << " stage " << r.stage << " total " << r.total << " cd " << r.cd
                    << " mask " << r.mask << "\n";
            };
            if (!tr_snapshot.empty()) {
                cb.after_stage1 = [&](const TrainState& st) { save_checkpoint(tr_snapshot, st, config); };
            }
            fit_category(state, samples, config, cb);
            save_checkpoint(tr_out, state, config);
            const std::filesystem::path csv = tr_csv.empty() ? std::filesystem::path(tr_out) / "loss.csv" : std::filesystem::path(tr_csv);
            write_file_atomic(csv, loss_history_csv(state.history));
            rec.outputs = {tr_out, csv.string()};
            manifest_path = std::filesystem::path(tr_out) / "run_manifest.json";
        } else if (predict->parsed()) {
            rec.command = "predict";
            rec.inputs = {pr_ckpt, pr_dataset, pr_pairs};
            PoseNoise noise;
            if (!pr_noise.empty()) {
                const Vec3 v = parse_triplet(pr_noise);
                if (v.minCoeff() < 0.0) {
                    throw InputError("--pose-noise values must be non-negative");
                }
                noise = {v[0], v[1], v[2]};
            }
            const TrainConfig config = load_checkpoint_config(pr_ckpt);
            const TrainState model = load_checkpoint(pr_ckpt, config);
            const Dataset ds = load_dataset(pr_dataset);
            const std::vector<PairRecord> pairs = read_pairs(pr_pairs);
            const auto states = build_view_states(ds, model, noise, seed);
            const std::vector<PairResult> results = batch_predict(pairs, [&](const std::string& vid) {
                const auto it = states.find(vid);
                return it == states.end() ? nullptr : &it->second;
            });
            write_file_atomic(pr_out, predictions_to_jsonl(results));
            const auto errors = std::count_if(results.begin(), results.end(),
                                              [](const PairResult& r) { return !r.prediction.has_value(); });
            err << "predicted " << results.size() - errors << " pairs, " << errors << " errors\n";
            rec.outputs = {pr_out};
            manifest_path = sidecar(pr_out);
        } else if (eval->parsed()) {
            rec.command = "eval";
            rec.inputs = {ev_pred, ev_dataset};
            if (!(ev_threshold >= 0.0)) {
                throw InputError("--threshold must be non-negative");
            }
            const Dataset ds = load_dataset(ev_dataset);
            const std::vector<PairResult> preds = read_predictions(ev_pred);
            if (preds.empty()) {
                throw InputError("no predictions to evaluate");
            }
            const EvalReport report = evaluate_predictions(ds, preds, ev_threshold);
            write_json(ev_out, to_json(report));
            rec.outputs = {ev_out};
            if (!ev_csv.empty()) {
                write_file_atomic(ev_csv, to_csv(report));
                rec.outputs.push_back(ev_csv);
            }
            err << format_table(report);
            manifest_path = sidecar(ev_out);
        } else if (merge->parsed()) {
            rec.command = "merge";
            rec.inputs = {mg_a, mg_b, mg_meshes};
            const AnnotationSet a = annotation_set_from_json(read_json(mg_a));
            const AnnotationSet b = annotation_set_from_json(read_json(mg_b));
            const MergeOutcome outcome = merge_annotations(a, b, load_merge_bounds(mg_meshes), mg_threshold);
            json result = to_json(outcome);
            std::vector<std::string> pending;
            for (const MergeEntry& e : outcome.entries) {
                if (e.status == MergeStatus::Ambiguous) {
                    pending.push_back(e.key);
                }
            }
            if (!mg_decisions.empty()) {
                rec.inputs.push_back(mg_decisions);
                const auto decisions = decisions_from_json(read_json(mg_decisions));
                result["final"] = to_json(apply_manual_decisions(outcome, a, b, decisions));
                pending.clear();
            } else if (pending.empty()) {
                result["final"] = to_json(apply_manual_decisions(outcome, a, b, {}));
            } else {
                result["final"] = nullptr;
                result["pending"] = pending;
            }
            write_json(mg_out, result);
            rec.outputs = {mg_out};
            manifest_path = sidecar(mg_out);
            if (!pending.empty()) {
                err << "AMBIGUOUS keypoints need decisions:";
                for (const std::string& k : pending) {
                    err << " " << k;
                }
                err << "\n";
                code = kExitPending;
            }
        } else if (hue->parsed()) {
            rec.command = "huegrid";
            rec.inputs = {hg_mesh};
            if (hg_cells < 1) {
                throw InputError("--cells must be at least 1");
            }
            Mesh mesh;
            try {
                mesh = read_obj(hg_mesh);
            } catch (const InputError&) {
                throw;
            } catch (const Error& e) {
                throw InputError(hg_mesh + ": " + e.what());
            }
            write_file_atomic(hg_out, huegrid_obj(mesh, hg_cells));
            rec.outputs = {hg_out};
            manifest_path = sidecar(hg_out);
        }
    } catch (const StateMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kExitState;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!run_manifest.empty()) {
        manifest_path = run_manifest;
    }
    if (!manifest_path.empty()) {
        write_run_manifest(manifest_path, rec, seconds);
    }
    return code;
}

} // namespace catcorr
