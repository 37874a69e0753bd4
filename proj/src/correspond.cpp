#include "catcorr/correspond.hpp"

#include <numbers>
#include <sstream>

namespace catcorr {

CorrespondencePrediction predict_correspondence(const Vec3& xq, const InstanceState& query,
                                                const InstanceState& target)
{
    if (query.deformed_mesh.num_faces() != target.deformed_mesh.num_faces() ||
        query.deformed_mesh.num_vertices() != target.deformed_mesh.num_vertices()) {
        throw Error("template mismatch");
    }
    const MeshProjection proj = project_to_mesh(xq, apply_pose(query.deformed_mesh, query.pose));
    CorrespondencePrediction out;
    out.sid = proj.sid;
    out.query_surface_distance = proj.distance;
    out.point = decode_surface_point(proj.sid, apply_pose(target.deformed_mesh, target.pose));
    return out;
}

std::vector<PairResult> batch_predict(std::span<const PairRecord> pairs, const ViewLookup& lookup)
{
    std::vector<PairResult> out(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        PairResult& r = out[i];
        r.pair = pairs[i];
        const InstanceState* q = lookup(r.pair.query_view);
        const InstanceState* t = lookup(r.pair.target_view);
        if (q == nullptr || t == nullptr) {
            r.error = "unknown view '" + (q == nullptr ? r.pair.query_view : r.pair.target_view) + "'";
            continue;
        }
        try {
            r.prediction = predict_correspondence(r.pair.xq, *q, *t);
        } catch (const Error& e) {
            r.error = e.what();
        }
    }
    return out;
}

Pose perturb_pose(const Pose& pose, const PoseNoise& noise, std::mt19937_64& rng)
{
    if (noise.zero()) {
        return pose;
    }
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 axis(n(rng), n(rng), n(rng));
    if (axis.norm() == 0.0) {
        axis = Vec3::UnitZ();
    }
    const double angle = noise.rotation_deg * n(rng) * std::numbers::pi / 180.0;
    Pose out = pose;
    out.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix() * pose.rotation;
    out.translation += noise.translation * Vec3(n(rng), n(rng), n(rng));
    out.scale *= std::max(1e-3, 1.0 + noise.scale * n(rng));
    return out;
}

std::map<std::string, InstanceState> build_view_states(const Dataset& ds, const TrainState& model,
                                                       const PoseNoise& noise, std::uint64_t seed)
{
    std::map<std::string, InstanceState> out;
    std::vector<const InstanceRecord*> todo;
    for (const InstanceRecord& r : ds.instances) {
        if (model.latents.contains(r.id)) {
            todo.push_back(&r);
        }
    }
    std::vector<Mesh> deformed(todo.size());
    const auto n = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        deformed[i] = deform_mesh(model.deform, model.templ.mesh, {todo[i]->id, model.latents.at(todo[i]->id)});
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
        const InstanceRecord& r = *todo[i];
        for (std::size_t k = 0; k < r.views.size(); ++k) {
            const std::string vid = view_id(r.id, k);
            // Seeded per view so the noise does not depend on iteration order.
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(std::stoull(content_hash(vid), nullptr, 16))};
            std::mt19937_64 rng(seq);
            out[vid] = InstanceState{r.id, deformed[i], perturb_pose(r.views[k].pose, noise, rng), r.views[k].camera};
        }
    }
    return out;
}

json to_json(const PairResult& r)
{
    json j{{"pair_id", r.pair.pair_id},
           {"query_view", r.pair.query_view},
           {"target_view", r.pair.target_view},
           {"keypoint", r.pair.keypoint},
           {"xq", {r.pair.xq[0], r.pair.xq[1], r.pair.xq[2]}}};
    if (r.prediction) {
        const CorrespondencePrediction& p = *r.prediction;
        j["prediction"] = {p.point[0], p.point[1], p.point[2]};
        j["sid"] = {{"face", p.sid.face}, {"bary", {p.sid.bary[0], p.sid.bary[1], p.sid.bary[2]}}};
        j["query_surface_distance"] = p.query_surface_distance;
    } else {
        j["error"] = r.error;
    }
    return j;
}

std::string predictions_to_jsonl(const std::vector<PairResult>& results)
{
    std::string out;
    for (const PairResult& r : results) {
        out += to_json(r).dump() + "\n";
    }
    return out;
}

std::vector<PairResult> read_predictions(const std::filesystem::path& path)
{
    std::istringstream in(read_file(path));
    std::vector<PairResult> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            PairResult r;
            r.pair = pair_from_json(j);
            if (j.contains("prediction")) {
                CorrespondencePrediction p;
                const auto x = j.at("prediction").get<std::array<double, 3>>();
                p.point = Vec3(x[0], x[1], x[2]);
                if (j.contains("sid")) {
                    p.sid.face = j["sid"].at("face").get<int>();
                    const auto b = j["sid"].at("bary").get<std::array<double, 3>>();
                    p.sid.bary = Vec3(b[0], b[1], b[2]);
                }
                p.query_surface_distance = j.value("query_surface_distance", 0.0);
                r.prediction = p;
            } else {
                r.error = j.value("error", "missing prediction");
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace catcorr
