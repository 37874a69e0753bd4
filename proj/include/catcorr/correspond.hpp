#pragma once

#include "catcorr/bench.hpp"
#include "catcorr/render.hpp"
#include "catcorr/train.hpp"

#include <functional>
#include <optional>

namespace catcorr {

/// One view of one instance: its deformed template (canonical frame) and pose.
struct InstanceState {
    std::string instance_id;
    Mesh deformed_mesh;
    Pose pose;
    Camera camera;
};

struct CorrespondencePrediction {
    Vec3 point = Vec3::Zero();  // target camera space
    SurfaceIdentifier sid;
    double query_surface_distance = 0.0;
};

/// Snaps `xq` (query camera space) to the posed query mesh and decodes the
/// resulting surface identifier on the posed target mesh.
CorrespondencePrediction predict_correspondence(const Vec3& xq, const InstanceState& query,
                                                const InstanceState& target);

struct PairResult {
    PairRecord pair;
    std::optional<CorrespondencePrediction> prediction;
    std::string error;
};

using ViewLookup = std::function<const InstanceState*(const std::string& view_id)>;

/// Order-preserving; unresolvable views become per-pair errors.
std::vector<PairResult> batch_predict(std::span<const PairRecord> pairs, const ViewLookup& lookup);

struct PoseNoise {
    double rotation_deg = 0.0;
    double translation = 0.0;
    double scale = 0.0;

    bool zero() const { return rotation_deg == 0.0 && translation == 0.0 && scale == 0.0; }
};

/// Gaussian perturbation: rotation about a random axis by N(0, rotation_deg),
/// translation N(0, translation) per axis, scale times (1 + N(0, scale)).
Pose perturb_pose(const Pose& pose, const PoseNoise& noise, std::mt19937_64& rng);

/// Builds the per-view states of every dataset instance that has a latent,
/// deforming the template once per instance.
std::map<std::string, InstanceState> build_view_states(const Dataset& ds, const TrainState& model,
                                                       const PoseNoise& noise, std::uint64_t seed);

json to_json(const PairResult& r);
std::string predictions_to_jsonl(const std::vector<PairResult>& results);
std::vector<PairResult> read_predictions(const std::filesystem::path& path);

} // namespace catcorr
