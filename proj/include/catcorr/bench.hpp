#pragma once

#include "catcorr/eval.hpp"
#include "catcorr/geometry.hpp"
#include "catcorr/render.hpp"

#include <map>
#include <optional>
#include <random>

namespace catcorr {

struct ParamRange {
    double min = 0.0;
    double max = 0.0;
};

/**
 * Parametric shape family. "mug": revolved body plus a torus-segment
 * handle, no symmetry. "bottle": revolved body with shoulder and neck,
 * continuous symmetry about the vertical axis.
 */
struct CategorySpec {
    std::string family;
    std::map<std::string, ParamRange> ranges;

    static CategorySpec mug();
    static CategorySpec bottle();
    static CategorySpec by_name(const std::string& family);

    void validate() const;
};

json to_json(const CategorySpec& spec);
/// Starts from the named family's defaults and overrides the given ranges.
CategorySpec category_spec_from_json(const json& j);

struct GeneratedInstance {
    std::string id;
    std::map<std::string, double> params;
    Mesh mesh;  // normalized: centered, unit largest extent
    std::vector<std::string> keypoint_names;
    std::vector<Vec3> keypoints;
    SymmetrySpec symmetry;
};

/// Samples parameters from the spec's ranges.
GeneratedInstance generate_instance(const CategorySpec& spec, std::uint64_t seed, const std::string& id);
/// Builds the instance for explicit parameters; throws if one is out of range.
GeneratedInstance build_instance(const CategorySpec& spec, const std::map<std::string, double>& params,
                                 const std::string& id);

enum class OccluderPolicy { None, Random, Full };
OccluderPolicy occluder_policy_from_string(const std::string& s);
const char* to_string(OccluderPolicy p);

struct GeneratedView {
    Pose pose;
    Camera camera;
    std::vector<double> depth;  // scene depth, +inf where empty
    MaskImage modal_mask;
    MaskImage amodal_mask;
    std::vector<Mesh> occluders;  // camera space
};

Camera default_camera();

std::vector<GeneratedView> generate_views(const Mesh& mesh, int n_views, const Camera& camera, OccluderPolicy policy,
                                          std::uint64_t seed);

// ---- dataset manifest ----

struct ViewRecord {
    Pose pose;
    Camera camera;
    std::string depth_path;
    std::string modal_mask_path;
    std::string amodal_mask_path;
    std::vector<std::string> occluder_paths;  // camera-space OBJ
};

struct InstanceRecord {
    std::string id;
    std::string mesh_path;
    std::vector<std::string> keypoint_names;
    std::vector<Vec3> keypoints;
    SymmetrySpec symmetry;
    std::vector<ViewRecord> views;
};

struct Dataset {
    std::string category;
    std::filesystem::path root;  // directory relative paths resolve against
    std::vector<InstanceRecord> instances;

    const InstanceRecord* find(const std::string& id) const;
};

/// View ids are "<instance_id>/<view_index>".
std::string view_id(const std::string& instance_id, std::size_t index);
std::pair<std::string, std::size_t> parse_view_id(const std::string& id);

json to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& manifest);
void save_dataset_manifest(const std::filesystem::path& manifest, const Dataset& ds);

json pose_to_json(const Pose& p);
Pose pose_from_json(const json& j);
json camera_to_json(const Camera& c);
Camera camera_from_json(const json& j);

/// Query pair for correspondence: a keypoint of the query view, transferred
/// to the target view.
struct PairRecord {
    std::string pair_id;
    std::string query_view;
    std::string target_view;
    int keypoint = 0;
    Vec3 xq = Vec3::Zero();  // query camera space
};

json to_json(const PairRecord& p);
PairRecord pair_from_json(const json& j);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);
std::string pairs_to_jsonl(const std::vector<PairRecord>& pairs);

/// Every view is paired with one random view of a different instance, for
/// every keypoint.
std::vector<PairRecord> generate_pairs(const Dataset& ds, std::uint64_t seed);

/// Generates meshes, views and pairs under `out_dir` and returns the manifest.
Dataset generate_dataset(const CategorySpec& spec, const std::filesystem::path& out_dir, int n_instances,
                         int n_views, OccluderPolicy policy, std::uint64_t seed);

// ---- annotation merging ----

struct AnnotationSet {
    std::string annotator;
    /// Per instance, keypoint slots; nullopt marks a keypoint not annotated there.
    std::map<std::string, std::vector<std::optional<Vec3>>> instances;

    std::size_t num_keypoints() const;
};

json to_json(const AnnotationSet& s);
AnnotationSet annotation_set_from_json(const json& j);

enum class MergeStatus { AutoAccept, AutoSplit, AutoUnmatched, Ambiguous };
const char* to_string(MergeStatus s);

/// A connected group of A/B keypoint indices that share one status.
struct MergeEntry {
    std::string key;  // e.g. "A0+B0", "A3"
    MergeStatus status = MergeStatus::Ambiguous;
    std::vector<int> a;
    std::vector<int> b;
};

struct MergedKeypoint {
    std::string name;
    std::map<std::string, std::optional<Vec3>> positions;
};

struct MergeOutcome {
    std::vector<MergeEntry> entries;
    /// Keypoints fixed by the automatic rules (AMBIGUOUS entries excluded).
    std::vector<MergedKeypoint> keypoints;
};

MergeOutcome merge_annotations(const AnnotationSet& a, const AnnotationSet& b,
                               const std::map<std::string, Bounds3D>& bounds, double threshold_ratio = 0.05);

enum class MergeAction { AcceptMean, AcceptSet1, AcceptSet2, AcceptBoth, Reject };
MergeAction merge_action_from_string(const std::string& s);

struct MergeDecision {
    std::string keypoint;
    MergeAction action = MergeAction::Reject;
};

std::vector<MergeDecision> decisions_from_json(const json& j);

/// Final keypoint set: automatic keypoints plus the resolved AMBIGUOUS
/// entries, ordered by entry.
std::vector<MergedKeypoint> apply_manual_decisions(const MergeOutcome& outcome, const AnnotationSet& a,
                                                   const AnnotationSet& b,
                                                   const std::vector<MergeDecision>& decisions);

json to_json(const MergeOutcome& outcome);
json to_json(const std::vector<MergedKeypoint>& keypoints);

// ---- HueGrid ----

struct HueGridColor {
    Vec3 rgb;
    int parity = 0;
};

HueGridColor huegrid_color(const Vec3& x, const Bounds3D& bounds, int cells);

/// OBJ with `v x y z r g b` records.
std::string huegrid_obj(const Mesh& mesh, int cells);

} // namespace catcorr
