#pragma once

#include "catcorr/io.hpp"
#include "catcorr/render.hpp"

#include <map>
#include <optional>

namespace catcorr {

enum class SymmetryKind { None, Discrete, Continuous };

/// Rotational symmetry about an axis. `n` is the order for Discrete.
struct SymmetrySpec {
    SymmetryKind kind = SymmetryKind::None;
    int n = 0;
    Vec3 axis_point = Vec3::Zero();
    Vec3 axis_dir = Vec3::UnitY();

    void validate() const;
    /// The same symmetry expressed after applying `pose`.
    SymmetrySpec transformed(const Pose& pose) const;
};

json to_json(const SymmetrySpec& sym);
SymmetrySpec symmetry_from_json(const json& j);

/// Distance from `pred` to the symmetry orbit of `gt`.
double sym_error(const Vec3& gt, const Vec3& pred, const SymmetrySpec& sym);

struct ModalityLabel {
    bool modal = true;
    Visibility reason = Visibility::Visible;  // first failing view when amodal
};

std::string to_string(const ModalityLabel& m);

/// Everything needed to decide whether a keypoint is visible in one view.
struct ViewScene {
    Mesh object;                 // object frame
    Pose pose;
    Camera camera;
    std::vector<Mesh> occluders; // camera space
};

/// Modal iff the point is visible in both views; otherwise the query
/// view's reason wins over the target's.
ModalityLabel classify_modality(const Vec3& keypoint_query, const ViewScene& query, const Vec3& keypoint_target,
                                const ViewScene& target);

struct KeypointPair {
    std::string pair_id;
    std::string category;
    Vec3 gt_target = Vec3::Zero();  // target camera space
    Vec3 predicted = Vec3::Zero();
    bool has_prediction = true;     // false: scored as a miss
    Bounds3D target_bbox;           // target object frame
    double target_scale = 1.0;
    SymmetrySpec symmetry;          // target camera space
    ModalityLabel modality;
};

struct KeypointPair2D {
    std::string pair_id;
    std::string category;
    Vec2 gt = Vec2::Zero();
    Vec2 predicted = Vec2::Zero();
    bool has_prediction = true;
    double bbox_width = 0.0;
    double bbox_height = 0.0;
};

struct SplitScore {
    int correct = 0;
    int count = 0;
    std::optional<double> pck() const
    {
        return count > 0 ? std::optional<double>(static_cast<double>(correct) / count) : std::nullopt;
    }
};

struct CategoryReport {
    SplitScore pck2d;
    SplitScore modal;
    SplitScore amodal;
    SplitScore all;
};

struct PairScore {
    std::string pair_id;
    std::string category;
    double error = 0.0;     // +inf for missing predictions
    double threshold = 0.0;
    bool correct = false;
    ModalityLabel modality;
};

struct EvalReport {
    double threshold_ratio = 0.1;
    std::map<std::string, CategoryReport> categories;
    std::vector<PairScore> pairs;

    /// Unweighted mean of per-category PCKs over categories where the split
    /// is non-empty.
    std::optional<double> mean(SplitScore CategoryReport::*split) const;
    /// Keypoint-weighted alternative: pooled correct / pooled count.
    std::optional<double> weighted_mean(SplitScore CategoryReport::*split) const;
};

/// 3D PCK with a strict threshold of ratio * max extent of the scaled target box.
EvalReport pck(std::span<const KeypointPair> pairs, double threshold_ratio = 0.1);

/// 2D PCK slice (threshold ratio * max(bbox_w, bbox_h), no symmetry) per category.
std::map<std::string, SplitScore> pck2d(std::span<const KeypointPair2D> pairs, double threshold_ratio = 0.1);

void add_pck2d(EvalReport& report, const std::map<std::string, SplitScore>& slice);

json to_json(const EvalReport& report);
/// One row per category plus the mean row, columns 2D / 3D-modal / 3D-amodal / 3D-all.
std::string to_csv(const EvalReport& report);
std::string format_table(const EvalReport& report);

} // namespace catcorr
