#pragma once

#include "catcorr/deform.hpp"
#include "catcorr/implicit.hpp"
#include "catcorr/render.hpp"

#include <functional>
#include <map>
#include <random>

namespace catcorr {

struct LossWeights {
    double cd = 0.1;
    double mask = 2.0;
    double maskdt = 200.0;
    double sdf = 0.01;
    double def = 0.075;
    double smooth = 0.0075;

    void validate() const;
};

struct TrainConfig {
    int stage1_epochs = 20;
    int stage2_epochs = 10;
    int batch_size = 30;
    int grad_accumulation = 2;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double gamma = 0.98;
    int warmup_steps = 100;
    double lr_min = 1e-4;
    std::uint64_t seed = 0;

    // Model and rendering.
    int grid_resolution = 16;
    int sdf_layers = 5;
    int sdf_hidden = 256;
    double init_radius = 0.35;
    int deform_layers = 5;
    int deform_hidden = 256;
    int latent_dim = 64;
    double latent_init_std = 0.01;
    double tau = 1.0;
    int eikonal_samples = 256;

    LossWeights weights;

    void validate() const;
};

json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const json& j);

/// One training view of one instance.
struct TrainSample {
    std::string instance_id;
    std::vector<Vec3> gt_vertices;  // object frame
    MaskImage mask;                 // amodal
    DtImage mask_dt;
    Pose pose;
    Camera camera;
};

struct AdamState {
    VecX m;
    VecX v;
    std::int64_t step = 0;
};

struct LossRecord {
    int epoch = 0;
    int stage = 0;
    double cd = 0.0;
    double mask = 0.0;
    double maskdt = 0.0;
    double sdf = 0.0;
    double def = 0.0;
    double smooth = 0.0;
    double total = 0.0;
};

/**
 * Everything that training updates. The flat parameter vector is laid out
 * as [sdf | decoder | latents in id order].
 */
struct TrainState {
    SdfField sdf;
    DeformationModel deform;
    LatentTable latents;
    TetGrid grid;
    ExtractedMesh templ;
    AdamState adam;
    int epoch = 0;
    std::vector<LossRecord> history;

    Eigen::Index num_params() const;
    VecX pack() const;
    void unpack(const VecX& params);
    Eigen::Index latent_offset(const std::string& id) const;

    /// Evaluates the grid and re-runs marching tetrahedra.
    void extract_template();
};

TrainState init_state(const TrainConfig& config, const std::vector<std::string>& instance_ids);

struct LossValue {
    LossRecord parts;  // unweighted components, weighted total
    VecX grad;         // gradient of the total over the flat parameter vector
};

struct LossOptions {
    double tau = 1.0;
    bool deform = true;  // false: identity deformation, decoder untouched
    bool want_grad = true;
};

/**
 * Weighted sum of Chamfer, mask MSE, mask distance-transform and eikonal
 * terms for one view. Template vertices are recomputed from the current SDF
 * on the frozen topology of `state.templ`.
 */
LossValue loss_geo(const TrainSample& sample, const TrainState& state, const LossWeights& weights,
                   std::span<const Vec3> eikonal_points, const LossOptions& options);
/// loss_geo plus the deformation and smoothness regularizers.
LossValue loss_geo_reg(const TrainSample& sample, const TrainState& state, const LossWeights& weights,
                       std::span<const Vec3> eikonal_points, const LossOptions& options);

double learning_rate_at(const TrainConfig& config, std::int64_t step, int epoch);

/// One Adam update with bias correction.
void adam_step(VecX& params, const VecX& grad, AdamState& adam, const TrainConfig& config, int epoch);

struct FitCallbacks {
    /// Called once after stage 1 finishes (before any stage-2 step).
    std::function<void(const TrainState&)> after_stage1;
    std::function<void(const LossRecord&)> on_epoch;
};

TrainState fit_category(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                        const FitCallbacks& callbacks = {});
/// Continues training an existing state up to the configured epoch counts.
void fit_category(TrainState& state, const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const FitCallbacks& callbacks = {});

struct FdReport {
    double max_rel_error = 0.0;
    Eigen::Index worst_index = -1;
    bool pass = false;
};

/**
 * Central differences on `n_params` randomly chosen coordinates. Relative
 * error is |a - f| / max(|a|, |f|, abs_floor).
 */
FdReport finite_diff_check(const std::function<double(const VecX&)>& loss, const VecX& params, const VecX& analytic,
                           int n_params, double step, double tolerance, std::mt19937_64& rng,
                           double abs_floor = 1e-7);

std::string loss_history_csv(const std::vector<LossRecord>& history);

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config);
/// Throws StateMismatch when the stored pieces disagree with each other or
/// with `config`.
TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& config);
TrainConfig load_checkpoint_config(const std::filesystem::path& dir);

} // namespace catcorr
