#include "catcorr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace catcorr {

void LossWeights::validate() const
{
    for (double w : {cd, mask, maskdt, sdf, def, smooth}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw InputError("loss weights must be finite and non-negative");
        }
    }
}

void TrainConfig::validate() const
{
    weights.validate();
    if (stage1_epochs < 0 || stage2_epochs < 0) {
        throw InputError("epoch counts must be non-negative");
    }
    if (batch_size < 1 || grad_accumulation < 1) {
        throw InputError("batch_size and grad_accumulation must be at least 1");
    }
    if (!(learning_rate > 0.0) || !(lr_min >= 0.0) || !(eps > 0.0) || !(gamma > 0.0) || warmup_steps < 0) {
        throw InputError("invalid optimizer settings");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(weight_decay >= 0.0)) {
        throw InputError("invalid optimizer settings");
    }
    if (grid_resolution < 1 || sdf_layers < 1 || sdf_hidden < 1 || deform_layers < 1 || deform_hidden < 1 ||
        latent_dim < 0 || eikonal_samples < 1) {
        throw InputError("invalid model shape");
    }
    if (!(tau > 0.0) || !(init_radius > 0.0) || !(latent_init_std >= 0.0)) {
        throw InputError("invalid model settings");
    }
}

json to_json(const TrainConfig& c)
{
    return json{
        {"version", kSchemaVersion},
        {"stage1_epochs", c.stage1_epochs},
        {"stage2_epochs", c.stage2_epochs},
        {"batch_size", c.batch_size},
        {"grad_accumulation", c.grad_accumulation},
        {"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"eps", c.eps},
        {"weight_decay", c.weight_decay},
        {"gamma", c.gamma},
        {"warmup_steps", c.warmup_steps},
        {"lr_min", c.lr_min},
        {"seed", c.seed},
        {"grid_resolution", c.grid_resolution},
        {"sdf_layers", c.sdf_layers},
        {"sdf_hidden", c.sdf_hidden},
        {"init_radius", c.init_radius},
        {"deform_layers", c.deform_layers},
        {"deform_hidden", c.deform_hidden},
        {"latent_dim", c.latent_dim},
        {"latent_init_std", c.latent_init_std},
        {"tau", c.tau},
        {"eikonal_samples", c.eikonal_samples},
        {"weights",
         {{"cd", c.weights.cd},
          {"mask", c.weights.mask},
          {"maskdt", c.weights.maskdt},
          {"sdf", c.weights.sdf},
          {"def", c.weights.def},
          {"smooth", c.weights.smooth}}},
    };
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(std::string("config field '") + key + "' has the wrong type");
    }
}

} // namespace

TrainConfig train_config_from_json(const json& j)
{
    if (!j.is_object()) {
        throw InputError("config must be a JSON object");
    }
    if (j.contains("version")) {
        require_schema_version(j, "train config");
    }
    static const std::set<std::string> known{
        "version",       "stage1_epochs", "stage2_epochs",  "batch_size",   "grad_accumulation", "learning_rate",
        "beta1",         "beta2",         "eps",            "weight_decay", "gamma",             "warmup_steps",
        "lr_min",        "seed",          "grid_resolution", "sdf_layers",  "sdf_hidden",        "init_radius",
        "deform_layers", "deform_hidden", "latent_dim",     "latent_init_std", "tau",            "eikonal_samples",
        "weights"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw InputError("unknown config field '" + key + "'");
        }
    }
    TrainConfig c;
    read_field(j, "stage1_epochs", c.stage1_epochs);
    read_field(j, "stage2_epochs", c.stage2_epochs);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "grad_accumulation", c.grad_accumulation);
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "beta1", c.beta1);
    read_field(j, "beta2", c.beta2);
    read_field(j, "eps", c.eps);
    read_field(j, "weight_decay", c.weight_decay);
    read_field(j, "gamma", c.gamma);
    read_field(j, "warmup_steps", c.warmup_steps);
    read_field(j, "lr_min", c.lr_min);
    read_field(j, "seed", c.seed);
    read_field(j, "grid_resolution", c.grid_resolution);
    read_field(j, "sdf_layers", c.sdf_layers);
    read_field(j, "sdf_hidden", c.sdf_hidden);
    read_field(j, "init_radius", c.init_radius);
    read_field(j, "deform_layers", c.deform_layers);
    read_field(j, "deform_hidden", c.deform_hidden);
    read_field(j, "latent_dim", c.latent_dim);
    read_field(j, "latent_init_std", c.latent_init_std);
    read_field(j, "tau", c.tau);
    read_field(j, "eikonal_samples", c.eikonal_samples);
    if (j.contains("weights")) {
        const json& w = j["weights"];
        if (!w.is_object()) {
            throw InputError("config field 'weights' must be an object");
        }
        static const std::set<std::string> known_w{"cd", "mask", "maskdt", "sdf", "def", "smooth"};
        for (const auto& [key, value] : w.items()) {
            if (!known_w.contains(key)) {
                throw InputError("unknown loss weight '" + key + "'");
            }
        }
        read_field(w, "cd", c.weights.cd);
        read_field(w, "mask", c.weights.mask);
        read_field(w, "maskdt", c.weights.maskdt);
        read_field(w, "sdf", c.weights.sdf);
        read_field(w, "def", c.weights.def);
        read_field(w, "smooth", c.weights.smooth);
    }
    c.validate();
    return c;
}

Eigen::Index TrainState::num_params() const
{
    Eigen::Index n = sdf.mlp.num_params() + deform.decoder.num_params();
    return n + static_cast<Eigen::Index>(latents.size()) * deform.latent_dim;
}

VecX TrainState::pack() const
{
    VecX p(num_params());
    Eigen::Index off = 0;
    p.segment(off, sdf.mlp.num_params()) = sdf.mlp.params();
    off += sdf.mlp.num_params();
    p.segment(off, deform.decoder.num_params()) = deform.decoder.params();
    off += deform.decoder.num_params();
    for (const auto& [id, code] : latents) {
        p.segment(off, code.size()) = code;
        off += code.size();
    }
    return p;
}

void TrainState::unpack(const VecX& p)
{
    if (p.size() != num_params()) {
        throw Error("parameter count mismatch");
    }
    Eigen::Index off = 0;
    sdf.mlp.params() = p.segment(off, sdf.mlp.num_params());
    off += sdf.mlp.num_params();
    deform.decoder.params() = p.segment(off, deform.decoder.num_params());
    off += deform.decoder.num_params();
    for (auto& [id, code] : latents) {
        code = p.segment(off, code.size());
        off += code.size();
    }
}

Eigen::Index TrainState::latent_offset(const std::string& id) const
{
    Eigen::Index off = sdf.mlp.num_params() + deform.decoder.num_params();
    for (const auto& [key, code] : latents) {
        if (key == id) {
            return off;
        }
        off += code.size();
    }
    throw Error("unknown instance '" + id + "'");
}

void TrainState::extract_template()
{
    templ = marching_tetrahedra(grid, sdf);
    if (templ.mesh.empty()) {
        throw Error("template surface vanished");
    }
}

TrainState init_state(const TrainConfig& config, const std::vector<std::string>& instance_ids)
{
    config.validate();
    std::mt19937_64 rng(config.seed);
    TrainState st;
    st.sdf = SdfField::create(config.sdf_layers, config.sdf_hidden, config.init_radius, rng);
    st.deform = DeformationModel::create(config.latent_dim, config.deform_layers, config.deform_hidden, rng);
    const std::set<std::string> ids(instance_ids.begin(), instance_ids.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const std::string& id : ids) {
        VecX code(config.latent_dim);
        for (Eigen::Index k = 0; k < code.size(); ++k) {
            code[k] = config.latent_init_std * normal(rng);
        }
        st.latents[id] = code;
    }
    st.grid = TetGrid::build(config.grid_resolution);
    st.extract_template();
    st.adam.m = VecX::Zero(st.num_params());
    st.adam.v = VecX::Zero(st.num_params());
    return st;
}

namespace {

/// Template vertices recomputed from the current SDF on the frozen topology.
struct TemplatePass {
    std::vector<int> nodes;  // distinct generating nodes, ascending
    Mlp::Cache cache;
    VecX node_sdf;           // full-length; only `nodes` entries are current
    std::vector<Vec3> vertices;
};

TemplatePass template_forward(const TrainState& st)
{
    TemplatePass tp;
    for (const auto& pv : st.templ.provenance) {
        tp.nodes.push_back(pv.node_i);
        tp.nodes.push_back(pv.node_j);
    }
    std::sort(tp.nodes.begin(), tp.nodes.end());
    tp.nodes.erase(std::unique(tp.nodes.begin(), tp.nodes.end()), tp.nodes.end());
    MatX x(3, static_cast<Eigen::Index>(tp.nodes.size()));
    for (std::size_t k = 0; k < tp.nodes.size(); ++k) {
        x.col(static_cast<Eigen::Index>(k)) = st.grid.nodes[tp.nodes[k]];
    }
    const MatX values = st.sdf.mlp.forward(x, &tp.cache);
    tp.node_sdf = VecX::Zero(static_cast<Eigen::Index>(st.grid.nodes.size()));
    for (std::size_t k = 0; k < tp.nodes.size(); ++k) {
        tp.node_sdf[tp.nodes[k]] = values(0, static_cast<Eigen::Index>(k));
    }
    tp.vertices.resize(st.templ.provenance.size());
    for (std::size_t v = 0; v < tp.vertices.size(); ++v) {
        const auto& pv = st.templ.provenance[v];
        const double si = tp.node_sdf[pv.node_i];
        const double sj = tp.node_sdf[pv.node_j];
        if (std::abs(si - sj) < 1e-12) {
            throw Error("degenerate crossing");
        }
        const double t = si / (si - sj);
        tp.vertices[v] = (1.0 - t) * st.grid.nodes[pv.node_i] + t * st.grid.nodes[pv.node_j];
    }
    return tp;
}

LossValue evaluate_loss(const TrainSample& sample, const TrainState& st, const LossWeights& w,
                        std::span<const Vec3> eikonal_points, const LossOptions& opt, bool regularize)
{
    if (st.templ.mesh.empty()) {
        throw Error("empty template");
    }
    const auto lat = st.latents.find(sample.instance_id);
    if (lat == st.latents.end()) {
        throw Error("unknown instance '" + sample.instance_id + "'");
    }
    const TemplatePass tp = template_forward(st);
    const std::vector<Vec3>& V = tp.vertices;

    DeformPass pass;
    std::vector<Vec3> D;
    if (opt.deform) {
        pass = deform_forward(st.deform, V, lat->second);
        D = pass.output;
    } else {
        D = V;
    }

    LossValue out;
    LossRecord& parts = out.parts;
    std::vector<Vec3> gD;
    parts.cd = chamfer_distance_grad(D, sample.gt_vertices, gD);
    for (Vec3& g : gD) {
        g *= w.cd;
    }

    const Mesh posed = st.templ.mesh.with_vertices(apply_pose(D, sample.pose));
    const SoftRaster raster = rasterize_soft_cached(posed, sample.camera, opt.tau);
    std::vector<double> grad_pixels;
    parts.mask = mask_mse_grad(raster.mask, sample.mask, w.mask, grad_pixels);
    parts.maskdt = mask_dt_loss_grad(raster.mask, sample.mask_dt, w.maskdt, grad_pixels);

    std::vector<Vec3> gV(V.size(), Vec3::Zero());
    if (regularize && opt.deform) {
        parts.def = deformation_reg_grad(V, D, w.def, gV, gD);
        parts.smooth = smoothness_reg_grad(V, D, st.templ.mesh.edges(), w.smooth, gV, gD);
    }

    const Eigen::Index n_sdf = st.sdf.mlp.num_params();
    VecX g_sdf = VecX::Zero(n_sdf);
    parts.sdf = eikonal_points.empty() ? 0.0 : eikonal_loss_grad(st.sdf, eikonal_points, g_sdf, w.sdf);

    parts.total = w.cd * parts.cd + w.mask * parts.mask + w.maskdt * parts.maskdt + w.sdf * parts.sdf;
    if (regularize) {
        parts.total += w.def * parts.def + w.smooth * parts.smooth;
    }
    if (!opt.want_grad) {
        return out;
    }

    const std::vector<Vec3> gX = rasterize_soft_backward(posed, sample.camera, opt.tau, raster, grad_pixels);
    const Mat3 pull = sample.pose.scale * sample.pose.rotation.transpose();
    for (std::size_t i = 0; i < gD.size(); ++i) {
        gD[i] += pull * gX[i];
    }

    out.grad = VecX::Zero(st.num_params());
    if (opt.deform) {
        VecX g_dec = VecX::Zero(st.deform.decoder.num_params());
        VecX g_code = VecX::Zero(st.deform.latent_dim);
        std::vector<Vec3> gV_from;
        deform_backward(st.deform, pass, gD, g_dec, g_code, &gV_from);
        for (std::size_t i = 0; i < gV.size(); ++i) {
            gV[i] += gV_from[i];
        }
        out.grad.segment(n_sdf, g_dec.size()) = g_dec;
        out.grad.segment(st.latent_offset(sample.instance_id), g_code.size()) = g_code;
    } else {
        for (std::size_t i = 0; i < gV.size(); ++i) {
            gV[i] += gD[i];
        }
    }

    const std::vector<VertexJacobian> jac =
        mt_vertex_jacobian(st.templ, st.grid, std::span<const double>(tp.node_sdf.data(), tp.node_sdf.size()));
    const VecX g_nodes = mt_backward(jac, gV, tp.node_sdf.size());
    MatX g_out(1, static_cast<Eigen::Index>(tp.nodes.size()));
    for (std::size_t k = 0; k < tp.nodes.size(); ++k) {
        g_out(0, static_cast<Eigen::Index>(k)) = g_nodes[tp.nodes[k]];
    }
    st.sdf.mlp.backward(tp.cache, g_out, g_sdf);
    out.grad.head(n_sdf) = g_sdf;
    return out;
}

} // namespace

LossValue loss_geo(const TrainSample& sample, const TrainState& state, const LossWeights& weights,
                   std::span<const Vec3> eikonal_points, const LossOptions& options)
{
    return evaluate_loss(sample, state, weights, eikonal_points, options, false);
}

LossValue loss_geo_reg(const TrainSample& sample, const TrainState& state, const LossWeights& weights,
                       std::span<const Vec3> eikonal_points, const LossOptions& options)
{
    return evaluate_loss(sample, state, weights, eikonal_points, options, true);
}

double learning_rate_at(const TrainConfig& c, std::int64_t step, int epoch)
{
    const double decayed = std::max(c.lr_min, c.learning_rate * std::pow(c.gamma, epoch));
    if (step < c.warmup_steps) {
        return decayed * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
    }
    return decayed;
}

namespace {

void adam_update(VecX& params, const VecX& grad, AdamState& adam, const TrainConfig& c, int epoch,
                 Eigen::Index active)
{
    if (grad.size() != params.size() || adam.m.size() != params.size() || adam.v.size() != params.size()) {
        throw Error("optimizer state does not match parameters");
    }
    if (!grad.allFinite()) {
        throw Error("gradient blowup");
    }
    const double lr = learning_rate_at(c, adam.step, epoch);
    ++adam.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(adam.step));
    for (Eigen::Index i = 0; i < active; ++i) {
        const double g = grad[i] + c.weight_decay * params[i];
        adam.m[i] = c.beta1 * adam.m[i] + (1.0 - c.beta1) * g;
        adam.v[i] = c.beta2 * adam.v[i] + (1.0 - c.beta2) * g * g;
        params[i] -= lr * (adam.m[i] / bc1) / (std::sqrt(adam.v[i] / bc2) + c.eps);
    }
}

} // namespace

void adam_step(VecX& params, const VecX& grad, AdamState& adam, const TrainConfig& config, int epoch)
{
    adam_update(params, grad, adam, config, epoch, params.size());
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Re-evaluates the generating nodes after an update; full re-extraction if a
// crossing edge lost its sign change.
void refresh_template(TrainState& st)
{
    const TemplatePass tp = template_forward(st);
    for (int n : tp.nodes) {
        st.grid.node_sdf[n] = tp.node_sdf[n] == 0.0 ? 1e-9 : tp.node_sdf[n];
    }
    if (!refresh_vertices(st.templ, st.grid)) {
        st.extract_template();
    }
}

} // namespace

void fit_category(TrainState& st, const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const FitCallbacks& callbacks)
{
    config.validate();
    if (dataset.empty()) {
        throw Error("empty dataset");
    }
    for (const TrainSample& s : dataset) {
        if (!st.latents.contains(s.instance_id)) {
            throw Error("unknown instance '" + s.instance_id + "'");
        }
    }
    if (st.adam.m.size() != st.num_params() || st.adam.v.size() != st.num_params()) {
        throw StateMismatch("optimizer state does not match parameters");
    }
    const int total_epochs = config.stage1_epochs + config.stage2_epochs;
    const std::size_t per_step = static_cast<std::size_t>(config.batch_size) * config.grad_accumulation;
    bool stage1_reported = st.epoch > config.stage1_epochs;
    auto report_stage1 = [&]() {
        if (!stage1_reported && st.epoch == config.stage1_epochs) {
            stage1_reported = true;
            if (callbacks.after_stage1) {
                st.extract_template();
                callbacks.after_stage1(st);
            }
        }
    };

    while (st.epoch < total_epochs) {
        report_stage1();
        const int stage = st.epoch < config.stage1_epochs ? 1 : 2;
        st.extract_template();

        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1, static_cast<std::uint64_t>(st.epoch), 0));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossRecord epoch_sum;
        for (std::size_t start = 0; start < order.size(); start += per_step) {
            const std::size_t count = std::min(per_step, order.size() - start);
            std::vector<LossValue> results(count);
            const auto step_id = static_cast<std::uint64_t>(st.adam.step);
            const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1)
            for (std::ptrdiff_t k = 0; k < n; ++k) {
                std::mt19937_64 rng(mix_seed(config.seed, 2, step_id, static_cast<std::uint64_t>(k)));
                const std::vector<Vec3> eik =
                    sample_eikonal_points(st.sdf.bounds, st.templ.mesh, config.eikonal_samples, rng);
                const TrainSample& sample = dataset[order[start + static_cast<std::size_t>(k)]];
                if (stage == 1) {
                    results[k] = loss_geo(sample, st, config.weights, eik, {config.tau, false, true});
                } else {
                    results[k] = loss_geo_reg(sample, st, config.weights, eik, {config.tau, true, true});
                }
            }
            VecX grad = VecX::Zero(st.num_params());
            for (const LossValue& r : results) {
                grad += r.grad;
                epoch_sum.cd += r.parts.cd;
                epoch_sum.mask += r.parts.mask;
                epoch_sum.maskdt += r.parts.maskdt;
                epoch_sum.sdf += r.parts.sdf;
                epoch_sum.def += r.parts.def;
                epoch_sum.smooth += r.parts.smooth;
                epoch_sum.total += r.parts.total;
            }
            grad /= static_cast<double>(count);
            VecX params = st.pack();
            // Stage 1 leaves the decoder and latents at their initial values.
            const Eigen::Index active = stage == 1 ? st.sdf.mlp.num_params() : params.size();
            adam_update(params, grad, st.adam, config, st.epoch, active);
            st.unpack(params);
            refresh_template(st);
        }

        const double inv = 1.0 / static_cast<double>(dataset.size());
        LossRecord rec{st.epoch,
                       stage,
                       epoch_sum.cd * inv,
                       epoch_sum.mask * inv,
                       epoch_sum.maskdt * inv,
                       epoch_sum.sdf * inv,
                       epoch_sum.def * inv,
                       epoch_sum.smooth * inv,
                       epoch_sum.total * inv};
        st.history.push_back(rec);
        ++st.epoch;
        if (callbacks.on_epoch) {
            callbacks.on_epoch(rec);
        }
    }
    report_stage1();
    st.extract_template();
}

TrainState fit_category(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                        const FitCallbacks& callbacks)
{
    if (dataset.empty()) {
        throw Error("empty dataset");
    }
    std::vector<std::string> ids;
    for (const TrainSample& s : dataset) {
        ids.push_back(s.instance_id);
    }
    TrainState st = init_state(config, ids);
    fit_category(st, dataset, config, callbacks);
    return st;
}

FdReport finite_diff_check(const std::function<double(const VecX&)>& loss, const VecX& params, const VecX& analytic,
                           int n_params, double step, double tolerance, std::mt19937_64& rng, double abs_floor)
{
    if (!(step > 0.0)) {
        throw Error("degenerate step");
    }
    if (analytic.size() != params.size()) {
        throw Error("gradient size mismatch");
    }
    FdReport report;
    if (params.size() == 0 || n_params <= 0) {
        report.pass = true;
        return report;
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(params.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (static_cast<Eigen::Index>(n_params) < params.size()) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(n_params));
        std::sort(idx.begin(), idx.end());
    }
    VecX p = params;
    for (Eigen::Index i : idx) {
        p[i] = params[i] + step;
        const double fp = loss(p);
        p[i] = params[i] - step;
        const double fm = loss(p);
        p[i] = params[i];
        const double fd = (fp - fm) / (2.0 * step);
        const double a = analytic[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), abs_floor});
        if (rel > report.max_rel_error || report.worst_index < 0) {
            report.max_rel_error = std::max(report.max_rel_error, rel);
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_error < tolerance;
    return report;
}

std::string loss_history_csv(const std::vector<LossRecord>& history)
{
    std::string out = "epoch,stage,cd,mask,maskdt,sdf,def,smooth,total\n";
    char buf[512];
    for (const LossRecord& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.stage, r.cd,
                      r.mask, r.maskdt, r.sdf, r.def, r.smooth, r.total);
        out += buf;
    }
    return out;
}

namespace {

json history_to_json(const std::vector<LossRecord>& history)
{
    json arr = json::array();
    for (const LossRecord& r : history) {
        arr.push_back({r.epoch, r.stage, r.cd, r.mask, r.maskdt, r.sdf, r.def, r.smooth, r.total});
    }
    return arr;
}

std::vector<LossRecord> history_from_json(const json& arr)
{
    std::vector<LossRecord> out;
    for (const json& e : arr) {
        if (!e.is_array() || e.size() != 9) {
            throw StateMismatch("malformed loss history");
        }
        out.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>(), e[3].get<double>(), e[4].get<double>(),
                       e[5].get<double>(), e[6].get<double>(), e[7].get<double>(), e[8].get<double>()});
    }
    return out;
}

// Fields that fix parameter shapes; a resumed run must agree on all of them.
bool same_architecture(const TrainConfig& a, const TrainConfig& b)
{
    return a.grid_resolution == b.grid_resolution && a.sdf_layers == b.sdf_layers && a.sdf_hidden == b.sdf_hidden &&
           a.deform_layers == b.deform_layers && a.deform_hidden == b.deform_hidden && a.latent_dim == b.latent_dim;
}

} // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainState& st, const TrainConfig& config)
{
    std::filesystem::create_directories(dir);
    save_sdf_field(dir / "sdf", st.sdf);
    save_deformation_model(dir / "decoder", st.deform);
    save_latents(dir / "latents", st.latents, st.deform.latent_dim);
    std::vector<double> moments(st.adam.m.data(), st.adam.m.data() + st.adam.m.size());
    moments.insert(moments.end(), st.adam.v.data(), st.adam.v.data() + st.adam.v.size());
    write_blob(dir / "optimizer", json{{"kind", "adam"}, {"step", st.adam.step}}, moments);
    write_obj(dir / "template.obj", st.templ.mesh);
    write_json(dir / "config.json", to_json(config));
    write_json(dir / "state.json",
               json{{"version", kSchemaVersion}, {"epoch", st.epoch}, {"history", history_to_json(st.history)}});
}

TrainConfig load_checkpoint_config(const std::filesystem::path& dir)
{
    return train_config_from_json(read_json(dir / "config.json"));
}

TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& config)
{
    try {
        const TrainConfig stored = load_checkpoint_config(dir);
        if (!same_architecture(stored, config)) {
            throw StateMismatch("checkpoint mismatch: model shape differs from the config");
        }
        TrainState st;
        st.sdf = load_sdf_field(dir / "sdf");
        st.deform = load_deformation_model(dir / "decoder");
        st.latents = load_latents(dir / "latents", config.latent_dim);
        const std::vector<int> sdf_widths = st.sdf.mlp.widths();
        const std::vector<int> dec_widths = st.deform.decoder.widths();
        if (static_cast<int>(sdf_widths.size()) != config.sdf_layers + 1 ||
            static_cast<int>(dec_widths.size()) != config.deform_layers + 1 || st.deform.latent_dim != config.latent_dim ||
            (config.sdf_layers > 1 && sdf_widths[1] != config.sdf_hidden) ||
            (config.deform_layers > 1 && dec_widths[1] != config.deform_hidden)) {
            throw StateMismatch("checkpoint mismatch: stored layer shapes differ from the config");
        }
        const BlobData opt = read_blob(dir / "optimizer");
        const Eigen::Index n = st.num_params();
        if (opt.header.value("kind", "") != "adam" || static_cast<Eigen::Index>(opt.values.size()) != 2 * n) {
            throw StateMismatch("checkpoint mismatch: optimizer moments do not match parameters");
        }
        st.adam.m = Eigen::Map<const VecX>(opt.values.data(), n);
        st.adam.v = Eigen::Map<const VecX>(opt.values.data() + n, n);
        st.adam.step = opt.header.at("step").get<std::int64_t>();
        const json meta = read_json(dir / "state.json");
        require_schema_version(meta, (dir / "state.json").string());
        st.epoch = meta.at("epoch").get<int>();
        st.history = history_from_json(meta.at("history"));
        if (st.epoch < 0 || st.adam.step < 0) {
            throw StateMismatch("checkpoint mismatch: negative counters");
        }
        st.grid = TetGrid::build(config.grid_resolution);
        st.extract_template();
        return st;
    } catch (const StateMismatch&) {
        throw;
    } catch (const json::exception& e) {
        throw StateMismatch(std::string("checkpoint mismatch: ") + e.what());
    } catch (const InputError& e) {
        throw StateMismatch(std::string("checkpoint mismatch: ") + e.what());
    }
}

} // namespace catcorr
