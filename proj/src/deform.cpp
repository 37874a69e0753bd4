#include "catcorr/deform.hpp"

#include <cmath>

namespace catcorr {

DeformationModel DeformationModel::create(int latent_dim, int layers, int hidden, std::mt19937_64& rng)
{
    if (latent_dim < 0 || layers < 1) {
        throw Error("bad deformation model shape");
    }
    std::vector<int> widths{3 + latent_dim};
    for (int k = 0; k < layers - 1; ++k) {
        widths.push_back(hidden);
    }
    widths.push_back(6);
    DeformationModel m;
    // Softplus units here drift negative under Adam until the last hidden layer is
    // dead and the latents get no gradient; tanh stays centred.
    m.decoder = Mlp(widths, kDecoderActivation, 1.0);
    m.latent_dim = latent_dim;
    m.decoder.init_uniform(rng);
    m.decoder.zero_last_layer();
    return m;
}

namespace {

void check_code(const DeformationModel& model, const VecX& code)
{
    if (code.size() != model.latent_dim) {
        throw Error("latent dimension mismatch");
    }
    if (!code.allFinite()) {
        throw Error("non-finite latent code");
    }
}

} // namespace

DeformPass deform_forward(const DeformationModel& model, std::span<const Vec3> vertices, const VecX& code)
{
    check_code(model, code);
    const auto n = static_cast<Eigen::Index>(vertices.size());
    MatX x(3 + model.latent_dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.block<3, 1>(0, i) = vertices[static_cast<std::size_t>(i)];
        x.block(3, i, model.latent_dim, 1) = code;
    }
    DeformPass pass;
    pass.input.assign(vertices.begin(), vertices.end());
    const MatX raw = n > 0 ? model.decoder.forward(x, &pass.cache) : MatX(6, 0);
    pass.alpha = raw.topRows(3).array().exp().matrix();
    pass.output.resize(vertices.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        pass.output[static_cast<std::size_t>(i)] =
            pass.alpha.col(i).cwiseProduct(vertices[static_cast<std::size_t>(i)]) + raw.block<3, 1>(3, i);
    }
    return pass;
}

void deform_backward(const DeformationModel& model, const DeformPass& pass, std::span<const Vec3> grad_output,
                     VecX& grad_decoder, VecX& grad_code, std::vector<Vec3>* grad_input)
{
    const auto n = static_cast<Eigen::Index>(pass.input.size());
    if (grad_output.size() != pass.input.size()) {
        throw Error("gradient count mismatch");
    }
    if (grad_decoder.size() != model.decoder.num_params()) {
        grad_decoder = VecX::Zero(model.decoder.num_params());
    }
    if (grad_code.size() != model.latent_dim) {
        grad_code = VecX::Zero(model.latent_dim);
    }
    if (n == 0) {
        return;
    }
    MatX graw(6, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3& g = grad_output[static_cast<std::size_t>(i)];
        const Vec3& v = pass.input[static_cast<std::size_t>(i)];
        graw.block<3, 1>(0, i) = g.cwiseProduct(v).cwiseProduct(pass.alpha.col(i));
        graw.block<3, 1>(3, i) = g;
    }
    const MatX gx = model.decoder.backward(pass.cache, graw, grad_decoder);
    grad_code += gx.bottomRows(model.latent_dim).rowwise().sum();
    if (grad_input) {
        grad_input->resize(pass.input.size(), Vec3::Zero());
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec3& g = grad_output[static_cast<std::size_t>(i)];
            (*grad_input)[static_cast<std::size_t>(i)] += g.cwiseProduct(pass.alpha.col(i)) + gx.block<3, 1>(0, i);
        }
    }
}

DeformedVertex deform_vertex(const DeformationModel& model, const Vec3& v, const InstanceLatent& latent)
{
    const std::array<Vec3, 1> in{v};
    const DeformPass pass = deform_forward(model, in, latent.code);
    const Vec3 alpha = pass.alpha.col(0);
    return {pass.output[0], alpha, pass.output[0] - alpha.cwiseProduct(v)};
}

Mesh deform_mesh(const DeformationModel& model, const Mesh& mesh, const InstanceLatent& latent)
{
    return mesh.with_vertices(deform_forward(model, mesh.vertices(), latent.code).output);
}

double deformation_reg_grad(std::span<const Vec3> templ, std::span<const Vec3> deformed, double weight,
                            std::vector<Vec3>& grad_templ, std::vector<Vec3>& grad_deformed)
{
    if (templ.empty()) {
        throw Error("empty mesh");
    }
    if (templ.size() != deformed.size()) {
        throw Error("vertex count mismatch");
    }
    grad_templ.resize(templ.size(), Vec3::Zero());
    grad_deformed.resize(templ.size(), Vec3::Zero());
    const double inv = 1.0 / static_cast<double>(templ.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < templ.size(); ++i) {
        const Vec3 d = templ[i] - deformed[i];
        sum += d.squaredNorm();
        grad_templ[i] += weight * 2.0 * inv * d;
        grad_deformed[i] -= weight * 2.0 * inv * d;
    }
    return sum * inv;
}

double smoothness_reg_grad(std::span<const Vec3> templ, std::span<const Vec3> deformed, std::span<const Edge> edges,
                           double weight, std::vector<Vec3>& grad_templ, std::vector<Vec3>& grad_deformed)
{
    if (edges.empty()) {
        throw Error("empty edge list");
    }
    if (templ.size() != deformed.size()) {
        throw Error("vertex count mismatch");
    }
    grad_templ.resize(templ.size(), Vec3::Zero());
    grad_deformed.resize(templ.size(), Vec3::Zero());
    const double inv = 1.0 / static_cast<double>(edges.size());
    double sum = 0.0;
    for (const Edge& e : edges) {
        const auto i = static_cast<std::size_t>(e[0]);
        const auto j = static_cast<std::size_t>(e[1]);
        const Vec3 rest = templ[i] - templ[j];
        const double len = rest.norm();
        if (len == 0.0) {
            throw Error("degenerate edge");
        }
        const Vec3 du = (templ[i] - deformed[i]) - (templ[j] - deformed[j]);
        const double dn = du.norm();
        sum += dn / len;
        if (dn > 0.0) {
            const Vec3 gu = weight * inv * du / (dn * len);
            grad_templ[i] += gu;
            grad_templ[j] -= gu;
            grad_deformed[i] -= gu;
            grad_deformed[j] += gu;
            const Vec3 gl = weight * inv * (-dn / (len * len * len)) * rest;
            grad_templ[i] += gl;
            grad_templ[j] -= gl;
        }
    }
    return sum * inv;
}

double deformation_reg(const Mesh& mesh, const DeformationModel& model, const InstanceLatent& latent)
{
    if (mesh.num_vertices() == 0) {
        throw Error("empty mesh");
    }
    const DeformPass pass = deform_forward(model, mesh.vertices(), latent.code);
    std::vector<Vec3> gt, gd;
    return deformation_reg_grad(mesh.vertices(), pass.output, 0.0, gt, gd);
}

double smoothness_reg(const Mesh& mesh, const DeformationModel& model, const InstanceLatent& latent)
{
    const DeformPass pass = deform_forward(model, mesh.vertices(), latent.code);
    std::vector<Vec3> gt, gd;
    return smoothness_reg_grad(mesh.vertices(), pass.output, mesh.edges(), 0.0, gt, gd);
}

void save_deformation_model(const std::filesystem::path& base, const DeformationModel& model)
{
    json h;
    h["kind"] = "deformation";
    h["widths"] = model.decoder.widths();
    h["activation"] = to_string(model.decoder.activation());
    h["beta"] = model.decoder.beta();
    h["latent_dim"] = model.latent_dim;
    const VecX& p = model.decoder.params();
    write_blob(base, h, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

DeformationModel load_deformation_model(const std::filesystem::path& base)
{
    BlobData blob = read_blob(base);
    const json& h = blob.header;
    if (h.value("kind", "") != "deformation") {
        throw StateMismatch(base.string() + ": not a deformation blob");
    }
    const std::string act = h.value("activation", "");
    if (act != "softplus" && act != "tanh") {
        throw StateMismatch(base.string() + ": unknown decoder activation '" + act + "'");
    }
    DeformationModel m;
    m.decoder = Mlp(h.at("widths").get<std::vector<int>>(), activation_from_string(act), h.at("beta").get<double>());
    m.latent_dim = h.at("latent_dim").get<int>();
    if (m.decoder.in_dim() != 3 + m.latent_dim || m.decoder.out_dim() != 6) {
        throw StateMismatch(base.string() + ": decoder shape does not match latent size");
    }
    if (static_cast<std::size_t>(m.decoder.num_params()) != blob.values.size()) {
        throw StateMismatch(base.string() + ": parameter count does not match layer shapes");
    }
    m.decoder.params() = Eigen::Map<const VecX>(blob.values.data(), m.decoder.num_params());
    return m;
}

void save_latents(const std::filesystem::path& base, const LatentTable& latents, int latent_dim)
{
    json h;
    h["kind"] = "latents";
    h["latent_dim"] = latent_dim;
    h["ids"] = json::array();
    std::vector<double> values;
    for (const auto& [id, code] : latents) {
        if (code.size() != latent_dim) {
            throw Error("latent dimension mismatch");
        }
        h["ids"].push_back(id);
        values.insert(values.end(), code.data(), code.data() + code.size());
    }
    write_blob(base, h, values);
}

LatentTable load_latents(const std::filesystem::path& base, int latent_dim)
{
    BlobData blob = read_blob(base);
    const json& h = blob.header;
    if (h.value("kind", "") != "latents" || h.value("latent_dim", -1) != latent_dim) {
        throw StateMismatch(base.string() + ": latent table does not match the model");
    }
    const auto ids = h.at("ids").get<std::vector<std::string>>();
    if (ids.size() * static_cast<std::size_t>(latent_dim) != blob.values.size()) {
        throw StateMismatch(base.string() + ": latent blob size mismatch");
    }
    LatentTable out;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        out[ids[k]] = Eigen::Map<const VecX>(blob.values.data() + k * latent_dim, latent_dim);
    }
    return out;
}

} // namespace catcorr
