#pragma once

#include "catcorr/geometry.hpp"
#include "catcorr/io.hpp"
#include "catcorr/mlp.hpp"

#include <map>
#include <random>

namespace catcorr {

/// Hidden activation of the deformation decoder.
inline constexpr Activation kDecoderActivation = Activation::Tanh;

/**
 * Vertex-wise affine deformation conditioned on a per-instance latent:
 *
 *     deformed = exp(raw[0:3]) * v + raw[3:6],   raw = decoder([v; code])
 *
 * The decoder's last layer starts at zero, so a fresh model is the exact
 * identity.
 */
struct DeformationModel {
    Mlp decoder;
    int latent_dim = 0;

    static DeformationModel create(int latent_dim, int layers, int hidden, std::mt19937_64& rng);
};

struct InstanceLatent {
    std::string instance_id;
    VecX code;
};

struct DeformedVertex {
    Vec3 deformed;
    Vec3 alpha;
    Vec3 delta;
};

DeformedVertex deform_vertex(const DeformationModel& model, const Vec3& v, const InstanceLatent& latent);
Mesh deform_mesh(const DeformationModel& model, const Mesh& mesh, const InstanceLatent& latent);

double deformation_reg(const Mesh& mesh, const DeformationModel& model, const InstanceLatent& latent);
double smoothness_reg(const Mesh& mesh, const DeformationModel& model, const InstanceLatent& latent);

/// Batched deformation that keeps what the backward pass needs.
struct DeformPass {
    Mlp::Cache cache;
    MatX alpha;  // 3 x N
    std::vector<Vec3> input;
    std::vector<Vec3> output;
};

DeformPass deform_forward(const DeformationModel& model, std::span<const Vec3> vertices, const VecX& code);

/// Backward through the deformation. Accumulates into the decoder gradient,
/// the latent gradient and (if non-null) the gradient of the undeformed vertices.
void deform_backward(const DeformationModel& model, const DeformPass& pass, std::span<const Vec3> grad_output,
                     VecX& grad_decoder, VecX& grad_code, std::vector<Vec3>* grad_input);

/// Regularizers on explicit (template, deformed) vertex pairs. Both return
/// the unweighted value and accumulate `weight` times the gradient.
double deformation_reg_grad(std::span<const Vec3> templ, std::span<const Vec3> deformed, double weight,
                            std::vector<Vec3>& grad_templ, std::vector<Vec3>& grad_deformed);
double smoothness_reg_grad(std::span<const Vec3> templ, std::span<const Vec3> deformed, std::span<const Edge> edges,
                           double weight, std::vector<Vec3>& grad_templ, std::vector<Vec3>& grad_deformed);

void save_deformation_model(const std::filesystem::path& base, const DeformationModel& model);
DeformationModel load_deformation_model(const std::filesystem::path& base);

using LatentTable = std::map<std::string, VecX>;
void save_latents(const std::filesystem::path& base, const LatentTable& latents, int latent_dim);
LatentTable load_latents(const std::filesystem::path& base, int latent_dim);

} // namespace catcorr
