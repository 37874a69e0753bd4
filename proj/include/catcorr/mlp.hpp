#pragma once

#include "catcorr/common.hpp"

#include <random>

namespace catcorr {

enum class Activation { Softplus, Tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

/**
 * Fully connected network with softplus (or tanh) hidden activations and a
 * linear output layer. Parameters live in one flat vector; layer k stores its
 * weight matrix (out x in, column-major) followed by its bias.
 *
 * Inputs and outputs are column-batched: a batch of N points is an
 * (in x N) matrix.
 */
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> widths, double softplus_beta = 100.0);
    Mlp(std::vector<int> widths, Activation activation, double softplus_beta = 100.0);

    const std::vector<int>& widths() const { return widths_; }
    int in_dim() const { return widths_.front(); }
    int out_dim() const { return widths_.back(); }
    int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
    double beta() const { return beta_; }
    Activation activation() const { return activation_; }

    VecX& params() { return params_; }
    const VecX& params() const { return params_; }
    Eigen::Index num_params() const { return params_.size(); }

    Eigen::Map<MatX> weight(int k);
    Eigen::Map<const MatX> weight(int k) const;
    Eigen::Map<VecX> bias(int k);
    Eigen::Map<const VecX> bias(int k) const;

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    void init_uniform(std::mt19937_64& rng);
    void zero_last_layer();
    /// Geometric initialization: the scalar output approximates |x| - radius.
    void init_sphere(double radius, std::mt19937_64& rng);

    struct Cache {
        std::vector<MatX> pre;  // pre-activations, one per layer
        std::vector<MatX> act;  // act[0] = input, act[k] = sigma(pre[k-1])
    };

    MatX forward(const MatX& x, Cache* cache = nullptr) const;

    /// Vector-Jacobian product. Accumulates into `grad_params` and returns
    /// the gradient with respect to the input batch.
    MatX backward(const Cache& cache, const MatX& grad_out, Eigen::Ref<VecX> grad_params) const;

    /// Spatial gradient of a scalar-output network, (in x N).
    MatX input_gradient(const MatX& x) const;

    /// Mean of (|grad_x f| - 1)^2 over the batch; accumulates the parameter
    /// gradient (scaled by `weight`) when `grad_params` is non-null.
    double eikonal(const MatX& x, VecX* grad_params, double weight = 1.0) const;

private:
    double sigma(double z) const;
    double sigma_d1(double z) const;
    double sigma_d2(double z) const;

    std::vector<int> widths_;
    std::vector<Eigen::Index> offsets_;
    double beta_ = 100.0;
    Activation activation_ = Activation::Softplus;
    VecX params_;
};

} // namespace catcorr
