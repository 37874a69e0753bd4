#include "catcorr/mlp.hpp"

#include <cmath>
#include <numbers>

namespace catcorr {

namespace {

double softplus(double z, double beta)
{
    const double bz = beta * z;
    if (bz > 30.0) {
        return z + std::log1p(std::exp(-bz)) / beta;
    }
    return std::log1p(std::exp(bz)) / beta;
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

const char* to_string(Activation a)
{
    return a == Activation::Tanh ? "tanh" : "softplus";
}

Activation activation_from_string(const std::string& name)
{
    if (name == "softplus") {
        return Activation::Softplus;
    }
    if (name == "tanh") {
        return Activation::Tanh;
    }
    throw InputError("unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<int> widths, double softplus_beta) : Mlp(std::move(widths), Activation::Softplus, softplus_beta) {}

Mlp::Mlp(std::vector<int> widths, Activation activation, double softplus_beta)
    : widths_(std::move(widths)), beta_(softplus_beta), activation_(activation)
{
    if (widths_.size() < 2) {
        throw Error("mlp needs at least one layer");
    }
    Eigen::Index off = 0;
    for (int k = 0; k < num_layers(); ++k) {
        if (widths_[k] <= 0 || widths_[k + 1] <= 0) {
            throw Error("mlp layer width must be positive");
        }
        offsets_.push_back(off);
        off += static_cast<Eigen::Index>(widths_[k + 1]) * (widths_[k] + 1);
    }
    offsets_.push_back(off);
    params_ = VecX::Zero(off);
}

double Mlp::sigma(double z) const
{
    return activation_ == Activation::Tanh ? std::tanh(z) : softplus(z, beta_);
}

double Mlp::sigma_d1(double z) const
{
    if (activation_ == Activation::Tanh) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    return sigmoid(beta_ * z);
}

double Mlp::sigma_d2(double z) const
{
    if (activation_ == Activation::Tanh) {
        const double t = std::tanh(z);
        return -2.0 * t * (1.0 - t * t);
    }
    const double s = sigmoid(beta_ * z);
    return beta_ * s * (1.0 - s);
}

Eigen::Map<MatX> Mlp::weight(int k)
{
    return {params_.data() + offsets_[k], widths_[k + 1], widths_[k]};
}

Eigen::Map<const MatX> Mlp::weight(int k) const
{
    return {params_.data() + offsets_[k], widths_[k + 1], widths_[k]};
}

Eigen::Map<VecX> Mlp::bias(int k)
{
    return {params_.data() + offsets_[k] + static_cast<Eigen::Index>(widths_[k + 1]) * widths_[k], widths_[k + 1]};
}

Eigen::Map<const VecX> Mlp::bias(int k) const
{
    return {params_.data() + offsets_[k] + static_cast<Eigen::Index>(widths_[k + 1]) * widths_[k], widths_[k + 1]};
}

void Mlp::init_uniform(std::mt19937_64& rng)
{
    for (int k = 0; k < num_layers(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[k]));
        std::uniform_real_distribution<double> u(-bound, bound);
        auto w = weight(k);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = u(rng);
        }
        auto b = bias(k);
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            b[i] = u(rng);
        }
    }
}

void Mlp::zero_last_layer()
{
    weight(num_layers() - 1).setZero();
    bias(num_layers() - 1).setZero();
}

void Mlp::init_sphere(double radius, std::mt19937_64& rng)
{
    const int last = num_layers() - 1;
    for (int k = 0; k < last; ++k) {
        std::normal_distribution<double> n(0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(widths_[k + 1])));
        auto w = weight(k);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = n(rng);
        }
        bias(k).setZero();
    }
    std::normal_distribution<double> n(std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(widths_[last])),
                                       1e-5);
    auto w = weight(last);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = n(rng);
    }
    bias(last).setConstant(-radius);
}

MatX Mlp::forward(const MatX& x, Cache* cache) const
{
    if (x.rows() != in_dim()) {
        throw Error("mlp input dimension mismatch");
    }
    if (cache) {
        cache->pre.clear();
        cache->act.clear();
        cache->act.push_back(x);
    }
    MatX a = x;
    const int last = num_layers() - 1;
    for (int k = 0; k <= last; ++k) {
        MatX z = weight(k) * a;
        z.colwise() += bias(k);
        if (k == last) {
            if (cache) {
                cache->pre.push_back(z);
            }
            return z;
        }
        a = z.unaryExpr([this](double v) { return sigma(v); });
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->act.push_back(a);
        }
    }
    return a;
}

MatX Mlp::backward(const Cache& cache, const MatX& grad_out, Eigen::Ref<VecX> grad_params) const
{
    if (grad_params.size() != num_params()) {
        throw Error("gradient size mismatch");
    }
    MatX g = grad_out;  // gradient w.r.t. pre-activation of the current layer
    for (int k = num_layers() - 1; k >= 0; --k) {
        const Eigen::Index off = offsets_[k];
        const int out = widths_[k + 1];
        const int in = widths_[k];
        Eigen::Map<MatX> gw(grad_params.data() + off, out, in);
        Eigen::Map<VecX> gb(grad_params.data() + off + static_cast<Eigen::Index>(out) * in, out);
        gw.noalias() += g * cache.act[k].transpose();
        gb += g.rowwise().sum();
        MatX ga = weight(k).transpose() * g;
        if (k == 0) {
            return ga;
        }
        const MatX& z = cache.pre[k - 1];
        g = ga.array() * z.unaryExpr([this](double v) { return sigma_d1(v); }).array();
    }
    return g;
}

MatX Mlp::input_gradient(const MatX& x) const
{
    if (out_dim() != 1) {
        throw Error("input_gradient requires a scalar-output network");
    }
    Cache cache;
    forward(x, &cache);
    MatX g = MatX::Ones(1, x.cols());
    for (int k = num_layers() - 1; k >= 0; --k) {
        MatX ga = weight(k).transpose() * g;
        if (k == 0) {
            return ga;
        }
        const MatX& z = cache.pre[k - 1];
        g = ga.array() * z.unaryExpr([this](double v) { return sigma_d1(v); }).array();
    }
    return g;
}

double Mlp::eikonal(const MatX& x, VecX* grad_params, double weight_scale) const
{
    if (out_dim() != 1) {
        throw Error("eikonal requires a scalar-output network");
    }
    if (x.cols() == 0) {
        throw Error("empty samples");
    }
    const int dims = in_dim();
    const int last = num_layers() - 1;
    const Eigen::Index n = x.cols();

    // Forward pass carrying the input Jacobian of every hidden layer.
    std::vector<MatX> h{x};
    std::vector<MatX> s1, s2;
    std::vector<std::vector<MatX>> jac(num_layers());  // jac[k][d] = d h_k / d x_d
    std::vector<std::vector<MatX>> zjac(last);         // zjac[k][d] = d z_k / d x_d
    for (int k = 0; k < last; ++k) {
        MatX z = weight(k) * h[k];
        z.colwise() += bias(k);
        MatX sig = z.unaryExpr([this](double v) { return sigma_d1(v); });
        s2.push_back(z.unaryExpr([this](double v) { return sigma_d2(v); }));
        for (int d = 0; d < dims; ++d) {
            MatX zd = k == 0 ? MatX(weight(0).col(d).replicate(1, n)) : MatX(weight(k) * jac[k][d]);
            jac[k + 1].push_back((sig.array() * zd.array()).matrix());
            zjac[k].push_back(std::move(zd));
        }
        h.push_back(z.unaryExpr([this](double v) { return sigma(v); }));
        s1.push_back(std::move(sig));
    }
    MatX g(dims, n);
    for (int d = 0; d < dims; ++d) {
        g.row(d) = weight(last) * jac[last][d];
    }
    const VecX norms = g.colwise().norm().transpose();
    const double loss = (norms.array() - 1.0).square().mean();
    if (!grad_params) {
        return loss;
    }
    if (grad_params->size() != num_params()) {
        throw Error("gradient size mismatch");
    }

    MatX gbar(dims, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double nrm = norms[i];
        const double c = nrm > 0.0 ? weight_scale * 2.0 * (nrm - 1.0) / (nrm * static_cast<double>(n)) : 0.0;
        gbar.col(i) = c * g.col(i);
    }
    auto gw = [&](int k) {
        return Eigen::Map<MatX>(grad_params->data() + offsets_[k], widths_[k + 1], widths_[k]);
    };
    auto gb = [&](int k) {
        return Eigen::Map<VecX>(grad_params->data() + offsets_[k] + static_cast<Eigen::Index>(widths_[k + 1]) * widths_[k],
                                widths_[k + 1]);
    };

    std::vector<MatX> jbar(dims);
    for (int d = 0; d < dims; ++d) {
        gw(last).noalias() += gbar.row(d) * jac[last][d].transpose();
        jbar[d] = weight(last).transpose() * gbar.row(d);
    }
    MatX hbar = MatX::Zero(widths_[last], n);
    for (int k = last - 1; k >= 0; --k) {
        MatX zbar = (s1[k].array() * hbar.array()).matrix();
        std::vector<MatX> zdbar(dims);
        for (int d = 0; d < dims; ++d) {
            zdbar[d] = (s1[k].array() * jbar[d].array()).matrix();
            zbar.array() += s2[k].array() * jbar[d].array() * zjac[k][d].array();
        }
        auto w_bar = gw(k);
        w_bar.noalias() += zbar * h[k].transpose();
        gb(k) += zbar.rowwise().sum();
        if (k == 0) {
            for (int d = 0; d < dims; ++d) {
                w_bar.col(d) += zdbar[d].rowwise().sum();
            }
        } else {
            for (int d = 0; d < dims; ++d) {
                w_bar.noalias() += zdbar[d] * jac[k][d].transpose();
                jbar[d] = weight(k).transpose() * zdbar[d];
            }
            hbar = weight(k).transpose() * zbar;
        }
    }
    return loss;
}

} // namespace catcorr
