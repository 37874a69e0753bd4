#pragma once

#include "catcorr/geometry.hpp"

#include <filesystem>
#include <limits>

namespace catcorr {

/// Pinhole intrinsics in pixels. Pixel (col, row) has its center at
/// (col + 0.5, row + 0.5).
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
    int num_pixels() const { return width * height; }
};

/// Similarity transform from the canonical frame to camera space:
/// x = scale * rotation * v + translation.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    void validate() const;
    Vec3 apply(const Vec3& v) const { return scale * (rotation * v) + translation; }
    Vec3 apply_inverse(const Vec3& x) const { return rotation.transpose() * (x - translation) / scale; }
    /// (this after first)(v) == this->apply(first.apply(v)).
    Pose compose(const Pose& first) const;
};

struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    MaskImage() = default;
    MaskImage(int w, int h, double fill = 0.0) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int col, int row) { return values[static_cast<std::size_t>(row) * width + col]; }
    double at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }
    bool same_size(const MaskImage& o) const { return width == o.width && height == o.height; }
};

/// Interior distance (pixels) to the nearest outside pixel; zero outside.
using DtImage = MaskImage;

Mesh apply_pose(const Mesh& mesh, const Pose& pose);
std::vector<Vec3> apply_pose(std::span<const Vec3> points, const Pose& pose);

Vec2 project_point(const Camera& camera, const Vec3& x);

struct HardRender {
    std::vector<double> depth;  // camera z, +inf where nothing is hit
    std::vector<int> object;    // index of the mesh seen at each pixel, -1 if none
    MaskImage mask;
};

/// Z-buffered coverage of pixel centers; later meshes only win strictly
/// nearer hits.
HardRender rasterize_hard(const Mesh& mesh, const Camera& camera);
HardRender rasterize_hard(std::span<const Mesh* const> meshes, const Camera& camera);

/**
 * Soft silhouette: each face contributes sigmoid(sd / tau), where sd is the
 * signed 2D distance from the pixel center to the projected triangle
 * (positive inside), and the pixel takes the probabilistic union
 * 1 - prod(1 - o_f).
 */
MaskImage rasterize_soft(const Mesh& mesh, const Camera& camera, double tau);

/// Soft mask plus the per-pixel log(prod(1 - o_f)) the backward pass reuses.
struct SoftRaster {
    MaskImage mask;
    std::vector<double> log_empty;
};

SoftRaster rasterize_soft_cached(const Mesh& mesh, const Camera& camera, double tau);

/// Gradient of sum_p grad_pixels[p] * pred[p] with respect to the
/// camera-space vertices of `mesh`.
std::vector<Vec3> rasterize_soft_backward(const Mesh& mesh, const Camera& camera, double tau,
                                          std::span<const double> grad_pixels);
std::vector<Vec3> rasterize_soft_backward(const Mesh& mesh, const Camera& camera, double tau, const SoftRaster& fwd,
                                          std::span<const double> grad_pixels);

double mask_mse(const MaskImage& pred, const MaskImage& gt);
/// Accumulates `weight` * dL/dpred into `grad`.
double mask_mse_grad(const MaskImage& pred, const MaskImage& gt, double weight, std::vector<double>& grad);

DtImage distance_transform(const MaskImage& mask);

/// -(1/#pixels) * sum(pred * dt).
double mask_dt_loss(const MaskImage& pred, const DtImage& dt);
double mask_dt_loss_grad(const MaskImage& pred, const DtImage& dt, double weight, std::vector<double>& grad);

enum class Visibility { Visible, SelfOccluded, OccludedByOther, OutsideFrustum };

const char* to_string(Visibility v);

/// Classifies a camera-space point: frustum first, then its own mesh, then
/// the other meshes, casting the ray from the camera center.
Visibility visibility(const Vec3& x, const Mesh& own, std::span<const Mesh> others, const Camera& camera);

/// Ray parameter of the first hit in (t_min, t_max), or +inf.
double ray_mesh_hit(const Vec3& origin, const Vec3& dir, const Mesh& mesh, double t_min, double t_max);

void write_pgm(const std::filesystem::path& path, const MaskImage& mask);
MaskImage read_pgm(const std::filesystem::path& path);
void write_depth(const std::filesystem::path& path, std::span<const double> depth);
std::vector<double> read_depth(const std::filesystem::path& path, int width, int height);

namespace reference {
// Brute-force kernels used as test oracles.
MaskImage rasterize_soft(const Mesh& mesh, const Camera& camera, double tau);
DtImage distance_transform(const MaskImage& mask);
} // namespace reference

} // namespace catcorr
