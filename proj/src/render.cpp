#include "catcorr/render.hpp"

#include "catcorr/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace catcorr {

void Camera::validate() const
{
    if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0) {
        throw Error("invalid camera");
    }
}

void Pose::validate() const
{
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-7 ||
        std::abs(rotation.determinant() - 1.0) > 1e-7) {
        throw Error("rotation is not orthonormal");
    }
    if (!(scale > 0.0) || !translation.allFinite()) {
        throw Error("invalid pose");
    }
}

Pose Pose::compose(const Pose& first) const
{
    Pose out;
    out.rotation = rotation * first.rotation;
    out.scale = scale * first.scale;
    out.translation = scale * (rotation * first.translation) + translation;
    return out;
}

std::vector<Vec3> apply_pose(std::span<const Vec3> points, const Pose& pose)
{
    pose.validate();
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const Vec3& p : points) {
        out.push_back(pose.apply(p));
    }
    return out;
}

Mesh apply_pose(const Mesh& mesh, const Pose& pose)
{
    return mesh.with_vertices(apply_pose(mesh.vertices(), pose));
}

Vec2 project_point(const Camera& camera, const Vec3& x)
{
    if (x[2] <= 0.0) {
        throw Error("behind camera");
    }
    return {camera.fx * x[0] / x[2] + camera.cx, camera.fy * x[1] / x[2] + camera.cy};
}

namespace {

constexpr double kNear = 1e-6;
// Faces farther than kCutoff * tau from a pixel contribute below 2e-15.
constexpr double kCutoff = 34.0;
constexpr int kTile = 8;

double cross2(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct Projection {
    std::vector<Vec2> uv;
    std::vector<char> valid;
};

Projection project_all(const Mesh& mesh, const Camera& camera)
{
    Projection out;
    out.uv.resize(mesh.num_vertices());
    out.valid.resize(mesh.num_vertices());
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const Vec3& x = mesh.vertices()[i];
        out.valid[i] = x[2] > kNear;
        out.uv[i] = out.valid[i] ? project_point(camera, x) : Vec2::Zero();
    }
    return out;
}

bool face_valid(const Face& f, const Projection& proj)
{
    return proj.valid[f[0]] && proj.valid[f[1]] && proj.valid[f[2]];
}

struct PixelRange {
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    bool empty() const { return x1 < x0 || y1 < y0; }
};

// Pixels whose centers fall in the triangle's box grown by `margin`.
PixelRange pixel_range(const Vec2& a, const Vec2& b, const Vec2& c, double margin, const Camera& cam)
{
    const double xmin = std::min({a[0], b[0], c[0]}) - margin;
    const double xmax = std::max({a[0], b[0], c[0]}) + margin;
    const double ymin = std::min({a[1], b[1], c[1]}) - margin;
    const double ymax = std::max({a[1], b[1], c[1]}) + margin;
    PixelRange r;
    r.x0 = std::max(0, static_cast<int>(std::ceil(xmin - 0.5)));
    r.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(xmax - 0.5)));
    r.y0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
    r.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
    return r;
}

struct SignedDistance {
    double sd = 0.0;
    std::array<Vec2, 3> grad{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
};

SignedDistance signed_distance(const Vec2& p, const std::array<Vec2, 3>& tri, bool want_grad)
{
    double best = std::numeric_limits<double>::infinity();
    int best_edge = 0;
    double best_t = 0.0;
    Vec2 best_q = Vec2::Zero();
    for (int e = 0; e < 3; ++e) {
        const Vec2& u = tri[e];
        const Vec2& w = tri[(e + 1) % 3];
        const Vec2 d = w - u;
        const double len2 = d.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - u).dot(d) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = u + t * d;
        const double dist = (p - q).norm();
        if (dist < best) {
            best = dist;
            best_edge = e;
            best_t = t;
            best_q = q;
        }
    }
    const double area = cross2(tri[1] - tri[0], tri[2] - tri[0]);
    const double e0 = cross2(tri[1] - tri[0], p - tri[0]);
    const double e1 = cross2(tri[2] - tri[1], p - tri[1]);
    const double e2 = cross2(tri[0] - tri[2], p - tri[2]);
    const bool inside =
        area != 0.0 && ((e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0));
    SignedDistance out;
    out.sd = inside ? best : -best;
    if (want_grad && best > 0.0) {
        const double sign = inside ? 1.0 : -1.0;
        const Vec2 n = (p - best_q) / best;
        out.grad[best_edge] = -sign * (1.0 - best_t) * n;
        out.grad[(best_edge + 1) % 3] = -sign * best_t * n;
    }
    return out;
}

// Per-face edge data, computed once per render.
struct FaceGeom {
    std::array<Vec2, 3> v;
    std::array<Vec2, 3> d;
    std::array<double, 3> inv_len2{};
    bool degenerate = false;
};

FaceGeom face_geom(const Vec2& a, const Vec2& b, const Vec2& c)
{
    FaceGeom g;
    g.v = {a, b, c};
    for (int e = 0; e < 3; ++e) {
        g.d[e] = g.v[(e + 1) % 3] - g.v[e];
        const double len2 = g.d[e].squaredNorm();
        g.inv_len2[e] = len2 > 0.0 ? 1.0 / len2 : 0.0;
    }
    g.degenerate = cross2(g.d[0], c - a) == 0.0;
    return g;
}

SignedDistance signed_distance(const Vec2& p, const FaceGeom& g, bool want_grad)
{
    double best2 = std::numeric_limits<double>::infinity();
    int best_edge = 0;
    double best_t = 0.0;
    Vec2 best_r = Vec2::Zero();
    std::array<double, 3> side{};
    for (int e = 0; e < 3; ++e) {
        const Vec2 pu = p - g.v[e];
        const double t = std::clamp(pu.dot(g.d[e]) * g.inv_len2[e], 0.0, 1.0);
        const Vec2 r = pu - t * g.d[e];
        const double dist2 = r.squaredNorm();
        side[e] = cross2(g.d[e], pu);
        if (dist2 < best2) {
            best2 = dist2;
            best_edge = e;
            best_t = t;
            best_r = r;
        }
    }
    const bool inside = !g.degenerate && ((side[0] >= 0.0 && side[1] >= 0.0 && side[2] >= 0.0) ||
                                          (side[0] <= 0.0 && side[1] <= 0.0 && side[2] <= 0.0));
    const double best = std::sqrt(best2);
    SignedDistance out;
    out.sd = inside ? best : -best;
    if (want_grad && best > 0.0) {
        const double sign = inside ? 1.0 : -1.0;
        const Vec2 n = best_r / best;
        out.grad[best_edge] = -sign * (1.0 - best_t) * n;
        out.grad[(best_edge + 1) % 3] = -sign * best_t * n;
    }
    return out;
}

} // namespace

SoftRaster rasterize_soft_cached(const Mesh& mesh, const Camera& camera, double tau)
{
    camera.validate();
    if (!(tau > 0.0)) {
        throw Error("tau must be positive");
    }
    const Projection proj = project_all(mesh, camera);
    const double margin = kCutoff * tau;
    const int tiles_x = (camera.width + kTile - 1) / kTile;
    const int tiles_y = (camera.height + kTile - 1) / kTile;
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    std::vector<PixelRange> ranges(mesh.num_faces());
    std::vector<FaceGeom> geoms(mesh.num_faces());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& face = mesh.faces()[f];
        if (!face_valid(face, proj)) {
            continue;
        }
        geoms[f] = face_geom(proj.uv[face[0]], proj.uv[face[1]], proj.uv[face[2]]);
        ranges[f] = pixel_range(proj.uv[face[0]], proj.uv[face[1]], proj.uv[face[2]], margin, camera);
        if (ranges[f].empty()) {
            continue;
        }
        for (int ty = ranges[f].y0 / kTile; ty <= ranges[f].y1 / kTile; ++ty) {
            for (int tx = ranges[f].x0 / kTile; tx <= ranges[f].x1 / kTile; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(f));
            }
        }
    }

    SoftRaster out{MaskImage(camera.width, camera.height), std::vector<double>(camera.num_pixels(), 0.0)};
    const int n = camera.num_pixels();
#pragma omp parallel for schedule(static)
    for (int idx = 0; idx < n; ++idx) {
        const int col = idx % camera.width;
        const int row = idx / camera.width;
        const Vec2 p(col + 0.5, row + 0.5);
        double log_empty = 0.0;
        for (int f : bins[static_cast<std::size_t>(row / kTile) * tiles_x + col / kTile]) {
            const PixelRange& r = ranges[f];
            if (col < r.x0 || col > r.x1 || row < r.y0 || row > r.y1) {
                continue;
            }
            log_empty -= softplus(signed_distance(p, geoms[f], false).sd / tau);
        }
        out.log_empty[idx] = log_empty;
        out.mask.values[idx] = -std::expm1(log_empty);
    }
    return out;
}

MaskImage rasterize_soft(const Mesh& mesh, const Camera& camera, double tau)
{
    return rasterize_soft_cached(mesh, camera, tau).mask;
}

std::vector<Vec3> rasterize_soft_backward(const Mesh& mesh, const Camera& camera, double tau,
                                          std::span<const double> grad_pixels)
{
    return rasterize_soft_backward(mesh, camera, tau, rasterize_soft_cached(mesh, camera, tau), grad_pixels);
}

std::vector<Vec3> rasterize_soft_backward(const Mesh& mesh, const Camera& camera, double tau, const SoftRaster& fwd,
                                          std::span<const double> grad_pixels)
{
    if (grad_pixels.size() != static_cast<std::size_t>(camera.num_pixels()) ||
        fwd.log_empty.size() != grad_pixels.size()) {
        throw Error("pixel gradient size mismatch");
    }
    const Projection proj = project_all(mesh, camera);
    // d pred_p / d x_f = exp(log_empty_p) * sigmoid(x_f), x_f = sd_f / tau
    std::vector<double> w(grad_pixels.size());
    for (std::size_t p = 0; p < w.size(); ++p) {
        w[p] = grad_pixels[p] * std::exp(fwd.log_empty[p]);
    }
    const double margin = kCutoff * tau;
    const auto nf = static_cast<std::ptrdiff_t>(mesh.num_faces());
    std::vector<std::array<Vec2, 3>> face_grad(mesh.num_faces(), {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()});
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t f = 0; f < nf; ++f) {
        const Face& face = mesh.faces()[f];
        if (!face_valid(face, proj)) {
            continue;
        }
        const std::array<Vec2, 3> tri{proj.uv[face[0]], proj.uv[face[1]], proj.uv[face[2]]};
        const PixelRange r = pixel_range(tri[0], tri[1], tri[2], margin, camera);
        const FaceGeom geom = face_geom(tri[0], tri[1], tri[2]);
        auto& acc = face_grad[f];
        for (int row = r.y0; row <= r.y1; ++row) {
            for (int col = r.x0; col <= r.x1; ++col) {
                const double wp = w[static_cast<std::size_t>(row) * camera.width + col];
                if (wp == 0.0) {
                    continue;
                }
                const SignedDistance sd = signed_distance(Vec2(col + 0.5, row + 0.5), geom, true);
                const double c = wp * sigmoid(sd.sd / tau) / tau;
                for (int k = 0; k < 3; ++k) {
                    acc[k] += c * sd.grad[k];
                }
            }
        }
    }
    std::vector<Vec3> grad(mesh.num_vertices(), Vec3::Zero());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& face = mesh.faces()[f];
        for (int k = 0; k < 3; ++k) {
            const Vec2& g = face_grad[f][k];
            if (g[0] == 0.0 && g[1] == 0.0) {
                continue;
            }
            const Vec3& x = mesh.vertices()[face[k]];
            const double iz = 1.0 / x[2];
            grad[face[k]] += Vec3(g[0] * camera.fx * iz, g[1] * camera.fy * iz,
                                  -(g[0] * camera.fx * x[0] + g[1] * camera.fy * x[1]) * iz * iz);
        }
    }
    return grad;
}

HardRender rasterize_hard(const Mesh& mesh, const Camera& camera)
{
    const std::array<const Mesh*, 1> meshes{&mesh};
    return rasterize_hard(meshes, camera);
}

HardRender rasterize_hard(std::span<const Mesh* const> meshes, const Camera& camera)
{
    camera.validate();
    const auto n = static_cast<std::size_t>(camera.num_pixels());
    HardRender out{std::vector<double>(n, std::numeric_limits<double>::infinity()), std::vector<int>(n, -1),
                   MaskImage(camera.width, camera.height)};
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        const Mesh& mesh = *meshes[m];
        const Projection proj = project_all(mesh, camera);
        for (const Face& face : mesh.faces()) {
            if (!face_valid(face, proj)) {
                continue;
            }
            const Vec2& a = proj.uv[face[0]];
            const Vec2& b = proj.uv[face[1]];
            const Vec2& c = proj.uv[face[2]];
            const double area = cross2(b - a, c - a);
            if (std::abs(area) < 1e-18) {
                continue;
            }
            const double za = mesh.vertices()[face[0]][2];
            const double zb = mesh.vertices()[face[1]][2];
            const double zc = mesh.vertices()[face[2]][2];
            const PixelRange r = pixel_range(a, b, c, 0.0, camera);
            for (int row = r.y0; row <= r.y1; ++row) {
                for (int col = r.x0; col <= r.x1; ++col) {
                    const Vec2 p(col + 0.5, row + 0.5);
                    const double w0 = cross2(c - b, p - b) / area;
                    const double w1 = cross2(a - c, p - c) / area;
                    const double w2 = cross2(b - a, p - a) / area;
                    if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) {
                        continue;
                    }
                    const double z = 1.0 / (w0 / za + w1 / zb + w2 / zc);
                    const std::size_t idx = static_cast<std::size_t>(row) * camera.width + col;
                    if (z < out.depth[idx]) {
                        out.depth[idx] = z;
                        out.object[idx] = static_cast<int>(m);
                        out.mask.values[idx] = 1.0;
                    }
                }
            }
        }
    }
    return out;
}

double mask_mse(const MaskImage& pred, const MaskImage& gt)
{
    std::vector<double> unused;
    return mask_mse_grad(pred, gt, 0.0, unused);
}

double mask_mse_grad(const MaskImage& pred, const MaskImage& gt, double weight, std::vector<double>& grad)
{
    if (!pred.same_size(gt)) {
        throw Error("mask dimension mismatch");
    }
    grad.resize(pred.values.size(), 0.0);
    const double inv = pred.values.empty() ? 0.0 : 1.0 / static_cast<double>(pred.values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - gt.values[i];
        sum += d * d;
        grad[i] += weight * 2.0 * d * inv;
    }
    return sum * inv;
}

double mask_dt_loss(const MaskImage& pred, const DtImage& dt)
{
    std::vector<double> unused;
    return mask_dt_loss_grad(pred, dt, 0.0, unused);
}

double mask_dt_loss_grad(const MaskImage& pred, const DtImage& dt, double weight, std::vector<double>& grad)
{
    if (!pred.same_size(dt)) {
        throw Error("mask dimension mismatch");
    }
    grad.resize(pred.values.size(), 0.0);
    const double inv = pred.values.empty() ? 0.0 : 1.0 / static_cast<double>(pred.values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        sum += pred.values[i] * dt.values[i];
        grad[i] -= weight * dt.values[i] * inv;
    }
    return -sum * inv;
}

namespace {

// Exactly representable when added to squared pixel distances.
constexpr double kFar = 1e12;

// 1D squared distance transform of sampled function f (Felzenszwalb & Huttenlocher).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z)
{
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    auto meet = [&](int q, int r) {
        return ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) / (2.0 * q - 2.0 * r);
    };
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = meet(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = meet(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) {
            ++k;
        }
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

} // namespace

DtImage distance_transform(const MaskImage& mask)
{
    // Pad by one background pixel so the image border acts as boundary.
    const int w = mask.width + 2;
    const int h = mask.height + 2;
    std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
    for (int row = 0; row < mask.height; ++row) {
        for (int col = 0; col < mask.width; ++col) {
            if (mask.at(col, row) >= 0.5) {
                grid[static_cast<std::size_t>(row + 1) * w + col + 1] = kFar;
            }
        }
    }
#pragma omp parallel
    {
        std::vector<int> v;
        std::vector<double> z;
        std::vector<double> f(static_cast<std::size_t>(std::max(w, h)));
        std::vector<double> d(f.size());
#pragma omp for schedule(static)
        for (int col = 0; col < w; ++col) {
            for (int row = 0; row < h; ++row) {
                f[row] = grid[static_cast<std::size_t>(row) * w + col];
            }
            edt_1d(f.data(), d.data(), h, v, z);
            for (int row = 0; row < h; ++row) {
                grid[static_cast<std::size_t>(row) * w + col] = d[row];
            }
        }
#pragma omp for schedule(static)
        for (int row = 0; row < h; ++row) {
            double* line = grid.data() + static_cast<std::size_t>(row) * w;
            std::copy(line, line + w, f.begin());
            edt_1d(f.data(), line, w, v, z);
        }
    }
    DtImage out(mask.width, mask.height);
    for (int row = 0; row < mask.height; ++row) {
        for (int col = 0; col < mask.width; ++col) {
            if (mask.at(col, row) >= 0.5) {
                out.at(col, row) = std::sqrt(grid[static_cast<std::size_t>(row + 1) * w + col + 1]);
            }
        }
    }
    return out;
}

const char* to_string(Visibility v)
{
    switch (v) {
    case Visibility::Visible: return "Visible";
    case Visibility::SelfOccluded: return "SelfOccluded";
    case Visibility::OccludedByOther: return "OccludedByOther";
    case Visibility::OutsideFrustum: return "OutsideFrustum";
    }
    return "?";
}

double ray_mesh_hit(const Vec3& origin, const Vec3& dir, const Mesh& mesh, double t_min, double t_max)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const auto [a, b, c] = mesh.triangle(f);
        const Vec3 e1 = b - a;
        const Vec3 e2 = c - a;
        const Vec3 pvec = dir.cross(e2);
        const double det = e1.dot(pvec);
        if (std::abs(det) <= 1e-15 * e1.norm() * e2.norm() * dir.norm()) {
            continue;
        }
        const double inv = 1.0 / det;
        const Vec3 tvec = origin - a;
        const double u = tvec.dot(pvec) * inv;
        if (u < 0.0 || u > 1.0) {
            continue;
        }
        const Vec3 qvec = tvec.cross(e1);
        const double v = dir.dot(qvec) * inv;
        if (v < 0.0 || u + v > 1.0) {
            continue;
        }
        const double t = e2.dot(qvec) * inv;
        if (t > t_min && t < t_max && t < best) {
            best = t;
        }
    }
    return best;
}

Visibility visibility(const Vec3& x, const Mesh& own, std::span<const Mesh> others, const Camera& camera)
{
    if (x[2] <= 0.0) {
        return Visibility::OutsideFrustum;
    }
    const Vec2 uv = project_point(camera, x);
    if (uv[0] < 0.0 || uv[0] >= camera.width || uv[1] < 0.0 || uv[1] >= camera.height) {
        return Visibility::OutsideFrustum;
    }
    // x sits at t = 1; the margin keeps its own face from counting as a hit.
    constexpr double t_max = 1.0 - 1e-4;
    const Vec3 origin = Vec3::Zero();
    if (std::isfinite(ray_mesh_hit(origin, x, own, 1e-9, t_max))) {
        return Visibility::SelfOccluded;
    }
    for (const Mesh& m : others) {
        if (std::isfinite(ray_mesh_hit(origin, x, m, 1e-9, t_max))) {
            return Visibility::OccludedByOther;
        }
    }
    return Visibility::Visible;
}

void write_pgm(const std::filesystem::path& path, const MaskImage& mask)
{
    std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    out.reserve(out.size() + mask.values.size());
    for (double v : mask.values) {
        out.push_back(static_cast<char>(v >= 0.5 ? 255 : 0));
    }
    write_file_atomic(path, out);
}

MaskImage read_pgm(const std::filesystem::path& path)
{
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P5") {
        throw InputError(path.string() + ": not a binary PGM");
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw InputError(path.string() + ": bad PGM header");
    }
    ++pos;  // single whitespace before the raster
    if (w <= 0 || h <= 0 || maxval != 255 || bytes.size() - pos < static_cast<std::size_t>(w) * h) {
        throw InputError(path.string() + ": bad PGM header");
    }
    MaskImage mask(w, h);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        mask.values[i] = static_cast<unsigned char>(bytes[pos + i]) >= 128 ? 1.0 : 0.0;
    }
    return mask;
}

void write_depth(const std::filesystem::path& path, std::span<const double> depth)
{
    std::string bytes(depth.size() * 4, '\0');
    for (std::size_t i = 0; i < depth.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(depth[i]));
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    write_file_atomic(path, bytes);
}

std::vector<double> read_depth(const std::filesystem::path& path, int width, int height)
{
    const std::string bytes = read_file(path);
    const auto n = static_cast<std::size_t>(width) * height;
    if (bytes.size() != n * 4) {
        throw InputError(path.string() + ": depth size does not match the manifest");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

namespace reference {

MaskImage rasterize_soft(const Mesh& mesh, const Camera& camera, double tau)
{
    camera.validate();
    if (!(tau > 0.0)) {
        throw Error("tau must be positive");
    }
    const Projection proj = project_all(mesh, camera);
    MaskImage out(camera.width, camera.height);
    for (int row = 0; row < camera.height; ++row) {
        for (int col = 0; col < camera.width; ++col) {
            const Vec2 p(col + 0.5, row + 0.5);
            double empty = 1.0;
            for (const Face& face : mesh.faces()) {
                if (!face_valid(face, proj)) {
                    continue;
                }
                const double sd = signed_distance(p, std::array<Vec2, 3>{proj.uv[face[0]], proj.uv[face[1]], proj.uv[face[2]]}, false).sd;
                empty *= 1.0 - sigmoid(sd / tau);
            }
            out.at(col, row) = 1.0 - empty;
        }
    }
    return out;
}

DtImage distance_transform(const MaskImage& mask)
{
    DtImage out(mask.width, mask.height);
    auto outside = [&](int col, int row) {
        return col < 0 || row < 0 || col >= mask.width || row >= mask.height || mask.at(col, row) < 0.5;
    };
    for (int row = 0; row < mask.height; ++row) {
        for (int col = 0; col < mask.width; ++col) {
            if (outside(col, row)) {
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            for (int r = -1; r <= mask.height; ++r) {
                for (int c = -1; c <= mask.width; ++c) {
                    if (outside(c, r)) {
                        const double d2 = static_cast<double>((c - col) * (c - col) + (r - row) * (r - row));
                        best = std::min(best, d2);
                    }
                }
            }
            out.at(col, row) = std::sqrt(best);
        }
    }
    return out;
}

} // namespace reference

} // namespace catcorr
