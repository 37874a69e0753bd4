#include "catcorr/geometry.hpp"
#include "catcorr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace catcorr {

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces))
{
    const int n = static_cast<int>(vertices_.size());
    edges_.reserve(faces_.size() * 3);
    for (const Face& f : faces_) {
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= n) {
                throw Error("face index out of range");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw Error("degenerate face");
        }
        for (int k = 0; k < 3; ++k) {
            const int a = f[k];
            const int b = f[(k + 1) % 3];
            edges_.push_back({std::min(a, b), std::max(a, b)});
        }
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

Mesh Mesh::with_vertices(std::vector<Vec3> vertices) const
{
    if (vertices.size() != vertices_.size()) {
        throw Error("vertex count mismatch");
    }
    Mesh out = *this;
    out.vertices_ = std::move(vertices);
    return out;
}

namespace {

TrianglePoint closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b, int ia, int ib)
{
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    TrianglePoint out;
    out.point = a + t * ab;
    out.bary = Vec3::Zero();
    out.bary[ia] += 1.0 - t;
    out.bary[ib] += t;
    return out;
}

} // namespace

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const double scale = std::max({ab.squaredNorm(), ac.squaredNorm(), (c - b).squaredNorm()});
    if (ab.cross(ac).norm() <= 1e-14 * scale || scale == 0.0) {
        // Degenerate: nearest point on the longest edge.
        const double lab = ab.squaredNorm();
        const double lac = ac.squaredNorm();
        const double lbc = (c - b).squaredNorm();
        if (lab >= lac && lab >= lbc) {
            return closest_on_segment(p, a, b, 0, 1);
        }
        if (lac >= lbc) {
            return closest_on_segment(p, a, c, 0, 2);
        }
        return closest_on_segment(p, b, c, 1, 2);
    }

    // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return {a, Vec3(1, 0, 0)};
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return {b, Vec3(0, 1, 0)};
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return {a + v * ab, Vec3(1 - v, v, 0)};
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return {c, Vec3(0, 0, 1)};
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return {a + w * ac, Vec3(1 - w, 0, w)};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {b + w * (c - b), Vec3(0, 1 - w, w)};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return {a + ab * v + ac * w, Vec3(1 - v - w, v, w)};
}

MeshProjection project_to_mesh(const Vec3& p, const Mesh& mesh)
{
    if (mesh.empty()) {
        throw Error("empty mesh");
    }
    MeshProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const auto [a, b, c] = mesh.triangle(f);
        const TrianglePoint tp = closest_point_on_triangle(p, a, b, c);
        const double d2 = (tp.point - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best.sid.face = static_cast<int>(f);
            best.sid.bary = tp.bary;
            best.point = tp.point;
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

Vec3 decode_surface_point(const SurfaceIdentifier& sid, const Mesh& mesh)
{
    if (sid.face < 0 || static_cast<std::size_t>(sid.face) >= mesh.num_faces()) {
        throw Error("face index out of range");
    }
    const auto [a, b, c] = mesh.triangle(static_cast<std::size_t>(sid.face));
    return sid.bary[0] * a + sid.bary[1] * b + sid.bary[2] * c;
}

namespace {

int nearest_index(const Vec3& q, std::span<const Vec3> targets)
{
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double d2 = (targets[j] - q).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(j);
        }
    }
    return best;
}

void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b)
{
    if (a.empty() || b.empty()) {
        throw Error("empty point list");
    }
}

double chamfer_from_nn(std::span<const Vec3> a, std::span<const Vec3> b, const std::vector<int>& nn_ab,
                       const std::vector<int>& nn_ba)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += (a[i] - b[nn_ab[i]]).norm();
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        sum += (b[j] - a[nn_ba[j]]).norm();
    }
    return sum / static_cast<double>(a.size() + b.size());
}

} // namespace

std::vector<int> nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> targets)
{
    if (targets.empty()) {
        throw Error("empty point list");
    }
    std::vector<int> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[i] = nearest_index(queries[i], targets);
    }
    return out;
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b)
{
    require_nonempty(a, b);
    return chamfer_from_nn(a, b, nearest_neighbors(a, b), nearest_neighbors(b, a));
}

double chamfer_distance_grad(std::span<const Vec3> a, std::span<const Vec3> b, std::vector<Vec3>& grad_a)
{
    require_nonempty(a, b);
    const std::vector<int> nn_ab = nearest_neighbors(a, b);
    const std::vector<int> nn_ba = nearest_neighbors(b, a);
    const double inv = 1.0 / static_cast<double>(a.size() + b.size());
    grad_a.assign(a.size(), Vec3::Zero());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Vec3 d = a[i] - b[nn_ab[i]];
        const double n = d.norm();
        if (n > 0.0) {
            grad_a[i] += inv * d / n;
        }
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        const int k = nn_ba[j];
        const Vec3 d = a[k] - b[j];
        const double n = d.norm();
        if (n > 0.0) {
            grad_a[k] += inv * d / n;
        }
    }
    return chamfer_from_nn(a, b, nn_ab, nn_ba);
}

Bounds3D bounds3d(std::span<const Vec3> points)
{
    if (points.empty()) {
        throw Error("empty point list");
    }
    Bounds3D out{points[0], points[0]};
    for (const Vec3& p : points) {
        out.min = out.min.cwiseMin(p);
        out.max = out.max.cwiseMax(p);
    }
    return out;
}

namespace reference {

std::vector<int> nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> targets)
{
    if (targets.empty()) {
        throw Error("empty point list");
    }
    std::vector<int> out;
    out.reserve(queries.size());
    for (const Vec3& q : queries) {
        out.push_back(nearest_index(q, targets));
    }
    return out;
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b)
{
    require_nonempty(a, b);
    return chamfer_from_nn(a, b, nearest_neighbors(a, b), nearest_neighbors(b, a));
}

} // namespace reference

Mesh read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open mesh: " + path.string());
    }
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v[0] >> v[1] >> v[2])) {
                throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad vertex record");
            }
            vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
            }
            if (idx.size() < 3) {
                throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad face record");
            }
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
                faces.push_back({idx[0], idx[k], idx[k + 1]});
            }
        }
    }
    try {
        return Mesh(std::move(vertices), std::move(faces));
    } catch (const Error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::string to_obj_string(const Mesh& mesh)
{
    std::string out;
    char buf[128];
    for (const Vec3& v : mesh.vertices()) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
        out += buf;
    }
    for (const Face& f : mesh.faces()) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh)
{
    write_file_atomic(path, to_obj_string(mesh));
}

} // namespace catcorr
