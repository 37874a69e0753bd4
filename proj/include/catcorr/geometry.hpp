#pragma once

#include "catcorr/common.hpp"

#include <array>
#include <filesystem>
#include <span>

namespace catcorr {

using Face = std::array<int, 3>;
using Edge = std::array<int, 2>;

/**
 * Triangle mesh with a derived, deduplicated edge list.
 *
 * Construction validates the face indices and rejects degenerate faces
 * (a repeated vertex index). Edges are stored once per unordered pair as
 * (lo, hi), sorted lexicographically.
 */
class Mesh {
public:
    Mesh() = default;
    Mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<Edge>& edges() const { return edges_; }

    bool empty() const { return faces_.empty(); }
    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_faces() const { return faces_.size(); }

    /// Same topology, new vertex positions.
    Mesh with_vertices(std::vector<Vec3> vertices) const;

    std::array<Vec3, 3> triangle(std::size_t f) const
    {
        const Face& t = faces_[f];
        return {vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]};
    }

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<Edge> edges_;
};

/// Category-level surface point: a face plus barycentric weights.
struct SurfaceIdentifier {
    int face = -1;
    Vec3 bary = Vec3::Zero();
};

struct Bounds3D {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 extents() const { return max - min; }
    double max_extent() const { return extents().maxCoeff(); }
    double diagonal() const { return extents().norm(); }
};

struct TrianglePoint {
    Vec3 point;
    Vec3 bary;
};

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct MeshProjection {
    SurfaceIdentifier sid;
    Vec3 point;
    double distance = 0.0;
};

/// Globally nearest surface point; ties go to the lowest face index.
MeshProjection project_to_mesh(const Vec3& p, const Mesh& mesh);

Vec3 decode_surface_point(const SurfaceIdentifier& sid, const Mesh& mesh);

/// Index of the nearest point in `targets` for every point in `queries`
/// (lowest index on ties).
std::vector<int> nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> targets);

/// Symmetric Chamfer distance with unsquared norms, normalized by |a|+|b|.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

/// Chamfer distance plus its gradient with respect to the points of `a`
/// (nearest-neighbor assignments held fixed).
double chamfer_distance_grad(std::span<const Vec3> a, std::span<const Vec3> b, std::vector<Vec3>& grad_a);

Bounds3D bounds3d(std::span<const Vec3> points);

namespace reference {
// Serial kernels kept as the test oracle for the OpenMP paths.
std::vector<int> nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> targets);
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);
} // namespace reference

// ASCII OBJ, `v` and `f` records only, 1-based indices.
Mesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);
std::string to_obj_string(const Mesh& mesh);

} // namespace catcorr
