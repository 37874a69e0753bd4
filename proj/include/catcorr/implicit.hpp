#pragma once

#include "catcorr/geometry.hpp"
#include "catcorr/io.hpp"
#include "catcorr/mlp.hpp"

#include <functional>
#include <random>

namespace catcorr {

/// Canonical cube the template lives in.
inline Bounds3D canonical_bounds() { return {Vec3::Constant(-0.5), Vec3::Constant(0.5)}; }

/**
 * Coordinate-MLP signed distance field (negative inside). Raw xyz input,
 * softplus hidden layers, scalar output.
 */
struct SdfField {
    Mlp mlp;
    Bounds3D bounds = canonical_bounds();

    /// `layers` linear layers of width `hidden`, geometrically initialized
    /// to a sphere of `init_radius`.
    static SdfField create(int layers, int hidden, double init_radius, std::mt19937_64& rng);
};

double sdf_eval(const SdfField& field, const Vec3& x);
VecX sdf_eval_batch(const SdfField& field, std::span<const Vec3> xs);
Vec3 sdf_grad(const SdfField& field, const Vec3& x);

void save_sdf_field(const std::filesystem::path& base, const SdfField& field);
SdfField load_sdf_field(const std::filesystem::path& base);

/// Regular lattice over `bounds`; each cube is split into six tetrahedra
/// sharing its main diagonal, so neighboring cubes agree on face diagonals.
struct TetGrid {
    int resolution = 0;
    Bounds3D bounds;
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 4>> tets;
    VecX node_sdf;

    static TetGrid build(int resolution, const Bounds3D& bounds = canonical_bounds());

    int node_index(int ix, int iy, int iz) const { return ix + (resolution + 1) * (iy + (resolution + 1) * iz); }
    double cell_size() const { return (bounds.max[0] - bounds.min[0]) / resolution; }

    /// Caches field values at the nodes; exact zeros are nudged to +1e-9.
    void evaluate(const SdfField& field);
    void evaluate(const std::function<double(const Vec3&)>& fn);
    void set_node_sdf(VecX values);
};

/// Source of an extracted vertex: v = (1 - t) * node_i + t * node_j.
struct VertexProvenance {
    int node_i = 0;
    int node_j = 0;
    double t = 0.0;
};

struct ExtractedMesh {
    Mesh mesh;
    std::vector<VertexProvenance> provenance;
};

/// Marching tetrahedra over the cached node values. Faces are wound so that
/// normals point toward positive SDF.
ExtractedMesh marching_tetrahedra(const TetGrid& grid);
ExtractedMesh marching_tetrahedra(TetGrid& grid, const SdfField& field);

/// Recomputes vertex positions for new node values while keeping the
/// topology. Returns false (leaving `em` untouched) if any source edge no
/// longer changes sign.
bool refresh_vertices(ExtractedMesh& em, const TetGrid& grid);

/// d v / d s for the two nodes that generate a vertex; every other node has
/// zero influence.
struct VertexJacobian {
    int node_i = 0;
    int node_j = 0;
    Vec3 d_si = Vec3::Zero();
    Vec3 d_sj = Vec3::Zero();
};

std::vector<VertexJacobian> mt_vertex_jacobian(const ExtractedMesh& em, const TetGrid& grid,
                                               std::span<const double> node_sdf);

/// Pulls a vertex-position gradient back to the grid nodes.
VecX mt_backward(const std::vector<VertexJacobian>& jac, std::span<const Vec3> grad_vertices, Eigen::Index num_nodes);

/// Half uniform in `bounds`, half near mesh vertices with Gaussian noise of
/// 5% of the largest extent.
std::vector<Vec3> sample_eikonal_points(const Bounds3D& bounds, const Mesh& mesh, int n, std::mt19937_64& rng);

double eikonal_loss(const SdfField& field, std::span<const Vec3> samples);
/// Eikonal loss; accumulates `weight` times its parameter gradient.
double eikonal_loss_grad(const SdfField& field, std::span<const Vec3> samples, VecX& grad, double weight = 1.0);

MatX to_matrix(std::span<const Vec3> points);

} // namespace catcorr
