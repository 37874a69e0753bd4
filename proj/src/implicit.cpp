#include "catcorr/implicit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

namespace catcorr {

MatX to_matrix(std::span<const Vec3> points)
{
    MatX m(3, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        m.col(static_cast<Eigen::Index>(i)) = points[i];
    }
    return m;
}

SdfField SdfField::create(int layers, int hidden, double init_radius, std::mt19937_64& rng)
{
    if (layers < 2) {
        throw Error("sdf mlp needs at least two layers");
    }
    std::vector<int> widths{3};
    for (int k = 0; k < layers - 1; ++k) {
        widths.push_back(hidden);
    }
    widths.push_back(1);
    SdfField f;
    f.mlp = Mlp(widths);
    f.mlp.init_sphere(init_radius, rng);
    return f;
}

double sdf_eval(const SdfField& field, const Vec3& x)
{
    return field.mlp.forward(MatX(x))(0, 0);
}

VecX sdf_eval_batch(const SdfField& field, std::span<const Vec3> xs)
{
    if (xs.empty()) {
        return VecX();
    }
    return field.mlp.forward(to_matrix(xs)).row(0).transpose();
}

Vec3 sdf_grad(const SdfField& field, const Vec3& x)
{
    return field.mlp.input_gradient(MatX(x)).col(0);
}

void save_sdf_field(const std::filesystem::path& base, const SdfField& field)
{
    json h;
    h["kind"] = "sdf";
    h["widths"] = field.mlp.widths();
    h["activation"] = "softplus";
    h["beta"] = field.mlp.beta();
    h["bounds"] = {{"min", {field.bounds.min[0], field.bounds.min[1], field.bounds.min[2]}},
                   {"max", {field.bounds.max[0], field.bounds.max[1], field.bounds.max[2]}}};
    const VecX& p = field.mlp.params();
    write_blob(base, h, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

SdfField load_sdf_field(const std::filesystem::path& base)
{
    BlobData blob = read_blob(base);
    const json& h = blob.header;
    if (h.value("kind", "") != "sdf" || h.value("activation", "") != "softplus") {
        throw StateMismatch(base.string() + ": not an sdf field blob");
    }
    SdfField f;
    f.mlp = Mlp(h.at("widths").get<std::vector<int>>(), h.at("beta").get<double>());
    if (static_cast<std::size_t>(f.mlp.num_params()) != blob.values.size()) {
        throw StateMismatch(base.string() + ": parameter count does not match layer shapes");
    }
    f.mlp.params() = Eigen::Map<const VecX>(blob.values.data(), f.mlp.num_params());
    const auto mn = h.at("bounds").at("min").get<std::array<double, 3>>();
    const auto mx = h.at("bounds").at("max").get<std::array<double, 3>>();
    f.bounds = {Vec3(mn[0], mn[1], mn[2]), Vec3(mx[0], mx[1], mx[2])};
    return f;
}

TetGrid TetGrid::build(int resolution, const Bounds3D& bounds)
{
    if (resolution < 1) {
        throw Error("grid resolution must be positive");
    }
    TetGrid g;
    g.resolution = resolution;
    g.bounds = bounds;
    const int n = resolution + 1;
    g.nodes.resize(static_cast<std::size_t>(n) * n * n);
    const Vec3 step = (bounds.max - bounds.min) / resolution;
    for (int iz = 0; iz < n; ++iz) {
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                g.nodes[g.node_index(ix, iy, iz)] = bounds.min + Vec3(ix * step[0], iy * step[1], iz * step[2]);
            }
        }
    }

    // Kuhn triangulation: one tet per axis ordering, walking 000 -> 111.
    static constexpr std::array<std::array<int, 3>, 6> orders{
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    g.tets.reserve(static_cast<std::size_t>(resolution) * resolution * resolution * 6);
    for (int iz = 0; iz < resolution; ++iz) {
        for (int iy = 0; iy < resolution; ++iy) {
            for (int ix = 0; ix < resolution; ++ix) {
                for (const auto& ord : orders) {
                    std::array<int, 3> c{ix, iy, iz};
                    std::array<int, 4> tet{};
                    tet[0] = g.node_index(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[ord[s]];
                        tet[s + 1] = g.node_index(c[0], c[1], c[2]);
                    }
                    const Vec3& p0 = g.nodes[tet[0]];
                    const double vol =
                        (g.nodes[tet[1]] - p0).dot((g.nodes[tet[2]] - p0).cross(g.nodes[tet[3]] - p0));
                    if (vol < 0.0) {
                        std::swap(tet[2], tet[3]);
                    }
                    g.tets.push_back(tet);
                }
            }
        }
    }
    g.node_sdf = VecX::Zero(static_cast<Eigen::Index>(g.nodes.size()));
    return g;
}

void TetGrid::set_node_sdf(VecX values)
{
    if (values.size() != static_cast<Eigen::Index>(nodes.size())) {
        throw Error("node value count mismatch");
    }
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] == 0.0) {
            values[i] = 1e-9;
        }
    }
    node_sdf = std::move(values);
}

void TetGrid::evaluate(const SdfField& field)
{
    set_node_sdf(sdf_eval_batch(field, nodes));
}

void TetGrid::evaluate(const std::function<double(const Vec3&)>& fn)
{
    VecX v(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = fn(nodes[i]);
    }
    set_node_sdf(std::move(v));
}

namespace {

// Edge ids index into kTetEdges; case index = sum over nodes of (sdf > 0) << node.
constexpr std::array<std::array<int, 2>, 6> kTetEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
constexpr std::array<std::array<int, 6>, 16> kTriangleTable{{
    {-1, -1, -1, -1, -1, -1},
    {1, 0, 2, -1, -1, -1},
    {4, 0, 3, -1, -1, -1},
    {1, 4, 2, 1, 3, 4},
    {3, 1, 5, -1, -1, -1},
    {2, 3, 0, 2, 5, 3},
    {1, 4, 0, 1, 5, 4},
    {4, 2, 5, -1, -1, -1},
    {4, 5, 2, -1, -1, -1},
    {4, 1, 0, 4, 5, 1},
    {3, 2, 0, 3, 5, 2},
    {1, 3, 5, -1, -1, -1},
    {4, 1, 2, 4, 3, 1},
    {3, 0, 4, -1, -1, -1},
    {2, 0, 1, -1, -1, -1},
    {-1, -1, -1, -1, -1, -1},
}};

double crossing(double si, double sj) { return si / (si - sj); }

} // namespace

ExtractedMesh marching_tetrahedra(const TetGrid& grid)
{
    const VecX& s = grid.node_sdf;
    if (s.size() != static_cast<Eigen::Index>(grid.nodes.size())) {
        throw Error("grid has not been evaluated");
    }
    ExtractedMesh out;
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::unordered_map<std::int64_t, int> edge_vertex;
    const auto num_nodes = static_cast<std::int64_t>(grid.nodes.size());

    auto vertex_on = [&](int a, int b) {
        const int i = std::min(a, b);
        const int j = std::max(a, b);
        const std::int64_t key = static_cast<std::int64_t>(i) * num_nodes + j;
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) {
            return it->second;
        }
        const double t = crossing(s[i], s[j]);
        const int id = static_cast<int>(vertices.size());
        vertices.push_back((1.0 - t) * grid.nodes[i] + t * grid.nodes[j]);
        out.provenance.push_back({i, j, t});
        edge_vertex.emplace(key, id);
        return id;
    };

    for (const auto& tet : grid.tets) {
        int code = 0;
        for (int k = 0; k < 4; ++k) {
            code |= (s[tet[k]] > 0.0 ? 1 : 0) << k;
        }
        const auto& row = kTriangleTable[code];
        if (row[0] < 0) {
            continue;
        }
        Vec3 inside = Vec3::Zero();
        Vec3 outside = Vec3::Zero();
        int n_in = 0;
        for (int k = 0; k < 4; ++k) {
            if (s[tet[k]] > 0.0) {
                outside += grid.nodes[tet[k]];
            } else {
                inside += grid.nodes[tet[k]];
                ++n_in;
            }
        }
        const Vec3 toward_positive = outside / (4 - n_in) - inside / n_in;
        for (int tri = 0; tri < 2 && row[3 * tri] >= 0; ++tri) {
            Face f;
            for (int c = 0; c < 3; ++c) {
                const auto& e = kTetEdges[row[3 * tri + c]];
                f[c] = vertex_on(tet[e[0]], tet[e[1]]);
            }
            const Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
            if (n.dot(toward_positive) < 0.0) {
                std::swap(f[1], f[2]);
            }
            faces.push_back(f);
        }
    }
    out.mesh = Mesh(std::move(vertices), std::move(faces));
    return out;
}

ExtractedMesh marching_tetrahedra(TetGrid& grid, const SdfField& field)
{
    grid.evaluate(field);
    return marching_tetrahedra(grid);
}

bool refresh_vertices(ExtractedMesh& em, const TetGrid& grid)
{
    const VecX& s = grid.node_sdf;
    std::vector<Vec3> vertices(em.provenance.size());
    std::vector<double> ts(em.provenance.size());
    for (std::size_t v = 0; v < em.provenance.size(); ++v) {
        const auto& pv = em.provenance[v];
        const double si = s[pv.node_i];
        const double sj = s[pv.node_j];
        if ((si > 0.0) == (sj > 0.0)) {
            return false;
        }
        ts[v] = crossing(si, sj);
        vertices[v] = (1.0 - ts[v]) * grid.nodes[pv.node_i] + ts[v] * grid.nodes[pv.node_j];
    }
    for (std::size_t v = 0; v < ts.size(); ++v) {
        em.provenance[v].t = ts[v];
    }
    em.mesh = em.mesh.with_vertices(std::move(vertices));
    return true;
}

std::vector<VertexJacobian> mt_vertex_jacobian(const ExtractedMesh& em, const TetGrid& grid,
                                               std::span<const double> node_sdf)
{
    if (node_sdf.size() != grid.nodes.size()) {
        throw Error("node value count mismatch");
    }
    std::vector<VertexJacobian> jac;
    jac.reserve(em.provenance.size());
    for (const auto& pv : em.provenance) {
        const double si = node_sdf[pv.node_i];
        const double sj = node_sdf[pv.node_j];
        const double denom = si - sj;
        if (std::abs(denom) < 1e-12) {
            throw Error("degenerate crossing");
        }
        // t = si / (si - sj)
        const double dt_dsi = -sj / (denom * denom);
        const double dt_dsj = si / (denom * denom);
        const Vec3 edge = grid.nodes[pv.node_j] - grid.nodes[pv.node_i];
        jac.push_back({pv.node_i, pv.node_j, edge * dt_dsi, edge * dt_dsj});
    }
    return jac;
}

VecX mt_backward(const std::vector<VertexJacobian>& jac, std::span<const Vec3> grad_vertices, Eigen::Index num_nodes)
{
    if (jac.size() != grad_vertices.size()) {
        throw Error("vertex gradient count mismatch");
    }
    VecX g = VecX::Zero(num_nodes);
    for (std::size_t v = 0; v < jac.size(); ++v) {
        g[jac[v].node_i] += jac[v].d_si.dot(grad_vertices[v]);
        g[jac[v].node_j] += jac[v].d_sj.dot(grad_vertices[v]);
    }
    return g;
}

std::vector<Vec3> sample_eikonal_points(const Bounds3D& bounds, const Mesh& mesh, int n, std::mt19937_64& rng)
{
    if (n <= 0) {
        throw Error("sample count must be positive");
    }
    const int n_surface = mesh.num_vertices() > 0 ? n / 2 : 0;
    const int n_uniform = n - n_surface;
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n_uniform; ++i) {
        const Vec3 u(unit(rng), unit(rng), unit(rng));
        out.push_back(bounds.min + u.cwiseProduct(bounds.max - bounds.min));
    }
    if (n_surface > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, mesh.num_vertices() - 1);
        std::normal_distribution<double> noise(0.0, 0.05 * bounds.max_extent());
        for (int i = 0; i < n_surface; ++i) {
            const Vec3& v = mesh.vertices()[pick(rng)];
            out.push_back(v + Vec3(noise(rng), noise(rng), noise(rng)));
        }
    }
    return out;
}

double eikonal_loss(const SdfField& field, std::span<const Vec3> samples)
{
    if (samples.empty()) {
        throw Error("empty samples");
    }
    return field.mlp.eikonal(to_matrix(samples), nullptr);
}

double eikonal_loss_grad(const SdfField& field, std::span<const Vec3> samples, VecX& grad, double weight)
{
    if (samples.empty()) {
        throw Error("empty samples");
    }
    if (grad.size() != field.mlp.num_params()) {
        grad = VecX::Zero(field.mlp.num_params());
    }
    return field.mlp.eikonal(to_matrix(samples), &grad, weight);
}

} // namespace catcorr
