#include "fixtures.hpp"

#include <doctest.h>

using namespace catcorr;
using namespace fixtures;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> out(n);
    for (Vec3& p : out) {
        p = Vec3(u(rng), u(rng), u(rng));
    }
    return out;
}

// Dense barycentric sampling, used as an oracle for closest points.
double sampled_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, int n)
{
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
            const double u = static_cast<double>(i) / n;
            const double v = static_cast<double>(j) / n;
            best = std::min(best, (p - (a + u * (b - a) + v * (c - a))).norm());
        }
    }
    return best;
}

} // namespace

TEST_CASE("mesh rejects bad faces and deduplicates edges")
{
    CHECK_THROWS_AS(Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}}), Error);
    CHECK_THROWS_AS(Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 1}}), Error);
    const Mesh t = tetrahedron();
    CHECK(t.edges().size() == 6);
    for (const Edge& e : t.edges()) {
        CHECK(e[0] < e[1]);
    }
    CHECK(unit_cube_mesh().edges().size() == 18);
}

TEST_CASE("closest point on triangle: interior, edge and vertex regions")
{
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    auto cp = closest_point_on_triangle(Vec3(0.25, 0.25, 2.0), a, b, c);
    CHECK((cp.point - Vec3(0.25, 0.25, 0.0)).norm() < 1e-15);
    CHECK((cp.bary - Vec3(0.5, 0.25, 0.25)).norm() < 1e-15);
    cp = closest_point_on_triangle(Vec3(0.5, -1.0, 0.0), a, b, c);
    CHECK((cp.point - Vec3(0.5, 0.0, 0.0)).norm() < 1e-15);
    cp = closest_point_on_triangle(Vec3(-1.0, -1.0, 0.3), a, b, c);
    CHECK((cp.point - a).norm() < 1e-15);
    CHECK(cp.bary[0] == doctest::Approx(1.0));
}

TEST_CASE("closest point matches dense sampling on random triangles")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
        const Vec3 p(2 * u(rng), 2 * u(rng), 2 * u(rng));
        const auto cp = closest_point_on_triangle(p, a, b, c);
        const double sampled = sampled_triangle_distance(p, a, b, c, 200);
        CHECK((p - cp.point).norm() <= sampled + 1e-12);
        CHECK((p - cp.point).norm() >= sampled - 0.02);
        for (const Vec3* v : {&a, &b, &c}) {
            CHECK((p - cp.point).norm() <= (p - *v).norm() + 1e-12);
        }
        CHECK(cp.bary.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cp.bary.minCoeff() >= -1e-12);
        CHECK((cp.bary[0] * a + cp.bary[1] * b + cp.bary[2] * c - cp.point).norm() < 1e-12);
    }
}

TEST_CASE("project then decode returns the surface point")
{
    const Mesh cube = unit_cube_mesh();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const MeshProjection pr = project_to_mesh(Vec3(2 * u(rng) - 0.5, 2 * u(rng) - 0.5, 2 * u(rng) - 0.5), cube);
        CHECK((decode_surface_point(pr.sid, cube) - pr.point).norm() < 1e-12);
        const MeshProjection again = project_to_mesh(pr.point, cube);
        CHECK(again.distance < 1e-12);
    }
}

TEST_CASE("project_to_mesh ties go to the lowest face")
{
    const Mesh cube = unit_cube_mesh();
    // A cube corner is shared by several faces.
    const MeshProjection pr = project_to_mesh(Vec3(-1, -1, -1), cube);
    CHECK(pr.sid.face == 0);
    CHECK(pr.distance == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("decode examples")
{
    const Mesh t = tetrahedron();
    const auto [a, b, c] = t.triangle(2);
    CHECK(decode_surface_point({2, Vec3(1, 0, 0)}, t) == a);
    CHECK((decode_surface_point({2, Vec3::Constant(1.0 / 3.0)}, t) - (a + b + c) / 3.0).norm() < 1e-15);
    CHECK_THROWS_AS(decode_surface_point({7, Vec3(1, 0, 0)}, t), Error);
    CHECK_THROWS_AS(decode_surface_point({-1, Vec3(1, 0, 0)}, t), Error);
}

TEST_CASE("project_to_mesh on a centered unit cube")
{
    std::vector<Vec3> v = unit_cube_mesh().vertices();
    for (Vec3& p : v) {
        p -= Vec3::Constant(0.5);
    }
    const Mesh cube = unit_cube_mesh().with_vertices(v);
    MeshProjection pr = project_to_mesh(Vec3(2, 0, 0), cube);
    CHECK((pr.point - Vec3(0.5, 0, 0)).norm() < 1e-15);
    CHECK(pr.distance == doctest::Approx(1.5));
    // Far out along the corner direction the projection is that vertex.
    pr = project_to_mesh(Vec3(3, 3, 3), cube);
    CHECK((pr.point - Vec3::Constant(0.5)).norm() < 1e-15);
    CHECK(pr.sid.bary.maxCoeff() == doctest::Approx(1.0));
    CHECK_THROWS_AS(project_to_mesh(Vec3::Zero(), Mesh()), Error);
}

TEST_CASE("nearest neighbors and chamfer agree with the serial oracle")
{
    const auto a = random_cloud(700, 1);
    const auto b = random_cloud(500, 2);
    CHECK(nearest_neighbors(a, b) == reference::nearest_neighbors(a, b));
    CHECK(chamfer_distance(a, b) == doctest::Approx(reference::chamfer_distance(a, b)).epsilon(1e-14));
}

TEST_CASE("chamfer examples")
{
    const std::vector<Vec3> a{{0, 0, 0}, {1, 0, 0}};
    CHECK(chamfer_distance(a, a) == 0.0);
    const std::vector<Vec3> one{{0, 0, 0}};
    const std::vector<Vec3> two{{1, 0, 0}, {0, 1, 0}};
    CHECK(chamfer_distance(one, two) == doctest::Approx(1.0));
    const std::vector<Vec3> b{{0, 0, 2}};
    // a->b: 2 and sqrt(5); b->a: 2; normalized by 3 points.
    CHECK(chamfer_distance(a, b) == doctest::Approx((4.0 + std::sqrt(5.0)) / 3.0));
    CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)));
    CHECK_THROWS_AS(chamfer_distance(a, std::vector<Vec3>{}), Error);
}

TEST_CASE("chamfer gradient matches central differences")
{
    auto a = random_cloud(30, 3);
    const auto b = random_cloud(40, 4);
    std::vector<Vec3> grad;
    chamfer_distance_grad(a, b, grad);
    const double h = 1e-7;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const double keep = a[i][k];
            a[i][k] = keep + h;
            const double fp = chamfer_distance(a, b);
            a[i][k] = keep - h;
            const double fm = chamfer_distance(a, b);
            a[i][k] = keep;
            CHECK(grad[i][k] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
        }
    }
}

TEST_CASE("bounds of a point set")
{
    const Bounds3D bb = bounds3d(unit_cube_mesh().vertices());
    CHECK(bb.min == Vec3::Zero());
    CHECK(bb.max == Vec3::Ones());
    CHECK(bb.diagonal() == doctest::Approx(std::sqrt(3.0)));
    CHECK_THROWS_AS(bounds3d(std::vector<Vec3>{}), Error);
}

TEST_CASE("OBJ round trip is exact")
{
    TempDir dir("obj");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> v(4);
    for (Vec3& p : v) {
        p = Vec3(u(rng), u(rng), u(rng));
    }
    const Mesh m = tetrahedron().with_vertices(v);
    write_obj(dir.path / "m.obj", m);
    const Mesh r = read_obj(dir.path / "m.obj");
    CHECK(r.vertices() == m.vertices());
    CHECK(r.faces() == m.faces());
}

TEST_CASE("OBJ reader rejects malformed files")
{
    TempDir dir("objbad");
    write_file_atomic(dir.path / "bad.obj", "v 0 0 0\nv 1 0 0\nf 1 2 3\n");
    CHECK_THROWS_AS(read_obj(dir.path / "bad.obj"), InputError);
    write_file_atomic(dir.path / "nan.obj", "v 0 0 zz\n");
    CHECK_THROWS_AS(read_obj(dir.path / "nan.obj"), InputError);
    CHECK_THROWS_AS(read_obj(dir.path / "missing.obj"), InputError);
}
