#include "fixtures.hpp"

#include "catcorr/correspond.hpp"

#include <doctest.h>

using namespace catcorr;
using namespace fixtures;

namespace {

InstanceState make_state(const std::string& id, const Mesh& mesh, const Pose& pose)
{
    return {id, mesh, pose, small_camera(32)};
}

// A point on a random face of the posed mesh.
Vec3 surface_point(const Mesh& posed, std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::size_t> face(0, posed.num_faces() - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
    }
    return decode_surface_point({static_cast<int>(face(rng)), Vec3(1.0 - a - b, a, b)}, posed);
}

} // namespace

TEST_CASE("identity transfer on the surface")
{
    std::mt19937_64 rng(1);
    const Pose pose{random_rotation(rng), Vec3(0.1, 0, 3), 1.2};
    const InstanceState s = make_state("a", unit_cube_mesh(), pose);
    const Mesh posed = apply_pose(s.deformed_mesh, s.pose);
    for (int i = 0; i < 100; ++i) {
        const Vec3 x = surface_point(posed, rng);
        const CorrespondencePrediction p = predict_correspondence(x, s, s);
        CHECK((p.point - x).norm() < 1e-9);
        CHECK(p.query_surface_distance < 1e-9);
    }
}

TEST_CASE("transfer is equivariant to re-posing the target")
{
    std::mt19937_64 rng(2);
    const Mesh t = tetrahedron();
    std::vector<Vec3> dv = t.vertices();
    for (Vec3& v : dv) {
        v = Vec3(1.2 * v[0], 0.9 * v[1], v[2]) + Vec3(0.05, 0, 0);
    }
    const InstanceState q = make_state("q", t, Pose{random_rotation(rng), Vec3(0, 0, 3), 1.0});
    InstanceState tg = make_state("t", t.with_vertices(dv), Pose{random_rotation(rng), Vec3(0.2, 0, 3), 0.8});
    std::normal_distribution<double> n(0.0, 0.3);
    for (int i = 0; i < 50; ++i) {
        const Vec3 xq = q.pose.translation + Vec3(n(rng), n(rng), n(rng));
        const Vec3 base = predict_correspondence(xq, q, tg).point;
        const Pose g{random_rotation(rng), Vec3(n(rng), n(rng), n(rng)), 1.0};
        InstanceState moved = tg;
        moved.pose = g.compose(tg.pose);
        CHECK((predict_correspondence(xq, q, moved).point - g.apply(base)).norm() < 1e-9);
    }
}

TEST_CASE("template mismatch is an error")
{
    const InstanceState a = make_state("a", tetrahedron(), front_pose());
    const InstanceState b = make_state("b", unit_cube_mesh(), front_pose());
    CHECK_THROWS_WITH_AS(predict_correspondence(Vec3(0, 0, 3), a, b), "template mismatch", Error);
}

TEST_CASE("batch prediction keeps order and records per-pair errors")
{
    const InstanceState a = make_state("a", tetrahedron(), front_pose());
    const InstanceState b = make_state("b", tetrahedron(0.4), front_pose(2.5));
    const ViewLookup lookup = [&](const std::string& v) -> const InstanceState* {
        if (v == "a/0") {
            return &a;
        }
        if (v == "b/0") {
            return &b;
        }
        return nullptr;
    };
    CHECK(batch_predict({}, lookup).empty());
    std::vector<PairRecord> pairs{{"p0", "a/0", "b/0", 0, Vec3(0.1, 0.1, 3.2)},
                                  {"p1", "a/0", "zz/0", 0, Vec3(0.1, 0.1, 3.2)},
                                  {"p0", "a/0", "b/0", 0, Vec3(0.1, 0.1, 3.2)}};
    const auto res = batch_predict(pairs, lookup);
    REQUIRE(res.size() == 3);
    CHECK(res[0].prediction.has_value());
    CHECK_FALSE(res[1].prediction.has_value());
    CHECK_FALSE(res[1].error.empty());
    CHECK(res[2].prediction->point == res[0].prediction->point);

    std::vector<PairRecord> shuffled{pairs[2], pairs[1], pairs[0]};
    const auto res2 = batch_predict(shuffled, lookup);
    CHECK(res2[0].prediction->point == res[2].prediction->point);
    CHECK(res2[1].error == res[1].error);
}

TEST_CASE("pose noise")
{
    std::mt19937_64 rng(3);
    const Pose p{random_rotation(rng), Vec3(0.1, 0.2, 3), 1.1};
    const Pose same = perturb_pose(p, {}, rng);
    CHECK(same.rotation == p.rotation);
    CHECK(same.translation == p.translation);
    CHECK(same.scale == p.scale);
    std::mt19937_64 r1(4), r2(4);
    const Pose n1 = perturb_pose(p, {5.0, 0.01, 0.02}, r1);
    const Pose n2 = perturb_pose(p, {5.0, 0.01, 0.02}, r2);
    CHECK(n1.rotation == n2.rotation);
    CHECK_NOTHROW(n1.validate());
    CHECK((n1.rotation - p.rotation).norm() > 0.0);
}

TEST_CASE("prediction JSONL round trip")
{
    TempDir dir("pred");
    PairResult ok{{"p0", "a/0", "b/1", 2, Vec3(0.25, -0.5, 3)}, CorrespondencePrediction{}, ""};
    ok.prediction->point = Vec3(1.0 / 3.0, 0.2, 2.9);
    ok.prediction->sid = {4, Vec3(0.2, 0.3, 0.5)};
    const PairResult bad{{"p1", "a/0", "c/0", 1, Vec3::Zero()}, std::nullopt, "unknown view 'c/0'"};
    write_file_atomic(dir.path / "p.jsonl", predictions_to_jsonl({ok, bad}));
    const auto back = read_predictions(dir.path / "p.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].prediction->point == ok.prediction->point);
    CHECK(back[0].prediction->sid.face == 4);
    CHECK(back[0].pair.keypoint == 2);
    CHECK_FALSE(back[1].prediction.has_value());
    CHECK(back[1].error == bad.error);
    write_file_atomic(dir.path / "bad.jsonl", "{not json\n");
    CHECK_THROWS_AS(read_predictions(dir.path / "bad.jsonl"), InputError);
}
