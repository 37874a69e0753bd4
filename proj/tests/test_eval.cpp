#include "fixtures.hpp"

#include "catcorr/eval.hpp"

#include <doctest.h>

#include <numbers>

using namespace catcorr;
using namespace fixtures;

namespace {

SymmetrySpec continuous_y()
{
    SymmetrySpec s;
    s.kind = SymmetryKind::Continuous;
    return s;
}

KeypointPair make_pair(const std::string& cat, double err, bool modal)
{
    KeypointPair p;
    p.pair_id = cat + std::to_string(err);
    p.category = cat;
    p.gt_target = Vec3::Zero();
    p.predicted = Vec3(err, 0, 0);
    p.target_bbox = {Vec3::Zero(), Vec3(1, 0.5, 0.5)};
    p.modality.modal = modal;
    p.modality.reason = modal ? Visibility::Visible : Visibility::SelfOccluded;
    return p;
}

Mesh centered_cube(double half, const Vec3& at)
{
    std::vector<Vec3> v = unit_cube_mesh().vertices();
    for (Vec3& p : v) {
        p = (p - Vec3::Constant(0.5)) * (2 * half) + at;
    }
    return unit_cube_mesh().with_vertices(v);
}

} // namespace

TEST_CASE("sym_error examples")
{
    SymmetrySpec none;
    CHECK(sym_error(Vec3(1, 0, 0), Vec3(1, 0, 0), none) == 0.0);
    CHECK(sym_error(Vec3(1, 0, 0), Vec3(0, 1, 0), none) == doctest::Approx(std::sqrt(2.0)));

    // A point rotated about the axis lies on the orbit.
    CHECK(sym_error(Vec3(1, 0.3, 0), Vec3(0, 0.3, 1), continuous_y()) < 1e-15);
    CHECK(sym_error(Vec3(1, 0, 0), Vec3(0, 0, 2), continuous_y()) == doctest::Approx(1.0));
    // On the axis the orbit is a single point.
    CHECK(sym_error(Vec3(0, 0.5, 0), Vec3(0.3, 0.5, 0.4), continuous_y()) == doctest::Approx(0.5));

    SymmetrySpec d2;
    d2.kind = SymmetryKind::Discrete;
    d2.n = 2;
    CHECK(sym_error(Vec3(1, 0, 0), Vec3(-1, 0, 0), d2) < 1e-15);
    CHECK(sym_error(Vec3(1, 0, 0), Vec3(0, 0, 1), d2) == doctest::Approx(std::sqrt(2.0)));
    d2.n = 1;
    CHECK_THROWS_AS(sym_error(Vec3::Zero(), Vec3::Zero(), d2), Error);
    SymmetrySpec bad_axis = continuous_y();
    bad_axis.axis_dir = Vec3(0, 2, 0);
    CHECK_THROWS_AS(sym_error(Vec3::Zero(), Vec3::Zero(), bad_axis), Error);
}

TEST_CASE("continuous sym_error matches a sampled orbit")
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        SymmetrySpec s = continuous_y();
        s.axis_dir = Vec3(n(rng), n(rng), n(rng)).normalized();
        s.axis_point = Vec3(n(rng), n(rng), n(rng)) * 0.3;
        const Vec3 gt(n(rng), n(rng), n(rng));
        const Vec3 pred(n(rng), n(rng), n(rng));
        double best = std::numeric_limits<double>::infinity();
        const int samples = 20000;
        for (int k = 0; k < samples; ++k) {
            const Eigen::AngleAxisd rot(2 * std::numbers::pi * k / samples, s.axis_dir);
            best = std::min(best, (rot * (gt - s.axis_point) + s.axis_point - pred).norm());
        }
        const double closed = sym_error(gt, pred, s);
        CHECK(closed <= best + 1e-12);
        CHECK(closed == doctest::Approx(best).scale(1.0).epsilon(1e-5));
    }
}

TEST_CASE("sym_error is invariant under a shared rigid motion")
{
    std::mt19937_64 rng(2);
    SymmetrySpec s = continuous_y();
    s.axis_point = Vec3(0.1, 0, -0.2);
    Pose pose{random_rotation(rng), Vec3(0.3, -0.1, 2.0), 1.4};
    const Vec3 gt(0.4, 0.2, 0.1), pred(-0.2, 0.3, 0.3);
    CHECK(sym_error(pose.apply(gt), pose.apply(pred), s.transformed(pose)) ==
          doctest::Approx(1.4 * sym_error(gt, pred, s)));
}

TEST_CASE("symmetry JSON round trip and validation")
{
    SymmetrySpec d;
    d.kind = SymmetryKind::Discrete;
    d.n = 4;
    d.axis_point = Vec3(0.5, 0, 0);
    const SymmetrySpec back = symmetry_from_json(to_json(d));
    CHECK(back.kind == SymmetryKind::Discrete);
    CHECK(back.n == 4);
    CHECK(back.axis_point == d.axis_point);
    CHECK_THROWS_AS(symmetry_from_json(json{{"kind", "spiral"}}), InputError);
    CHECK_THROWS_AS(symmetry_from_json(json{{"kind", "discrete"}, {"N", 1}}), InputError);
}

TEST_CASE("pck uses a strict threshold on the largest scaled extent")
{
    // Largest extent 1, ratio 0.1: threshold 0.1.
    std::vector<KeypointPair> pairs{make_pair("mug", 0.05, true), make_pair("mug", 0.1, true),
                                    make_pair("mug", 0.2, false)};
    EvalReport r = pck(pairs, 0.1);
    const CategoryReport& c = r.categories.at("mug");
    CHECK(c.modal.correct == 1);
    CHECK(c.modal.count == 2);
    CHECK(c.amodal.count == 1);
    CHECK(c.all.count == 3);
    CHECK(*c.all.pck() == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(r.pairs[1].correct);

    pairs[1].target_scale = 1.5;
    r = pck(pairs, 0.1);
    CHECK(r.pairs[1].correct);
    CHECK(r.pairs[1].threshold == doctest::Approx(0.15));
}

TEST_CASE("missing predictions are scored as misses, never dropped")
{
    std::vector<KeypointPair> pairs{make_pair("mug", 0.0, false)};
    pairs[0].has_prediction = false;
    const EvalReport r = pck(pairs, 0.1);
    CHECK(r.categories.at("mug").amodal.count == 1);
    CHECK(r.categories.at("mug").amodal.correct == 0);
    CHECK(std::isinf(r.pairs[0].error));
}

TEST_CASE("pck input validation")
{
    CHECK_THROWS_AS(pck(std::vector<KeypointPair>{}, 0.1), Error);
    std::vector<KeypointPair> pairs{make_pair("mug", 0.0, true)};
    CHECK_THROWS_AS(pck(pairs, -0.1), Error);
    pairs[0].target_bbox = {Vec3::Zero(), Vec3(1, 0, 1)};
    CHECK_THROWS_AS(pck(pairs, 0.1), Error);
}

TEST_CASE("category means: unweighted and keypoint-weighted")
{
    std::vector<KeypointPair> pairs{make_pair("a", 0.0, true), make_pair("b", 0.0, true), make_pair("b", 0.5, true),
                                    make_pair("b", 0.5, true), make_pair("b", 0.5, true)};
    const EvalReport r = pck(pairs, 0.1);
    CHECK(*r.mean(&CategoryReport::modal) == doctest::Approx((1.0 + 0.25) / 2));
    CHECK(*r.weighted_mean(&CategoryReport::modal) == doctest::Approx(2.0 / 5.0));
    CHECK_FALSE(r.mean(&CategoryReport::amodal).has_value());
    const json j = to_json(r);
    CHECK(j["categories"]["a"]["pck3d_amodal"].is_null());
    CHECK(j["mean"]["pck3d_modal"].get<double>() == doctest::Approx(0.625));
    CHECK(j["pairs"].size() == 5);
    CHECK(to_csv(r).rfind("category,2d,3d_modal,3d_amodal,3d_all\n", 0) == 0);
    CHECK(format_table(r).find("mean") != std::string::npos);
}

TEST_CASE("2D pck slice")
{
    KeypointPair2D p;
    p.category = "mug";
    p.gt = Vec2(10, 10);
    p.predicted = Vec2(13, 10);
    p.bbox_width = 40;
    p.bbox_height = 20;
    const auto near = pck2d(std::vector<KeypointPair2D>{p}, 0.1);
    CHECK(near.at("mug").correct == 1);
    p.predicted = Vec2(14, 10);
    CHECK(pck2d(std::vector<KeypointPair2D>{p}, 0.1).at("mug").correct == 0);
    p.bbox_width = p.bbox_height = 0;
    CHECK_THROWS_AS(pck2d(std::vector<KeypointPair2D>{p}, 0.1), Error);
}

TEST_CASE("modality classification")
{
    const Camera cam = small_camera(32);
    const Mesh cube = centered_cube(0.3, Vec3::Zero());
    const ViewScene plain{cube, front_pose(3.0), cam, {}};
    const Vec3 front(0.05, 0.0, -0.3);
    const Vec3 back(0.05, 0.0, 0.3);
    CHECK(classify_modality(front, plain, front, plain).modal);
    const ModalityLabel self = classify_modality(back, plain, front, plain);
    CHECK_FALSE(self.modal);
    CHECK(self.reason == Visibility::SelfOccluded);
    CHECK(to_string(self) == "Amodal(SelfOccluded)");

    const Mesh wall({{-1, -1, 2}, {1, -1, 2}, {1, 1, 2}, {-1, 1, 2}}, {{0, 1, 2}, {0, 2, 3}});
    const ViewScene blocked{cube, front_pose(3.0), cam, {wall}};
    const ModalityLabel other = classify_modality(front, plain, front, blocked);
    CHECK(other.reason == Visibility::OccludedByOther);
    // The query view's reason wins.
    CHECK(classify_modality(back, plain, front, blocked).reason == Visibility::SelfOccluded);
}
