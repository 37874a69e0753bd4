#include "fixtures.hpp"

#include "catcorr/bench.hpp"

#include <doctest.h>

#include <set>

using namespace catcorr;
using namespace fixtures;

namespace {

const std::filesystem::path kData = CATCORR_DATA_DIR;

std::map<std::string, Bounds3D> cube_bounds(const std::vector<std::string>& ids)
{
    std::map<std::string, Bounds3D> out;
    for (const auto& id : ids) {
        out[id] = {Vec3::Constant(-0.5), Vec3::Constant(0.5)};
    }
    return out;
}

AnnotationSet one_instance(const std::vector<std::optional<Vec3>>& kps)
{
    AnnotationSet s;
    s.instances["x"] = kps;
    return s;
}

} // namespace

TEST_CASE("category specs")
{
    const CategorySpec mug = CategorySpec::mug();
    CHECK(mug.family == "mug");
    CHECK_NOTHROW(mug.validate());
    CHECK(CategorySpec::by_name("bottle").family == "bottle");
    CHECK_THROWS_AS(CategorySpec::by_name("teapot"), InputError);
    CategorySpec bad = mug;
    bad.ranges["height"] = {1.0, 0.5};
    CHECK_THROWS_AS(bad.validate(), Error);
    const CategorySpec back = category_spec_from_json(to_json(mug));
    CHECK(back.ranges.size() == mug.ranges.size());
    CHECK(category_spec_from_json(read_json(kData / "mug.json")).family == "mug");
    CHECK(category_spec_from_json(read_json(kData / "bottle.json")).family == "bottle");
}

TEST_CASE("generated instances are deterministic, normalized and keep keypoints near the surface")
{
    for (const auto& spec : {CategorySpec::mug(), CategorySpec::bottle()}) {
        const GeneratedInstance a = generate_instance(spec, 11, "i");
        const GeneratedInstance b = generate_instance(spec, 11, "i");
        CHECK(a.mesh.vertices() == b.mesh.vertices());
        CHECK(a.keypoints == b.keypoints);
        const Bounds3D bb = bounds3d(a.mesh.vertices());
        CHECK(bb.max_extent() == doctest::Approx(1.0));
        CHECK((bb.min + bb.max).norm() < 1e-12);
        CHECK(a.keypoint_names.size() == a.keypoints.size());
        for (const Vec3& k : a.keypoints) {
            CHECK((k.array() >= bb.min.array() - 1e-9).all());
            CHECK((k.array() <= bb.max.array() + 1e-9).all());
            CHECK(project_to_mesh(k, a.mesh).distance < 0.02);
        }
        for (const auto& [name, range] : spec.ranges) {
            CHECK(a.params.at(name) >= range.min);
            CHECK(a.params.at(name) <= range.max);
        }
    }
    CHECK(generate_instance(CategorySpec::bottle(), 1, "b").symmetry.kind == SymmetryKind::Continuous);
    CHECK(generate_instance(CategorySpec::mug(), 1, "m").symmetry.kind == SymmetryKind::None);
}

TEST_CASE("build_instance rejects out-of-range parameters")
{
    const CategorySpec mug = CategorySpec::mug();
    auto params = generate_instance(mug, 3, "x").params;
    CHECK_NOTHROW(build_instance(mug, params, "x"));
    params["height"] = 5.0;
    CHECK_THROWS_AS(build_instance(mug, params, "x"), Error);
}

TEST_CASE("generated views: masks, depth and occluders")
{
    const GeneratedInstance inst = generate_instance(CategorySpec::mug(), 5, "x");
    const Camera cam = default_camera();
    const auto views = generate_views(inst.mesh, 4, cam, OccluderPolicy::Full, 9);
    REQUIRE(views.size() == 4);
    for (const GeneratedView& v : views) {
        CHECK(v.occluders.size() >= 1);
        double amodal = 0.0;
        for (std::size_t i = 0; i < v.amodal_mask.values.size(); ++i) {
            // The modal mask is the amodal one minus what the occluders hide.
            CHECK(v.modal_mask.values[i] <= v.amodal_mask.values[i]);
            amodal += v.amodal_mask.values[i];
        }
        CHECK(amodal > 50.0);
        const auto again = generate_views(inst.mesh, 4, cam, OccluderPolicy::Full, 9);
        CHECK(again[0].pose.rotation == views[0].pose.rotation);
    }
    const auto none = generate_views(inst.mesh, 2, cam, OccluderPolicy::None, 9);
    for (const GeneratedView& v : none) {
        CHECK(v.occluders.empty());
        CHECK(v.modal_mask.values == v.amodal_mask.values);
    }
    CHECK_THROWS_AS(occluder_policy_from_string("some"), InputError);
}

TEST_CASE("dataset generation, manifest round trip and pairs")
{
    TempDir dir("gen");
    const Dataset ds = generate_dataset(CategorySpec::mug(), dir.path, 3, 2, OccluderPolicy::Random, 4);
    CHECK(ds.instances.size() == 3);
    const Dataset back = load_dataset(dir.path / "manifest.json");
    CHECK(back.category == "mug");
    REQUIRE(back.instances.size() == 3);
    CHECK(back.instances[1].views.size() == 2);
    CHECK(back.instances[1].keypoints == ds.instances[1].keypoints);
    CHECK(back.instances[2].views[1].pose.rotation == ds.instances[2].views[1].pose.rotation);
    CHECK(std::filesystem::exists(dir.path / back.instances[0].mesh_path));
    CHECK(std::filesystem::exists(dir.path / back.instances[0].views[0].amodal_mask_path));

    const auto pairs = read_pairs(dir.path / "pairs.jsonl");
    CHECK(pairs.size() == 3 * 2 * ds.instances[0].keypoints.size());
    std::set<std::string> ids;
    for (const PairRecord& p : pairs) {
        CHECK(parse_view_id(p.query_view).first != parse_view_id(p.target_view).first);
        ids.insert(p.pair_id);
        const auto [qi, qk] = parse_view_id(p.query_view);
        const InstanceRecord* r = back.find(qi);
        REQUIRE(r != nullptr);
        CHECK((r->views[qk].pose.apply(r->keypoints[static_cast<std::size_t>(p.keypoint)]) - p.xq).norm() < 1e-12);
    }
    CHECK(ids.size() == pairs.size());
    CHECK_THROWS_AS(parse_view_id("nope"), InputError);
    CHECK(view_id("inst001", 3) == "inst001/3");

    TempDir empty("gen0");
    CHECK(generate_dataset(CategorySpec::mug(), empty.path, 0, 1, OccluderPolicy::None, 0).instances.empty());
}

TEST_CASE("manifest schema violations are input errors")
{
    CHECK_THROWS_AS(dataset_from_json(json{{"version", 1}}, "."), InputError);
    CHECK_THROWS_AS(dataset_from_json(json{{"version", 7}, {"category", "mug"}, {"instances", json::array()}}, "."),
                    InputError);
}

TEST_CASE("merge fixture reproduces the expected statuses and final set")
{
    const std::filesystem::path dir = kData / "merge";
    const AnnotationSet a = annotation_set_from_json(read_json(dir / "set_a.json"));
    const AnnotationSet b = annotation_set_from_json(read_json(dir / "set_b.json"));
    std::map<std::string, Bounds3D> bounds;
    const json meshes = read_json(dir / "meshes.json");
    for (const auto& [id, path] : meshes.items()) {
        bounds[id] = bounds3d(read_obj(dir / path.get<std::string>()).vertices());
    }
    const MergeOutcome out = merge_annotations(a, b, bounds, 0.05);
    const json expected = read_json(dir / "expected_statuses.json");
    REQUIRE(out.entries.size() == expected.size());
    for (const MergeEntry& e : out.entries) {
        CHECK(expected.at(e.key).get<std::string>() == to_string(e.status));
    }
    const auto decisions = decisions_from_json(read_json(dir / "decisions.json"));
    const json final_set = to_json(apply_manual_decisions(out, a, b, decisions));
    CHECK(final_set == read_json(dir / "expected_final.json"));
    CHECK_THROWS_AS(apply_manual_decisions(out, a, b, {}), Error);
}

TEST_CASE("merge rules on small cases")
{
    const auto bounds = cube_bounds({"x"});
    // Limit is 5% of sqrt(3).
    const auto a = one_instance({Vec3(0, 0, 0)});
    auto out = merge_annotations(a, one_instance({Vec3(0.08, 0, 0)}), bounds);
    CHECK(out.entries.at(0).status == MergeStatus::AutoAccept);
    CHECK((*out.keypoints.at(0).positions.at("x") - Vec3(0.04, 0, 0)).norm() < 1e-15);
    out = merge_annotations(a, one_instance({Vec3(0.09, 0, 0)}), bounds);
    CHECK(out.entries.at(0).status == MergeStatus::AutoSplit);
    CHECK(out.keypoints.size() == 2);
    out = merge_annotations(a, one_instance({}), bounds);
    CHECK(out.entries.at(0).status == MergeStatus::AutoUnmatched);

    CHECK_THROWS_AS(merge_annotations(a, one_instance({Vec3::Zero()}), cube_bounds({"y"})), Error);
    AnnotationSet other;
    other.instances["z"] = {Vec3::Zero()};
    CHECK_THROWS_AS(merge_annotations(a, other, cube_bounds({"x", "z"})), Error);
}

TEST_CASE("manual decisions: REJECT drops, duplicates and strays are errors")
{
    const std::filesystem::path dir = kData / "merge";
    const AnnotationSet a = annotation_set_from_json(read_json(dir / "set_a.json"));
    const AnnotationSet b = annotation_set_from_json(read_json(dir / "set_b.json"));
    const auto out = merge_annotations(a, b, cube_bounds({"inst0", "inst1", "inst2"}));
    const auto rejected = apply_manual_decisions(out, a, b, {{"A4+B3", MergeAction::Reject}});
    CHECK(rejected.size() == 5);
    const auto set2 = apply_manual_decisions(out, a, b, {{"A4+B3", MergeAction::AcceptSet2}});
    CHECK(set2.back().name == "B3");
    CHECK_THROWS_AS(
        apply_manual_decisions(out, a, b, {{"A4+B3", MergeAction::Reject}, {"A4+B3", MergeAction::AcceptMean}}),
        Error);
    CHECK_THROWS_AS(
        apply_manual_decisions(out, a, b, {{"A4+B3", MergeAction::Reject}, {"A0+B0", MergeAction::Reject}}), Error);
    CHECK_THROWS_AS(merge_action_from_string("MAYBE"), InputError);
}

TEST_CASE("HueGrid colors")
{
    const Bounds3D b{Vec3::Zero(), Vec3::Ones()};
    HueGridColor c = huegrid_color(Vec3::Zero(), b, 4);
    CHECK(c.rgb == Vec3::Zero());
    CHECK(c.parity == 0);
    c = huegrid_color(Vec3::Ones(), b, 2);
    CHECK(c.parity == 0);
    CHECK(c.rgb == Vec3::Ones());
    // Crossing one cell boundary flips the parity.
    CHECK(huegrid_color(Vec3(0.24, 0.1, 0.1), b, 4).parity != huegrid_color(Vec3(0.26, 0.1, 0.1), b, 4).parity);
    c = huegrid_color(Vec3(0.3, 0.1, 0.1), b, 4);
    CHECK(c.rgb == Vec3(0.3, 0.1, 0.1) * 0.6);
    const Bounds3D flat{Vec3::Zero(), Vec3(1, 0, 1)};
    CHECK(huegrid_color(Vec3(0.1, 0, 0.1), flat, 1).rgb[1] == 0.5);
    CHECK_THROWS_AS(huegrid_color(Vec3::Zero(), b, 0), Error);

    const Mesh cube = unit_cube_mesh();
    const std::string obj = huegrid_obj(cube, 1);
    CHECK(obj == huegrid_obj(cube, 1));
    CHECK(obj.rfind("v 0 0 0 0 0 0\n", 0) == 0);
}
