#include "catcorr/bench.hpp"

#include "catcorr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace catcorr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSegments = 32;

double deg(double d) { return d * kPi / 180.0; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct MeshBuilder {
    std::vector<Vec3> v;
    std::vector<Face> f;

    int add(const Vec3& p)
    {
        v.push_back(p);
        return static_cast<int>(v.size()) - 1;
    }
    // Corners counter-clockwise as seen from outside.
    void quad(int a, int b, int c, int d)
    {
        f.push_back({a, b, c});
        f.push_back({a, c, d});
    }
    void tri(int a, int b, int c) { f.push_back({a, b, c}); }
};

double ring_angle(int i) { return 2.0 * kPi * i / kSegments; }

Vec3 ring_point(double radius, double y, int i)
{
    // Exact values at the quarter turns keep keypoints and bounds symmetric.
    const int q = i % kSegments;
    double c = std::cos(ring_angle(q));
    double s = std::sin(ring_angle(q));
    if (q % (kSegments / 4) == 0) {
        const int k = q / (kSegments / 4);
        c = k == 0 ? 1.0 : (k == 2 ? -1.0 : 0.0);
        s = k == 1 ? 1.0 : (k == 3 ? -1.0 : 0.0);
    }
    return {radius * c, y, radius * s};
}

/// Surface of revolution about +y through the given (y, radius) profile,
/// closed by caps with a center vertex and an inner ring at half radius.
/// Returns the first vertex index of every profile ring, then the bottom and
/// top center indices.
struct Revolved {
    std::vector<int> ring_start;
    int bottom_center = 0;
    int top_center = 0;
};

Revolved add_revolved(MeshBuilder& mb, const std::vector<std::pair<double, double>>& profile)
{
    Revolved out;
    for (const auto& [y, r] : profile) {
        out.ring_start.push_back(static_cast<int>(mb.v.size()));
        for (int i = 0; i < kSegments; ++i) {
            mb.add(ring_point(r, y, i));
        }
    }
    auto idx = [](int start, int i) { return start + (i % kSegments); };
    for (std::size_t k = 0; k + 1 < profile.size(); ++k) {
        const int lo = out.ring_start[k];
        const int hi = out.ring_start[k + 1];
        for (int i = 0; i < kSegments; ++i) {
            mb.quad(idx(lo, i), idx(hi, i), idx(hi, i + 1), idx(lo, i + 1));
        }
    }
    const auto& [y0, r0] = profile.front();
    const auto& [y1, r1] = profile.back();
    out.bottom_center = mb.add({0.0, y0, 0.0});
    const int bottom_inner = static_cast<int>(mb.v.size());
    for (int i = 0; i < kSegments; ++i) {
        mb.add(ring_point(0.5 * r0, y0, i));
    }
    out.top_center = mb.add({0.0, y1, 0.0});
    const int top_inner = static_cast<int>(mb.v.size());
    for (int i = 0; i < kSegments; ++i) {
        mb.add(ring_point(0.5 * r1, y1, i));
    }
    const int bottom_outer = out.ring_start.front();
    const int top_outer = out.ring_start.back();
    for (int i = 0; i < kSegments; ++i) {
        mb.tri(out.bottom_center, idx(bottom_inner, i), idx(bottom_inner, i + 1));
        mb.quad(idx(bottom_inner, i), idx(bottom_outer, i), idx(bottom_outer, i + 1), idx(bottom_inner, i + 1));
        mb.tri(out.top_center, idx(top_inner, i + 1), idx(top_inner, i));
        mb.quad(idx(top_inner, i), idx(top_inner, i + 1), idx(top_outer, i + 1), idx(top_outer, i));
    }
    return out;
}

double param(const std::map<std::string, double>& p, const char* name)
{
    const auto it = p.find(name);
    if (it == p.end()) {
        throw Error(std::string("missing shape parameter '") + name + "'");
    }
    return it->second;
}

void normalize(MeshBuilder& mb, std::vector<Vec3>& keypoints, Vec3& axis_point)
{
    const Bounds3D b = bounds3d(mb.v);
    const Vec3 center = 0.5 * (b.min + b.max);
    const double s = 1.0 / b.max_extent();
    for (Vec3& p : mb.v) {
        p = (p - center) * s;
    }
    for (Vec3& p : keypoints) {
        p = (p - center) * s;
    }
    axis_point = (axis_point - center) * s;
}

GeneratedInstance build_mug(const std::map<std::string, double>& p)
{
    const double r = param(p, "body_radius");
    const double h = param(p, "height");
    const double R = param(p, "handle_span") * h;
    const double rt = param(p, "handle_thickness");
    const double yc = 0.5 * h;

    MeshBuilder mb;
    std::vector<std::pair<double, double>> profile;
    for (int k = 0; k <= 6; ++k) {
        profile.emplace_back(h * k / 6.0, r);
    }
    const Revolved body = add_revolved(mb, profile);

    // Torus segment in the x-y plane, attached on the +x side.
    constexpr int kRings = 13;  // -120..120 degrees in 20 degree steps
    constexpr int kMinor = 8;
    std::vector<int> ring_start;
    std::vector<int> centers;
    for (int i = 0; i < kRings; ++i) {
        const double th = deg(-120.0 + 20.0 * i);
        const Vec3 c(r + R * std::cos(th), yc + R * std::sin(th), 0.0);
        const Vec3 er(std::cos(th), std::sin(th), 0.0);
        ring_start.push_back(static_cast<int>(mb.v.size()));
        for (int j = 0; j < kMinor; ++j) {
            const double ph = 2.0 * kPi * j / kMinor;
            const double cp = j == 0 ? 1.0 : std::cos(ph);
            const double sp = j == 0 ? 0.0 : std::sin(ph);
            mb.add(c + rt * (cp * er + sp * Vec3::UnitZ()));
        }
        if (i == 0 || i == kRings - 1) {
            centers.push_back(mb.add(c));
        }
    }
    auto hidx = [&](int i, int j) { return ring_start[i] + (j % kMinor); };
    for (int i = 0; i + 1 < kRings; ++i) {
        for (int j = 0; j < kMinor; ++j) {
            mb.quad(hidx(i, j), hidx(i + 1, j), hidx(i + 1, j + 1), hidx(i, j + 1));
        }
    }
    for (int j = 0; j < kMinor; ++j) {
        mb.tri(centers[0], hidx(0, j), hidx(0, j + 1));
        mb.tri(centers[1], hidx(kRings - 1, j + 1), hidx(kRings - 1, j));
    }

    GeneratedInstance out;
    auto rim = [&](int i) { return mb.v[body.ring_start.back() + i]; };
    out.keypoint_names = {"handle_tip", "handle_upper", "handle_lower", "rim_front",
                          "rim_left",   "rim_right",    "base_front",   "rim_back"};
    out.keypoints = {mb.v[hidx(6, 0)], mb.v[hidx(9, 0)], mb.v[hidx(3, 0)], rim(16),
                     rim(8),           rim(24),          mb.v[body.ring_start.front() + 16], rim(0)};
    Vec3 axis_point = Vec3::Zero();
    normalize(mb, out.keypoints, axis_point);
    out.symmetry = SymmetrySpec{};
    out.mesh = Mesh(std::move(mb.v), std::move(mb.f));
    return out;
}

GeneratedInstance build_bottle(const std::map<std::string, double>& p)
{
    const double r = param(p, "body_radius");
    const double h = param(p, "height");
    const double sh = param(p, "shoulder");
    const double nr = param(p, "neck_radius") * r;
    const double ns = param(p, "neck_start");

    MeshBuilder mb;
    const std::vector<std::pair<double, double>> profile{
        {0.0, r},
        {0.5 * sh * h, r},
        {sh * h, r},
        {0.5 * (sh + ns) * h, 0.5 * (r + nr) + 0.15 * (r - nr)},
        {ns * h, nr},
        {h, nr},
    };
    const Revolved body = add_revolved(mb, profile);

    GeneratedInstance out;
    out.keypoint_names = {"base_center", "cap_center", "base_edge", "shoulder", "neck", "lip"};
    out.keypoints = {mb.v[body.bottom_center], mb.v[body.top_center], mb.v[body.ring_start[0]],
                     mb.v[body.ring_start[2]], mb.v[body.ring_start[4]], mb.v[body.ring_start[5]]};
    Vec3 axis_point = Vec3::Zero();
    normalize(mb, out.keypoints, axis_point);
    axis_point[1] = 0.0;
    out.symmetry = SymmetrySpec{SymmetryKind::Continuous, 0, axis_point, Vec3::UnitY()};
    out.mesh = Mesh(std::move(mb.v), std::move(mb.f));
    return out;
}

} // namespace

CategorySpec CategorySpec::mug()
{
    return CategorySpec{"mug",
                        {{"body_radius", {0.30, 0.45}},
                         {"height", {0.6, 1.1}},
                         {"handle_span", {0.3, 0.4}},
                         {"handle_thickness", {0.035, 0.06}}}};
}

CategorySpec CategorySpec::bottle()
{
    return CategorySpec{"bottle",
                        {{"body_radius", {0.25, 0.40}},
                         {"height", {0.8, 1.2}},
                         {"shoulder", {0.55, 0.7}},
                         {"neck_radius", {0.3, 0.45}},
                         {"neck_start", {0.8, 0.88}}}};
}

CategorySpec CategorySpec::by_name(const std::string& family)
{
    if (family == "mug") {
        return mug();
    }
    if (family == "bottle") {
        return bottle();
    }
    throw InputError("unknown shape family '" + family + "'");
}

void CategorySpec::validate() const
{
    const CategorySpec base = by_name(family);
    for (const auto& [name, range] : base.ranges) {
        const auto it = ranges.find(name);
        if (it == ranges.end()) {
            throw InputError("missing range for '" + name + "'");
        }
        if (!(it->second.min <= it->second.max) || !std::isfinite(it->second.min) || !std::isfinite(it->second.max)) {
            throw InputError("empty range for '" + name + "'");
        }
    }
    for (const auto& [name, range] : ranges) {
        if (!base.ranges.contains(name)) {
            throw InputError("unknown parameter '" + name + "' for family " + family);
        }
    }
    // Geometric sanity: the shape must stay well formed over the whole range.
    if (family == "mug") {
        if (ranges.at("body_radius").min <= 0.0 || ranges.at("height").min <= 0.0 ||
            ranges.at("handle_thickness").min <= 0.0 || ranges.at("handle_span").min <= 0.0 ||
            ranges.at("handle_span").max > 0.5) {
            throw InputError("mug parameters out of the valid domain");
        }
    } else {
        if (ranges.at("body_radius").min <= 0.0 || ranges.at("height").min <= 0.0 ||
            ranges.at("neck_radius").min <= 0.0 || ranges.at("neck_radius").max >= 1.0 ||
            ranges.at("shoulder").min <= 0.0 || ranges.at("shoulder").max >= ranges.at("neck_start").min ||
            ranges.at("neck_start").max >= 1.0) {
            throw InputError("bottle parameters out of the valid domain");
        }
    }
}

json to_json(const CategorySpec& spec)
{
    json ranges = json::object();
    for (const auto& [name, r] : spec.ranges) {
        ranges[name] = {r.min, r.max};
    }
    return json{{"version", kSchemaVersion}, {"family", spec.family}, {"ranges", ranges}};
}

CategorySpec category_spec_from_json(const json& j)
{
    try {
        if (!j.is_object()) {
            throw InputError("category spec must be an object");
        }
        if (j.contains("version")) {
            require_schema_version(j, "category spec");
        }
        CategorySpec spec = CategorySpec::by_name(j.at("family").get<std::string>());
        if (j.contains("ranges")) {
            for (const auto& [name, value] : j.at("ranges").items()) {
                const auto mm = value.get<std::array<double, 2>>();
                spec.ranges[name] = {mm[0], mm[1]};
            }
        }
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad category spec: ") + e.what());
    }
}

GeneratedInstance build_instance(const CategorySpec& spec, const std::map<std::string, double>& params,
                                 const std::string& id)
{
    spec.validate();
    for (const auto& [name, range] : spec.ranges) {
        const double v = param(params, name.c_str());
        if (!(v >= range.min && v <= range.max)) {
            throw Error("parameter '" + name + "' outside its range");
        }
    }
    GeneratedInstance out = spec.family == "mug" ? build_mug(params) : build_bottle(params);
    out.id = id;
    out.params = params;
    return out;
}

GeneratedInstance generate_instance(const CategorySpec& spec, std::uint64_t seed, const std::string& id)
{
    spec.validate();
    std::mt19937_64 rng(seed);
    std::map<std::string, double> params;
    for (const auto& [name, range] : spec.ranges) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        params[name] = range.min + u(rng) * (range.max - range.min);
    }
    return build_instance(spec, params, id);
}

OccluderPolicy occluder_policy_from_string(const std::string& s)
{
    if (s == "none") {
        return OccluderPolicy::None;
    }
    if (s == "random") {
        return OccluderPolicy::Random;
    }
    if (s == "full") {
        return OccluderPolicy::Full;
    }
    throw InputError("unknown occluder policy '" + s + "'");
}

const char* to_string(OccluderPolicy p)
{
    switch (p) {
    case OccluderPolicy::None: return "none";
    case OccluderPolicy::Random: return "random";
    case OccluderPolicy::Full: return "full";
    }
    return "?";
}

Camera default_camera() { return Camera{80.0, 80.0, 32.0, 32.0, 64, 64}; }

namespace {

/// Rotation taking object coordinates to a camera that looks at the origin
/// from direction (azimuth, elevation), rolled about its optical axis.
Mat3 look_rotation(double azimuth, double elevation, double roll)
{
    const Vec3 eye(std::cos(elevation) * std::sin(azimuth), std::sin(elevation), std::cos(elevation) * std::cos(azimuth));
    const Vec3 z = -eye.normalized();
    const Vec3 up = Vec3::UnitY();
    const Vec3 y = (-(up - up.dot(z) * z)).normalized();
    const Vec3 x = y.cross(z);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    return Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix() * r;
}

Mesh camera_quad(double x0, double x1, double y0, double y1, double z)
{
    return Mesh({{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}}, {{0, 2, 1}, {0, 3, 2}});
}

} // namespace

std::vector<GeneratedView> generate_views(const Mesh& mesh, int n_views, const Camera& camera, OccluderPolicy policy,
                                          std::uint64_t seed)
{
    if (n_views < 1) {
        throw Error("need at least one view");
    }
    camera.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
    const double half = 0.5 * bounds3d(mesh.vertices()).diagonal();

    std::vector<GeneratedView> views;
    for (int k = 0; k < n_views; ++k) {
        GeneratedView view;
        view.camera = camera;
        const double az = uni(0.0, 2.0 * kPi);
        const double el = deg(uni(-20.0, 70.0));
        const double roll = deg(uni(-30.0, 30.0));
        view.pose.rotation = look_rotation(az, el, roll);
        view.pose.scale = uni(0.8, 1.2);
        view.pose.translation = Vec3(uni(-0.15, 0.15), uni(-0.15, 0.15), uni(2.7, 3.3));

        if (policy == OccluderPolicy::Random) {
            const double depth = view.pose.translation[2] - 0.9;
            const Vec3 c = view.pose.translation * (depth / view.pose.translation[2]);
            const double ext = 1.1 * half * view.pose.scale * depth / view.pose.translation[2];
            const double cover = uni(0.3, 0.6) * 2.0 * ext;
            const int side = static_cast<int>(uni(0.0, 4.0)) % 4;
            double x0 = c[0] - ext, x1 = c[0] + ext, y0 = c[1] - ext, y1 = c[1] + ext;
            switch (side) {
            case 0: x1 = x0 + cover; break;
            case 1: x0 = x1 - cover; break;
            case 2: y1 = y0 + cover; break;
            default: y0 = y1 - cover; break;
            }
            view.occluders.push_back(camera_quad(x0, x1, y0, y1, depth));
        } else if (policy == OccluderPolicy::Full) {
            const double z = 1.0;
            const double wx = 2.0 * std::max(camera.cx, camera.width - camera.cx) / camera.fx * z;
            const double wy = 2.0 * std::max(camera.cy, camera.height - camera.cy) / camera.fy * z;
            view.occluders.push_back(camera_quad(-wx, wx, -wy, wy, z));
        }

        const Mesh posed = apply_pose(mesh, view.pose);
        view.amodal_mask = rasterize_hard(posed, camera).mask;
        std::vector<const Mesh*> scene{&posed};
        for (const Mesh& o : view.occluders) {
            scene.push_back(&o);
        }
        HardRender hr = rasterize_hard(scene, camera);
        view.depth = std::move(hr.depth);
        view.modal_mask = MaskImage(camera.width, camera.height);
        for (std::size_t i = 0; i < hr.object.size(); ++i) {
            view.modal_mask.values[i] = hr.object[i] == 0 ? 1.0 : 0.0;
        }
        views.push_back(std::move(view));
    }
    return views;
}

// ---- manifest ----

const InstanceRecord* Dataset::find(const std::string& id) const
{
    for (const InstanceRecord& r : instances) {
        if (r.id == id) {
            return &r;
        }
    }
    return nullptr;
}

std::string view_id(const std::string& instance_id, std::size_t index)
{
    return instance_id + "/" + std::to_string(index);
}

std::pair<std::string, std::size_t> parse_view_id(const std::string& id)
{
    const auto slash = id.rfind('/');
    if (slash == std::string::npos || slash + 1 >= id.size()) {
        throw InputError("malformed view id '" + id + "'");
    }
    const std::string idx = id.substr(slash + 1);
    if (!std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; }) || idx.size() > 9) {
        throw InputError("malformed view id '" + id + "'");
    }
    return {id.substr(0, slash), static_cast<std::size_t>(std::stoul(idx))};
}

json pose_to_json(const Pose& p)
{
    json r = json::array();
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            r.push_back(p.rotation(i, k));
        }
    }
    return json{{"R", r}, {"t", {p.translation[0], p.translation[1], p.translation[2]}}, {"s", p.scale}};
}

Pose pose_from_json(const json& j)
{
    const auto r = j.at("R").get<std::array<double, 9>>();
    const auto t = j.at("t").get<std::array<double, 3>>();
    Pose p;
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            p.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)];
        }
    }
    p.translation = Vec3(t[0], t[1], t[2]);
    p.scale = j.at("s").get<double>();
    try {
        p.validate();
    } catch (const Error& e) {
        throw InputError(std::string("bad pose: ") + e.what());
    }
    return p;
}

json camera_to_json(const Camera& c)
{
    return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"w", c.width}, {"h", c.height}};
}

Camera camera_from_json(const json& j)
{
    Camera c{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
             j.at("cy").get<double>(), j.at("w").get<int>(),      j.at("h").get<int>()};
    try {
        c.validate();
    } catch (const Error& e) {
        throw InputError(std::string("bad camera: ") + e.what());
    }
    return c;
}

json to_json(const Dataset& ds)
{
    json insts = json::array();
    for (const InstanceRecord& r : ds.instances) {
        json kps = json::array();
        for (const Vec3& k : r.keypoints) {
            kps.push_back({k[0], k[1], k[2]});
        }
        json views = json::array();
        for (const ViewRecord& v : r.views) {
            json vj{{"pose", pose_to_json(v.pose)},
                    {"camera", camera_to_json(v.camera)},
                    {"depth_path", v.depth_path},
                    {"modal_mask_path", v.modal_mask_path},
                    {"amodal_mask_path", v.amodal_mask_path}};
            if (!v.occluder_paths.empty()) {
                vj["occluders"] = v.occluder_paths;
            }
            views.push_back(vj);
        }
        insts.push_back({{"id", r.id},
                         {"mesh_path", r.mesh_path},
                         {"keypoint_names", r.keypoint_names},
                         {"keypoints", kps},
                         {"symmetry", to_json(r.symmetry)},
                         {"views", views}});
    }
    return json{{"version", kSchemaVersion}, {"category", ds.category}, {"instances", insts}};
}

Dataset dataset_from_json(const json& j, const std::filesystem::path& root)
{
    try {
        if (j.contains("version")) {
            require_schema_version(j, "dataset manifest");
        }
        Dataset ds;
        ds.root = root;
        ds.category = j.at("category").get<std::string>();
        std::set<std::string> seen;
        for (const json& ij : j.at("instances")) {
            InstanceRecord r;
            r.id = ij.at("id").get<std::string>();
            if (r.id.empty() || r.id.find('/') != std::string::npos || !seen.insert(r.id).second) {
                throw InputError("bad or duplicate instance id '" + r.id + "'");
            }
            r.mesh_path = ij.at("mesh_path").get<std::string>();
            for (const json& k : ij.at("keypoints")) {
                const auto a = k.get<std::array<double, 3>>();
                r.keypoints.emplace_back(a[0], a[1], a[2]);
            }
            if (ij.contains("keypoint_names")) {
                r.keypoint_names = ij["keypoint_names"].get<std::vector<std::string>>();
                if (r.keypoint_names.size() != r.keypoints.size()) {
                    throw InputError("keypoint_names and keypoints differ in length for '" + r.id + "'");
                }
            }
            r.symmetry = ij.contains("symmetry") ? symmetry_from_json(ij["symmetry"]) : SymmetrySpec{};
            for (const json& vj : ij.at("views")) {
                ViewRecord v;
                v.pose = pose_from_json(vj.at("pose"));
                v.camera = camera_from_json(vj.at("camera"));
                v.depth_path = vj.at("depth_path").get<std::string>();
                v.modal_mask_path = vj.at("modal_mask_path").get<std::string>();
                v.amodal_mask_path = vj.at("amodal_mask_path").get<std::string>();
                if (vj.contains("occluders")) {
                    v.occluder_paths = vj["occluders"].get<std::vector<std::string>>();
                }
                r.views.push_back(std::move(v));
            }
            ds.instances.push_back(std::move(r));
        }
        return ds;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad dataset manifest: ") + e.what());
    }
}

Dataset load_dataset(const std::filesystem::path& manifest)
{
    return dataset_from_json(read_json(manifest), manifest.parent_path());
}

void save_dataset_manifest(const std::filesystem::path& manifest, const Dataset& ds)
{
    write_json(manifest, to_json(ds));
}

json to_json(const PairRecord& p)
{
    return json{{"pair_id", p.pair_id},
                {"query_view", p.query_view},
                {"target_view", p.target_view},
                {"keypoint", p.keypoint},
                {"xq", {p.xq[0], p.xq[1], p.xq[2]}}};
}

PairRecord pair_from_json(const json& j)
{
    try {
        PairRecord p;
        p.pair_id = j.at("pair_id").get<std::string>();
        p.query_view = j.at("query_view").get<std::string>();
        p.target_view = j.at("target_view").get<std::string>();
        p.keypoint = j.at("keypoint").get<int>();
        const auto x = j.at("xq").get<std::array<double, 3>>();
        p.xq = Vec3(x[0], x[1], x[2]);
        return p;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad pair record: ") + e.what());
    }
}

std::vector<PairRecord> read_pairs(const std::filesystem::path& path)
{
    std::istringstream in(read_file(path));
    std::vector<PairRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(pair_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::string pairs_to_jsonl(const std::vector<PairRecord>& pairs)
{
    std::string out;
    for (const PairRecord& p : pairs) {
        out += to_json(p).dump() + "\n";
    }
    return out;
}

std::vector<PairRecord> generate_pairs(const Dataset& ds, std::uint64_t seed)
{
    std::mt19937_64 rng(mix_seed(seed, 0x9a1f));
    std::vector<PairRecord> out;
    const std::size_t n = ds.instances.size();
    int counter = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const InstanceRecord& q = ds.instances[i];
        for (std::size_t vq = 0; vq < q.views.size(); ++vq) {
            std::vector<std::pair<std::size_t, std::size_t>> candidates;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i && n > 1) {
                    continue;
                }
                for (std::size_t vt = 0; vt < ds.instances[j].views.size(); ++vt) {
                    if (j != i || vt != vq) {
                        candidates.emplace_back(j, vt);
                    }
                }
            }
            if (candidates.empty()) {
                continue;
            }
            std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
            const auto [j, vt] = candidates[pick(rng)];
            const InstanceRecord& t = ds.instances[j];
            const std::size_t n_kp = std::min(q.keypoints.size(), t.keypoints.size());
            for (std::size_t k = 0; k < n_kp; ++k) {
                char id[32];
                std::snprintf(id, sizeof(id), "p%06d", counter++);
                out.push_back(
                    {id, view_id(q.id, vq), view_id(t.id, vt), static_cast<int>(k), q.views[vq].pose.apply(q.keypoints[k])});
            }
        }
    }
    return out;
}

Dataset generate_dataset(const CategorySpec& spec, const std::filesystem::path& out_dir, int n_instances,
                         int n_views, OccluderPolicy policy, std::uint64_t seed)
{
    spec.validate();
    if (n_instances < 0 || n_views < 1) {
        throw InputError("instance count must be >= 0 and view count >= 1");
    }
    std::filesystem::create_directories(out_dir);
    Dataset ds;
    ds.category = spec.family;
    ds.root = out_dir;
    const Camera camera = default_camera();
    std::vector<InstanceRecord> records(static_cast<std::size_t>(n_instances));
    std::vector<GeneratedInstance> instances(static_cast<std::size_t>(n_instances));
    std::vector<std::vector<GeneratedView>> views(static_cast<std::size_t>(n_instances));
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n_instances; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "inst%03d", i);
        instances[i] = generate_instance(spec, mix_seed(seed, static_cast<std::uint64_t>(i), 1), id);
        views[i] = generate_views(instances[i].mesh, n_views, camera, policy,
                                  mix_seed(seed, static_cast<std::uint64_t>(i), 2));
    }
    for (int i = 0; i < n_instances; ++i) {
        const GeneratedInstance& inst = instances[i];
        InstanceRecord& r = records[i];
        r.id = inst.id;
        r.mesh_path = "meshes/" + inst.id + ".obj";
        write_obj(out_dir / r.mesh_path, inst.mesh);
        r.keypoint_names = inst.keypoint_names;
        r.keypoints = inst.keypoints;
        r.symmetry = inst.symmetry;
        for (std::size_t k = 0; k < views[i].size(); ++k) {
            const GeneratedView& v = views[i][k];
            ViewRecord vr;
            vr.pose = v.pose;
            vr.camera = v.camera;
            const std::string stem = "views/" + inst.id + "_" + std::to_string(k);
            vr.depth_path = stem + "_depth.f32";
            vr.modal_mask_path = stem + "_modal.pgm";
            vr.amodal_mask_path = stem + "_amodal.pgm";
            write_depth(out_dir / vr.depth_path, v.depth);
            write_pgm(out_dir / vr.modal_mask_path, v.modal_mask);
            write_pgm(out_dir / vr.amodal_mask_path, v.amodal_mask);
            for (std::size_t o = 0; o < v.occluders.size(); ++o) {
                const std::string path = "occluders/" + inst.id + "_" + std::to_string(k) + "_" + std::to_string(o) + ".obj";
                write_obj(out_dir / path, v.occluders[o]);
                vr.occluder_paths.push_back(path);
            }
            r.views.push_back(std::move(vr));
        }
    }
    ds.instances = std::move(records);
    save_dataset_manifest(out_dir / "manifest.json", ds);
    write_file_atomic(out_dir / "pairs.jsonl", pairs_to_jsonl(generate_pairs(ds, seed)));
    return ds;
}

// ---- annotation merging ----

std::size_t AnnotationSet::num_keypoints() const
{
    std::size_t n = 0;
    for (const auto& [id, kps] : instances) {
        n = std::max(n, kps.size());
    }
    return n;
}

json to_json(const AnnotationSet& s)
{
    json insts = json::object();
    for (const auto& [id, kps] : s.instances) {
        json arr = json::array();
        for (const auto& k : kps) {
            arr.push_back(k ? json{(*k)[0], (*k)[1], (*k)[2]} : json(nullptr));
        }
        insts[id] = arr;
    }
    return json{{"version", kSchemaVersion}, {"annotator", s.annotator}, {"instances", insts}};
}

AnnotationSet annotation_set_from_json(const json& j)
{
    try {
        if (j.contains("version")) {
            require_schema_version(j, "annotation set");
        }
        AnnotationSet s;
        s.annotator = j.value("annotator", "");
        for (const auto& [id, arr] : j.at("instances").items()) {
            auto& kps = s.instances[id];
            for (const json& k : arr) {
                if (k.is_null()) {
                    kps.emplace_back(std::nullopt);
                } else {
                    const auto a = k.get<std::array<double, 3>>();
                    const Vec3 p(a[0], a[1], a[2]);
                    if (!p.allFinite()) {
                        throw InputError("non-finite keypoint in instance '" + id + "'");
                    }
                    kps.emplace_back(p);
                }
            }
        }
        return s;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad annotation set: ") + e.what());
    }
}

const char* to_string(MergeStatus s)
{
    switch (s) {
    case MergeStatus::AutoAccept: return "AUTO_ACCEPT";
    case MergeStatus::AutoSplit: return "AUTO_SPLIT";
    case MergeStatus::AutoUnmatched: return "AUTO_UNMATCHED";
    case MergeStatus::Ambiguous: return "AMBIGUOUS";
    }
    return "?";
}

MergeAction merge_action_from_string(const std::string& s)
{
    if (s == "ACCEPT_MEAN") {
        return MergeAction::AcceptMean;
    }
    if (s == "ACCEPT_SET1") {
        return MergeAction::AcceptSet1;
    }
    if (s == "ACCEPT_SET2") {
        return MergeAction::AcceptSet2;
    }
    if (s == "ACCEPT_BOTH") {
        return MergeAction::AcceptBoth;
    }
    if (s == "REJECT") {
        return MergeAction::Reject;
    }
    throw InputError("unknown merge action '" + s + "'");
}

namespace {

std::optional<Vec3> slot(const AnnotationSet& s, const std::string& id, int k)
{
    const auto& kps = s.instances.at(id);
    return static_cast<std::size_t>(k) < kps.size() ? kps[static_cast<std::size_t>(k)] : std::nullopt;
}

/// Index of the nearest present slot in `to` for slot `k` of `from`, or -1.
int nearest_slot(const AnnotationSet& from, int k, const AnnotationSet& to, int n_to, const std::string& id)
{
    const auto p = slot(from, id, k);
    if (!p) {
        return -1;
    }
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_to; ++j) {
        if (const auto q = slot(to, id, j)) {
            const double d = (*p - *q).norm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
    }
    return best;
}

int find_root(std::vector<int>& parent, int x)
{
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

std::vector<MergedKeypoint> entry_keypoints(const MergeEntry& e, MergeAction action, const AnnotationSet& a,
                                            const AnnotationSet& b)
{
    std::vector<MergedKeypoint> out;
    auto single = [&](const AnnotationSet& s, const char* prefix, int k) {
        MergedKeypoint kp;
        kp.name = prefix + std::to_string(k);
        for (const auto& [id, kps] : s.instances) {
            kp.positions[id] = slot(s, id, k);
        }
        return kp;
    };
    switch (action) {
    case MergeAction::AcceptMean: {
        MergedKeypoint kp;
        kp.name = e.key;
        for (const auto& [id, kps] : a.instances) {
            Vec3 sum = Vec3::Zero();
            int n = 0;
            for (int k : e.a) {
                if (const auto p = slot(a, id, k)) {
                    sum += *p;
                    ++n;
                }
            }
            for (int k : e.b) {
                if (const auto p = slot(b, id, k)) {
                    sum += *p;
                    ++n;
                }
            }
            kp.positions[id] = n > 0 ? std::optional<Vec3>(sum / n) : std::nullopt;
        }
        out.push_back(std::move(kp));
        break;
    }
    case MergeAction::AcceptSet1:
        for (int k : e.a) {
            out.push_back(single(a, "A", k));
        }
        break;
    case MergeAction::AcceptSet2:
        for (int k : e.b) {
            out.push_back(single(b, "B", k));
        }
        break;
    case MergeAction::AcceptBoth:
        for (int k : e.a) {
            out.push_back(single(a, "A", k));
        }
        for (int k : e.b) {
            out.push_back(single(b, "B", k));
        }
        break;
    case MergeAction::Reject: break;
    }
    return out;
}

MergeAction automatic_action(MergeStatus s)
{
    return s == MergeStatus::AutoAccept ? MergeAction::AcceptMean : MergeAction::AcceptBoth;
}

} // namespace

MergeOutcome merge_annotations(const AnnotationSet& a, const AnnotationSet& b,
                               const std::map<std::string, Bounds3D>& bounds, double threshold_ratio)
{
    if (!(threshold_ratio >= 0.0)) {
        throw Error("threshold ratio must be non-negative");
    }
    std::set<std::string> ids_a, ids_b;
    for (const auto& [id, k] : a.instances) {
        ids_a.insert(id);
    }
    for (const auto& [id, k] : b.instances) {
        ids_b.insert(id);
    }
    if (ids_a != ids_b) {
        throw Error("instance id mismatch between annotation sets");
    }
    for (const std::string& id : ids_a) {
        if (!bounds.contains(id)) {
            throw Error("no mesh for instance '" + id + "'");
        }
    }
    const int na = static_cast<int>(a.num_keypoints());
    const int nb = static_cast<int>(b.num_keypoints());
    const int n_inst = static_cast<int>(ids_a.size());

    // matched[i][j]: instances where A_i and B_j are mutual nearest neighbours.
    std::vector<std::vector<int>> matched(na, std::vector<int>(nb, 0));
    std::vector<std::vector<int>> close(na, std::vector<int>(nb, 0));
    std::vector<int> parent(static_cast<std::size_t>(na + nb));
    std::iota(parent.begin(), parent.end(), 0);
    for (const std::string& id : ids_a) {
        const double limit = threshold_ratio * bounds.at(id).diagonal();
        for (int i = 0; i < na; ++i) {
            const int j = nearest_slot(a, i, b, nb, id);
            if (j < 0 || nearest_slot(b, j, a, na, id) != i) {
                continue;
            }
            ++matched[i][j];
            if ((*slot(a, id, i) - *slot(b, id, j)).norm() < limit) {
                ++close[i][j];
            }
            parent[find_root(parent, i)] = find_root(parent, na + j);
        }
    }

    std::map<int, MergeEntry> groups;  // keyed by smallest node index
    std::map<int, int> root_to_first;
    for (int node = 0; node < na + nb; ++node) {
        const int root = find_root(parent, node);
        const int first = root_to_first.emplace(root, node).first->second;
        MergeEntry& e = groups[first];
        (node < na ? e.a : e.b).push_back(node < na ? node : node - na);
    }

    MergeOutcome out;
    for (auto& [first, e] : groups) {
        std::vector<std::string> parts;
        for (int i : e.a) {
            parts.push_back("A" + std::to_string(i));
        }
        for (int j : e.b) {
            parts.push_back("B" + std::to_string(j));
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
            e.key += (k ? "+" : "") + parts[k];
        }
        if (e.a.size() + e.b.size() == 1) {
            e.status = MergeStatus::AutoUnmatched;
        } else if (e.a.size() == 1 && e.b.size() == 1 && matched[e.a[0]][e.b[0]] == n_inst) {
            e.status = close[e.a[0]][e.b[0]] == n_inst ? MergeStatus::AutoAccept : MergeStatus::AutoSplit;
        } else {
            e.status = MergeStatus::Ambiguous;
        }
        if (e.status != MergeStatus::Ambiguous) {
            for (MergedKeypoint& kp : entry_keypoints(e, automatic_action(e.status), a, b)) {
                out.keypoints.push_back(std::move(kp));
            }
        }
        out.entries.push_back(std::move(e));
    }
    return out;
}

std::vector<MergeDecision> decisions_from_json(const json& j)
{
    try {
        if (j.contains("version")) {
            require_schema_version(j, "merge decisions");
        }
        std::vector<MergeDecision> out;
        for (const json& d : j.at("decisions")) {
            out.push_back({d.at("keypoint").get<std::string>(), merge_action_from_string(d.at("action").get<std::string>())});
        }
        return out;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad decisions file: ") + e.what());
    }
}

std::vector<MergedKeypoint> apply_manual_decisions(const MergeOutcome& outcome, const AnnotationSet& a,
                                                   const AnnotationSet& b,
                                                   const std::vector<MergeDecision>& decisions)
{
    std::map<std::string, MergeAction> by_key;
    for (const MergeDecision& d : decisions) {
        if (!by_key.emplace(d.keypoint, d.action).second) {
            throw Error("duplicate decision for '" + d.keypoint + "'");
        }
    }
    std::set<std::string> ambiguous;
    for (const MergeEntry& e : outcome.entries) {
        if (e.status == MergeStatus::Ambiguous) {
            ambiguous.insert(e.key);
        }
    }
    for (const auto& [key, action] : by_key) {
        if (!ambiguous.contains(key)) {
            throw Error("decision for '" + key + "', which is not an AMBIGUOUS keypoint");
        }
    }
    std::vector<MergedKeypoint> out;
    for (const MergeEntry& e : outcome.entries) {
        MergeAction action = automatic_action(e.status);
        if (e.status == MergeStatus::Ambiguous) {
            const auto it = by_key.find(e.key);
            if (it == by_key.end()) {
                throw Error("missing decision for '" + e.key + "'");
            }
            action = it->second;
        }
        for (MergedKeypoint& kp : entry_keypoints(e, action, a, b)) {
            out.push_back(std::move(kp));
        }
    }
    return out;
}

json to_json(const std::vector<MergedKeypoint>& keypoints)
{
    json arr = json::array();
    for (const MergedKeypoint& kp : keypoints) {
        json pos = json::object();
        for (const auto& [id, p] : kp.positions) {
            pos[id] = p ? json{(*p)[0], (*p)[1], (*p)[2]} : json(nullptr);
        }
        arr.push_back({{"name", kp.name}, {"positions", pos}});
    }
    return json{{"version", kSchemaVersion}, {"keypoints", arr}};
}

json to_json(const MergeOutcome& outcome)
{
    json entries = json::array();
    std::map<std::string, int> counts{
        {"AUTO_ACCEPT", 0}, {"AUTO_SPLIT", 0}, {"AUTO_UNMATCHED", 0}, {"AMBIGUOUS", 0}};
    for (const MergeEntry& e : outcome.entries) {
        entries.push_back({{"key", e.key}, {"status", to_string(e.status)}, {"a", e.a}, {"b", e.b}});
        ++counts[to_string(e.status)];
    }
    return json{{"version", kSchemaVersion}, {"entries", entries}, {"counts", counts}};
}

// ---- HueGrid ----

HueGridColor huegrid_color(const Vec3& x, const Bounds3D& bounds, int cells)
{
    if (cells < 1) {
        throw Error("cells must be at least 1");
    }
    HueGridColor out;
    long sum = 0;
    for (int k = 0; k < 3; ++k) {
        const double ext = bounds.max[k] - bounds.min[k];
        const double u = ext > 0.0 ? (x[k] - bounds.min[k]) / ext : 0.5;
        out.rgb[k] = u;
        sum += static_cast<long>(std::floor(u * cells));
    }
    out.parity = static_cast<int>(((sum % 2) + 2) % 2);
    if (out.parity == 1) {
        out.rgb *= 0.6;
    }
    return out;
}

std::string huegrid_obj(const Mesh& mesh, int cells)
{
    if (mesh.num_vertices() == 0) {
        throw InputError("empty mesh");
    }
    const Bounds3D b = bounds3d(mesh.vertices());
    std::string out;
    char buf[256];
    for (const Vec3& v : mesh.vertices()) {
        const HueGridColor c = huegrid_color(v, b, cells);
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g %.17g %.17g %.17g\n", v[0], v[1], v[2], c.rgb[0],
                      c.rgb[1], c.rgb[2]);
        out += buf;
    }
    for (const Face& f : mesh.faces()) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

} // namespace catcorr
