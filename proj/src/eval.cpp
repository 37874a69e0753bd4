#include "catcorr/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace catcorr {

void SymmetrySpec::validate() const
{
    if (!axis_point.allFinite() || !axis_dir.allFinite()) {
        throw Error("non-finite symmetry axis");
    }
    if (std::abs(axis_dir.norm() - 1.0) > 1e-9) {
        throw Error("symmetry axis must be a unit vector");
    }
    if (kind == SymmetryKind::Discrete && n < 2) {
        throw Error("discrete symmetry order must be at least 2");
    }
}

SymmetrySpec SymmetrySpec::transformed(const Pose& pose) const
{
    SymmetrySpec out = *this;
    out.axis_point = pose.apply(axis_point);
    out.axis_dir = (pose.rotation * axis_dir).normalized();
    return out;
}

json to_json(const SymmetrySpec& s)
{
    json j;
    switch (s.kind) {
    case SymmetryKind::None: j["kind"] = "none"; break;
    case SymmetryKind::Discrete:
        j["kind"] = "discrete";
        j["N"] = s.n;
        break;
    case SymmetryKind::Continuous: j["kind"] = "continuous"; break;
    }
    j["axis_point"] = {s.axis_point[0], s.axis_point[1], s.axis_point[2]};
    j["axis_dir"] = {s.axis_dir[0], s.axis_dir[1], s.axis_dir[2]};
    return j;
}

SymmetrySpec symmetry_from_json(const json& j)
{
    try {
        SymmetrySpec s;
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "none") {
            s.kind = SymmetryKind::None;
        } else if (kind == "discrete") {
            s.kind = SymmetryKind::Discrete;
            s.n = j.at("N").get<int>();
        } else if (kind == "continuous") {
            s.kind = SymmetryKind::Continuous;
        } else {
            throw InputError("unknown symmetry kind '" + kind + "'");
        }
        if (j.contains("axis_point")) {
            const auto p = j["axis_point"].get<std::array<double, 3>>();
            s.axis_point = Vec3(p[0], p[1], p[2]);
        }
        if (j.contains("axis_dir")) {
            const auto d = j["axis_dir"].get<std::array<double, 3>>();
            s.axis_dir = Vec3(d[0], d[1], d[2]);
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad symmetry spec: ") + e.what());
    } catch (const InputError&) {
        throw;
    } catch (const Error& e) {
        throw InputError(std::string("bad symmetry spec: ") + e.what());
    }
}

double sym_error(const Vec3& gt, const Vec3& pred, const SymmetrySpec& sym)
{
    sym.validate();
    switch (sym.kind) {
    case SymmetryKind::None: return (gt - pred).norm();
    case SymmetryKind::Discrete: {
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < sym.n; ++k) {
            const double theta = 2.0 * std::numbers::pi * k / sym.n;
            const Eigen::AngleAxisd rot(theta, sym.axis_dir);
            const Vec3 q = rot * (gt - sym.axis_point) + sym.axis_point;
            best = std::min(best, (q - pred).norm());
        }
        return best;
    }
    case SymmetryKind::Continuous: {
        const Vec3& a = sym.axis_dir;
        const Vec3 g = gt - sym.axis_point;
        const Vec3 p = pred - sym.axis_point;
        const double h = a.dot(g);
        const double r = (g - h * a).norm();
        if (r == 0.0) {
            return (gt - pred).norm();
        }
        const double hp = a.dot(p);
        const double rp = (p - hp * a).norm();
        return std::hypot(h - hp, r - rp);
    }
    }
    throw Error("unknown symmetry kind");
}

std::string to_string(const ModalityLabel& m)
{
    return m.modal ? "Modal" : std::string("Amodal(") + to_string(m.reason) + ")";
}

namespace {

Visibility view_visibility(const Vec3& kp, const ViewScene& scene)
{
    const Vec3 x = scene.pose.apply(kp);
    return visibility(x, apply_pose(scene.object, scene.pose), scene.occluders, scene.camera);
}

} // namespace

ModalityLabel classify_modality(const Vec3& keypoint_query, const ViewScene& query, const Vec3& keypoint_target,
                                const ViewScene& target)
{
    const Visibility q = view_visibility(keypoint_query, query);
    if (q != Visibility::Visible) {
        return {false, q};
    }
    const Visibility t = view_visibility(keypoint_target, target);
    if (t != Visibility::Visible) {
        return {false, t};
    }
    return {true, Visibility::Visible};
}

namespace {

void tally(SplitScore& s, bool correct)
{
    ++s.count;
    s.correct += correct ? 1 : 0;
}

} // namespace

EvalReport pck(std::span<const KeypointPair> pairs, double threshold_ratio)
{
    if (pairs.empty()) {
        throw Error("no pairs to evaluate");
    }
    if (!(threshold_ratio >= 0.0)) {
        throw Error("threshold ratio must be non-negative");
    }
    for (const KeypointPair& p : pairs) {
        if (!(p.target_bbox.extents().minCoeff() > 0.0) || !(p.target_scale > 0.0)) {
            throw Error("target bounding box must have positive extents");
        }
        p.symmetry.validate();
    }
    EvalReport report;
    report.threshold_ratio = threshold_ratio;
    report.pairs.resize(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const KeypointPair& p = pairs[i];
        const Vec3 ext = p.target_bbox.extents();
        PairScore& s = report.pairs[i];
        s.pair_id = p.pair_id;
        s.category = p.category;
        s.modality = p.modality;
        s.threshold = threshold_ratio * ext.maxCoeff() * p.target_scale;
        s.error = p.has_prediction ? sym_error(p.gt_target, p.predicted, p.symmetry)
                                   : std::numeric_limits<double>::infinity();
        s.correct = s.error < s.threshold;
    }
    for (const PairScore& s : report.pairs) {
        CategoryReport& c = report.categories[s.category];
        tally(s.modality.modal ? c.modal : c.amodal, s.correct);
        tally(c.all, s.correct);
    }
    return report;
}

std::map<std::string, SplitScore> pck2d(std::span<const KeypointPair2D> pairs, double threshold_ratio)
{
    if (pairs.empty()) {
        throw Error("no pairs to evaluate");
    }
    if (!(threshold_ratio >= 0.0)) {
        throw Error("threshold ratio must be non-negative");
    }
    std::map<std::string, SplitScore> out;
    for (const KeypointPair2D& p : pairs) {
        if (!(std::max(p.bbox_width, p.bbox_height) > 0.0)) {
            throw Error("2D bounding box must be non-empty");
        }
        const double threshold = threshold_ratio * std::max(p.bbox_width, p.bbox_height);
        tally(out[p.category], p.has_prediction && (p.gt - p.predicted).norm() < threshold);
    }
    return out;
}

void add_pck2d(EvalReport& report, const std::map<std::string, SplitScore>& slice)
{
    for (const auto& [category, score] : slice) {
        report.categories[category].pck2d = score;
    }
}

std::optional<double> EvalReport::mean(SplitScore CategoryReport::*split) const
{
    double sum = 0.0;
    int n = 0;
    for (const auto& [name, c] : categories) {
        if (const auto v = (c.*split).pck()) {
            sum += *v;
            ++n;
        }
    }
    return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
}

std::optional<double> EvalReport::weighted_mean(SplitScore CategoryReport::*split) const
{
    SplitScore pooled;
    for (const auto& [name, c] : categories) {
        pooled.correct += (c.*split).correct;
        pooled.count += (c.*split).count;
    }
    return pooled.pck();
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json split_json(const SplitScore& s) { return json{{"correct", s.correct}, {"count", s.count}}; }

constexpr std::array<std::pair<const char*, SplitScore CategoryReport::*>, 4> kSplits{{
    {"pck2d", &CategoryReport::pck2d},
    {"pck3d_modal", &CategoryReport::modal},
    {"pck3d_amodal", &CategoryReport::amodal},
    {"pck3d_all", &CategoryReport::all},
}};

std::string fmt_pct(const std::optional<double>& v)
{
    if (!v) {
        return "-";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *v);
    return buf;
}

} // namespace

json to_json(const EvalReport& r)
{
    json j;
    j["version"] = kSchemaVersion;
    j["threshold_ratio"] = r.threshold_ratio;
    json cats = json::object();
    for (const auto& [name, c] : r.categories) {
        json cj;
        json counts;
        for (const auto& [key, member] : kSplits) {
            cj[key] = opt_json((c.*member).pck());
            counts[key] = split_json(c.*member);
        }
        cj["counts"] = counts;
        cats[name] = cj;
    }
    j["categories"] = cats;
    json mean;
    json weighted;
    for (const auto& [key, member] : kSplits) {
        mean[key] = opt_json(r.mean(member));
        weighted[key] = opt_json(r.weighted_mean(member));
    }
    j["mean"] = mean;
    j["weighted_mean"] = weighted;
    json pairs = json::array();
    for (const PairScore& p : r.pairs) {
        pairs.push_back({{"pair_id", p.pair_id},
                         {"category", p.category},
                         {"error", std::isfinite(p.error) ? json(p.error) : json(nullptr)},
                         {"threshold", p.threshold},
                         {"correct", p.correct},
                         {"modality", to_string(p.modality)}});
    }
    j["pairs"] = pairs;
    return j;
}

std::string to_csv(const EvalReport& r)
{
    std::string out = "category,2d,3d_modal,3d_amodal,3d_all\n";
    auto row = [&](const std::string& name, auto get) {
        out += name;
        for (const auto& [key, member] : kSplits) {
            out += "," + fmt_pct(get(member));
        }
        out += "\n";
    };
    for (const auto& [name, c] : r.categories) {
        row(name, [&](SplitScore CategoryReport::*m) { return (c.*m).pck(); });
    }
    row("mean", [&](SplitScore CategoryReport::*m) { return r.mean(m); });
    return out;
}

std::string format_table(const EvalReport& r)
{
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-16s %8s %10s %10s %10s\n", "category", "2D", "3D-modal", "3D-amodal",
                  "3D-all");
    std::string out = buf;
    auto row = [&](const std::string& name, auto get) {
        std::snprintf(buf, sizeof(buf), "%-16s %8s %10s %10s %10s\n", name.c_str(),
                      fmt_pct(get(kSplits[0].second)).c_str(), fmt_pct(get(kSplits[1].second)).c_str(),
                      fmt_pct(get(kSplits[2].second)).c_str(), fmt_pct(get(kSplits[3].second)).c_str());
        out += buf;
    };
    for (const auto& [name, c] : r.categories) {
        row(name, [&](SplitScore CategoryReport::*m) { return (c.*m).pck(); });
    }
    row("mean", [&](SplitScore CategoryReport::*m) { return r.mean(m); });
    return out;
}

} // namespace catcorr
