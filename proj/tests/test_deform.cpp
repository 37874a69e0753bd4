#include "fixtures.hpp"

#include <doctest.h>

using namespace catcorr;
using namespace fixtures;

namespace {

struct DeformFixture {
    DeformationModel model;
    VecX code;
    std::vector<Vec3> verts;

    DeformFixture()
    {
        std::mt19937_64 rng(8);
        model = DeformationModel::create(4, 3, 10, rng);
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (Eigen::Index i = 0; i < model.decoder.num_params(); ++i) {
            model.decoder.params()[i] += u(rng);
        }
        code = VecX::Random(4) * 0.5;
        verts = tetrahedron().vertices();
        verts.push_back(Vec3(0.05, -0.1, 0.2));
    }

    // Weighted probe of the deformed positions.
    double probe(const DeformationModel& m, const VecX& c, const std::vector<Vec3>& v) const
    {
        const DeformPass pass = deform_forward(m, v, c);
        double s = 0.0;
        for (std::size_t i = 0; i < pass.output.size(); ++i) {
            s += pass.output[i].dot(Vec3(1.0 + i, -0.5, 0.25 * i));
        }
        return s;
    }
};

} // namespace

TEST_CASE("fresh deformation model is the exact identity")
{
    std::mt19937_64 rng(1);
    const DeformationModel m = DeformationModel::create(8, 5, 32, rng);
    const InstanceLatent lat{"x", VecX::Random(8)};
    const Mesh t = tetrahedron();
    CHECK(deform_mesh(m, t, lat).vertices() == t.vertices());
    const DeformedVertex dv = deform_vertex(m, Vec3(0.1, 0.2, 0.3), lat);
    CHECK(dv.alpha == Vec3::Ones());
    CHECK(dv.delta == Vec3::Zero());
    CHECK(deformation_reg(t, m, lat) == 0.0);
    CHECK(smoothness_reg(t, m, lat) == 0.0);
}

TEST_CASE("deformation rejects bad latents")
{
    std::mt19937_64 rng(1);
    const DeformationModel m = DeformationModel::create(4, 3, 8, rng);
    CHECK_THROWS_AS(deform_vertex(m, Vec3::Zero(), {"x", VecX::Zero(3)}), Error);
    VecX bad = VecX::Zero(4);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(deform_vertex(m, Vec3::Zero(), {"x", bad}), Error);
}

TEST_CASE("deformation is a per-axis scale plus offset")
{
    DeformFixture f;
    for (const Vec3& v : f.verts) {
        const DeformedVertex dv = deform_vertex(f.model, v, {"x", f.code});
        CHECK((dv.deformed - dv.alpha.cwiseProduct(v) - dv.delta).norm() < 1e-15);
        CHECK((dv.alpha.array() > 0.0).all());
    }
}

TEST_CASE("deform_backward matches central differences")
{
    DeformFixture f;
    const DeformPass pass = deform_forward(f.model, f.verts, f.code);
    std::vector<Vec3> gout(f.verts.size());
    for (std::size_t i = 0; i < gout.size(); ++i) {
        gout[i] = Vec3(1.0 + i, -0.5, 0.25 * i);
    }
    VecX gdec = VecX::Zero(f.model.decoder.num_params());
    VecX gcode = VecX::Zero(f.code.size());
    std::vector<Vec3> gin(f.verts.size(), Vec3::Zero());
    deform_backward(f.model, pass, gout, gdec, gcode, &gin);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < gdec.size(); i += 3) {
        DeformationModel mp = f.model, mm = f.model;
        mp.decoder.params()[i] += h;
        mm.decoder.params()[i] -= h;
        CHECK(gdec[i] == doctest::Approx((f.probe(mp, f.code, f.verts) - f.probe(mm, f.code, f.verts)) / (2 * h))
                             .epsilon(1e-6)
                             .scale(1e-3));
    }
    for (Eigen::Index i = 0; i < gcode.size(); ++i) {
        VecX cp = f.code, cm = f.code;
        cp[i] += h;
        cm[i] -= h;
        CHECK(gcode[i] ==
              doctest::Approx((f.probe(f.model, cp, f.verts) - f.probe(f.model, cm, f.verts)) / (2 * h)).epsilon(1e-6));
    }
    for (std::size_t v = 0; v < f.verts.size(); ++v) {
        for (int k = 0; k < 3; ++k) {
            auto vp = f.verts, vm = f.verts;
            vp[v][k] += h;
            vm[v][k] -= h;
            CHECK(gin[v][k] ==
                  doctest::Approx((f.probe(f.model, f.code, vp) - f.probe(f.model, f.code, vm)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("regularizer gradients match central differences")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const Mesh t = unit_cube_mesh();
    std::vector<Vec3> templ = t.vertices();
    std::vector<Vec3> def = templ;
    for (Vec3& p : def) {
        p += Vec3(u(rng), u(rng), u(rng));
    }
    const double w = 0.7;
    std::vector<Vec3> gt(templ.size(), Vec3::Zero()), gd(templ.size(), Vec3::Zero());
    std::vector<Vec3> st(templ.size(), Vec3::Zero()), sd(templ.size(), Vec3::Zero());
    deformation_reg_grad(templ, def, w, gt, gd);
    smoothness_reg_grad(templ, def, t.edges(), w, st, sd);
    const double h = 1e-6;
    for (std::size_t v = 0; v < templ.size(); ++v) {
        for (int k = 0; k < 3; ++k) {
            auto fd = [&](std::vector<Vec3>& x, bool smooth) {
                const double keep = x[v][k];
                std::vector<Vec3> d1(templ.size()), d2(templ.size());
                x[v][k] = keep + h;
                const double fp = smooth ? smoothness_reg_grad(templ, def, t.edges(), 1.0, d1, d2)
                                         : deformation_reg_grad(templ, def, 1.0, d1, d2);
                x[v][k] = keep - h;
                const double fm = smooth ? smoothness_reg_grad(templ, def, t.edges(), 1.0, d1, d2)
                                         : deformation_reg_grad(templ, def, 1.0, d1, d2);
                x[v][k] = keep;
                return w * (fp - fm) / (2 * h);
            };
            CHECK(gt[v][k] == doctest::Approx(fd(templ, false)).epsilon(1e-6).scale(1e-6));
            CHECK(gd[v][k] == doctest::Approx(fd(def, false)).epsilon(1e-6).scale(1e-6));
            CHECK(st[v][k] == doctest::Approx(fd(templ, true)).epsilon(1e-6).scale(1e-6));
            CHECK(sd[v][k] == doctest::Approx(fd(def, true)).epsilon(1e-6).scale(1e-6));
        }
    }
}

TEST_CASE("smoothness ignores a global translation, the offset penalty does not")
{
    const Mesh t = unit_cube_mesh();
    std::vector<Vec3> def = t.vertices();
    for (Vec3& p : def) {
        p += Vec3(0.2, -0.1, 0.3);
    }
    std::vector<Vec3> a(def.size(), Vec3::Zero()), b(def.size(), Vec3::Zero());
    CHECK(smoothness_reg_grad(t.vertices(), def, t.edges(), 1.0, a, b) < 1e-12);
    CHECK(deformation_reg_grad(t.vertices(), def, 1.0, a, b) > 0.0);
}

TEST_CASE("deformation model and latents round trip")
{
    TempDir dir("deform");
    DeformFixture f;
    save_deformation_model(dir.path / "dec", f.model);
    const DeformationModel r = load_deformation_model(dir.path / "dec");
    CHECK(r.latent_dim == f.model.latent_dim);
    CHECK(r.decoder.params() == f.model.decoder.params());
    CHECK(r.decoder.activation() == kDecoderActivation);
    LatentTable lt{{"b", VecX::Random(4)}, {"a", VecX::Random(4)}};
    save_latents(dir.path / "lat", lt, 4);
    const LatentTable back = load_latents(dir.path / "lat", 4);
    CHECK(back.size() == 2);
    CHECK(back.at("a") == lt.at("a"));
    CHECK(back.at("b") == lt.at("b"));
    CHECK_THROWS_AS(load_latents(dir.path / "lat", 5), StateMismatch);
}
