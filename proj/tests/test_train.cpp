#include "fixtures.hpp"

#include <doctest.h>

using namespace catcorr;
using namespace fixtures;

namespace {

struct GradFixture {
    TrainConfig config = tiny_config();
    TrainState state;
    TrainSample sample = tetra_sample(small_camera(16));
    std::vector<Vec3> eik;

    GradFixture()
    {
        state = init_state(config, {"a", "b"});
        randomize_decoder(state, 7);
        std::mt19937_64 rng(3);
        eik = sample_eikonal_points(state.sdf.bounds, state.templ.mesh, 16, rng);
    }

    std::function<double(const VecX&)> loss_fn(bool reg, const LossWeights& w, bool deform = true)
    {
        return [this, reg, w, deform](const VecX& p) {
            TrainState s = state;
            s.unpack(p);
            const LossOptions opt{config.tau, deform, false};
            return (reg ? loss_geo_reg(sample, s, w, eik, opt) : loss_geo(sample, s, w, eik, opt)).parts.total;
        };
    }
};

} // namespace

TEST_CASE("loss_geo_reg gradient matches central differences")
{
    GradFixture f;
    const LossWeights w;
    const LossValue lv = loss_geo_reg(f.sample, f.state, w, f.eik, {f.config.tau, true, true});
    std::mt19937_64 rng(11);
    const double floor = 1e-6 * lv.grad.cwiseAbs().maxCoeff();
    const FdReport r = finite_diff_check(f.loss_fn(true, w), f.state.pack(), lv.grad, 400, 1e-5, 1e-3, rng, floor);
    MESSAGE("max rel err " << r.max_rel_error << " at " << r.worst_index);
    CHECK(r.pass);
}

