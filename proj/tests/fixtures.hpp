#pragma once

#include "catcorr/train.hpp"

#include <filesystem>
#include <random>

#include <unistd.h>

namespace fixtures {

using namespace catcorr;

inline Mesh tetrahedron(double s = 0.3)
{
    return Mesh({{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}}, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

inline Mesh unit_cube_mesh()
{
    std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    std::vector<Face> f{{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                        {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
    return Mesh(std::move(v), std::move(f));
}

inline Camera small_camera(int size = 16)
{
    return Camera{20.0, 20.0, size / 2.0, size / 2.0, size, size};
}

inline Mat3 random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline Pose front_pose(double distance = 3.0)
{
    Pose p;
    p.translation = Vec3(0.0, 0.0, distance);
    return p;
}

/// Tiny model on a coarse grid with a non-trivial decoder, for gradient checks.
inline TrainConfig tiny_config()
{
    TrainConfig c;
    c.grid_resolution = 6;
    c.sdf_layers = 3;
    c.sdf_hidden = 8;
    c.deform_layers = 3;
    c.deform_hidden = 8;
    c.latent_dim = 4;
    c.latent_init_std = 0.1;
    c.init_radius = 0.3;
    c.tau = 1.0;
    c.eikonal_samples = 16;
    return c;
}

inline TrainSample tetra_sample(const Camera& cam)
{
    TrainSample s;
    s.instance_id = "a";
    const Mesh gt = tetrahedron(0.35);
    s.gt_vertices = gt.vertices();
    s.pose = front_pose(3.0);
    s.camera = cam;
    s.mask = rasterize_hard(apply_pose(gt, s.pose), cam).mask;
    s.mask_dt = distance_transform(s.mask);
    return s;
}

/// Perturbs the decoder's zero last layer so deformation gradients are exercised.
inline void randomize_decoder(TrainState& st, std::uint64_t seed, double scale = 0.05)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < st.deform.decoder.num_params(); ++i) {
        st.deform.decoder.params()[i] += u(rng);
    }
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("catcorr_test_" + name + "_" + std::to_string(::getpid())))
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace fixtures
