#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "gridfield/synth.hpp"
#include "gridfield/types.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gridfield-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small, cheap scene for unit tests.
inline gridfield::SyntheticSceneSpec small_spec(int objects = 2, int views = 3, std::uint64_t seed = 1) {
    gridfield::SyntheticSceneSpec s;
    s.objects = objects;
    s.views = views;
    s.width = 64;
    s.height = 64;
    s.dim = 16;
    s.gaussians_per_object = 400;
    s.seed = seed;
    return s;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline gridfield::Bitmap rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    gridfield::Bitmap m = gridfield::Bitmap::Zero(h, w);
    m.block(y0, x0, y1 - y0, x1 - x0).setOnes();
    return m;
}

}  // namespace testutil
