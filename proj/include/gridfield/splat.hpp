#pragma once

#include <optional>
#include <span>

#include <Eigen/SparseCore>

#include "gridfield/types.hpp"

namespace gridfield {

struct Gaussian3D {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    double opacity = 0.5;
};

Gaussian3D gaussian_at(const GaussianCloud& cloud, Eigen::Index i);

/// Screen-space footprint of one Gaussian.
struct Splat2D {
    Vec2 mean = Vec2::Zero();  // pixels; pixel (x, y) is sampled at (x + 0.5, y + 0.5)
    Mat2 cov = Mat2::Identity();
    Mat2 conic = Mat2::Identity();  // cov^-1
    double depth = 0.0;
    double opacity = 0.0;
    Eigen::Index gaussian_id = 0;
};

/// EWA projection: J W Sigma W^T J^T + dilation * I. Returns nullopt when the
/// Gaussian is behind the near plane or more than 3 sigma outside the image.
std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const Camera& cam, int width, int height,
                                        double dilation);

/// Footprint opacity at a pixel sample point, clipped to cfg.max_alpha.
double splat_alpha(const Splat2D& s, const Vec2& sample, const RenderConfig& cfg);

struct Contribution {
    double alpha = 0.0;
    Vec3 feature = Vec3::Zero();
    double depth = 0.0;
};

/// Front-to-back alpha compositing of one pixel. Contributions must be sorted
/// by non-decreasing depth; those below cfg.alpha_cutoff are skipped and the
/// loop stops once transmittance drops below cfg.transmittance_floor.
Vec3 composite_pixel(std::span<const Contribution> splats, const RenderConfig& cfg);

/// Per-pixel compositing weights a_i * prod_{j<i}(1 - a_j) as a sparse
/// (pixels x gaussians) matrix. The rendered map is `weights * features`,
/// and the feature gradient is `weights^T * pixel_grads`, since compositing
/// is linear in the features.
struct BlendWeights {
    int width = 0;
    int height = 0;
    Eigen::Index gaussians = 0;
    Eigen::SparseMatrix<double, Eigen::RowMajor> weights;
};

BlendWeights compute_blend_weights(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                                   const RenderConfig& cfg);

FeatureMap render_features(const BlendWeights& blend, const Pixels3<double>& features, int view = -1);

/// Tile-binned, depth-sorted feature rendering (ties in depth broken by id).
FeatureMap render_feature_map(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                              const RenderConfig& cfg, int view = -1);

/// d loss / d features from d loss / d rendered pixels. Geometry gets no gradient.
Pixels3<double> backward_features(const BlendWeights& blend, const Pixels3<double>& pixel_grads);

Pixels3<double> backward_features(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                                  const RenderConfig& cfg, const Pixels3<double>& pixel_grads);

}  // namespace gridfield
