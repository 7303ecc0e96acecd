#include "gridfield/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridfield/parallel.hpp"

namespace gridfield {

Gaussian3D gaussian_at(const GaussianCloud& cloud, Eigen::Index i) {
    Gaussian3D g;
    g.position = cloud.positions.row(i).transpose();
    g.scale = cloud.scales.row(i).transpose();
    g.rotation = cloud.rotation(i);
    g.opacity = cloud.opacities(i);
    return g;
}

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const Camera& cam, int width, int height,
                                        double dilation) {
    const Mat3 view_rot = cam.rotation();
    const Vec3 t = cam.to_camera(g.position);
    if (!t.allFinite() || !view_rot.allFinite()) throw NumericError("project_gaussian: non-finite transform");
    if (t.z() <= cam.near) return std::nullopt;

    const Mat3 rot = g.rotation.normalized().toRotationMatrix();
    const Mat3 sigma = rot * g.scale.array().square().matrix().asDiagonal() * rot.transpose();

    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z * inv_z,
           0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> jw = jac * view_rot;

    Splat2D s;
    s.cov = jw * sigma * jw.transpose() + dilation * Mat2::Identity();
    s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
    const double det = s.cov.determinant();
    if (!(det > 0.0)) return std::nullopt;
    s.conic = s.cov.inverse();
    s.mean = cam.project(t);
    s.depth = t.z();
    s.opacity = g.opacity;

    const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double r3 = 3.0 * std::sqrt(lambda_max);
    if (s.mean.x() + r3 < 0.0 || s.mean.x() - r3 > width || s.mean.y() + r3 < 0.0 || s.mean.y() - r3 > height) {
        return std::nullopt;
    }
    return s;
}

double splat_alpha(const Splat2D& s, const Vec2& sample, const RenderConfig& cfg) {
    const Vec2 d = sample - s.mean;
    const double power = -0.5 * d.dot(s.conic * d);
    return std::min(cfg.max_alpha, s.opacity * std::exp(power));
}

Vec3 composite_pixel(std::span<const Contribution> splats, const RenderConfig& cfg) {
    for (std::size_t i = 1; i < splats.size(); ++i) {
        if (splats[i].depth < splats[i - 1].depth) throw ContractViolation("composite_pixel: splats not depth-sorted");
    }
    Vec3 out = Vec3::Zero();
    double transmittance = 1.0;
    for (const auto& s : splats) {
        const double a = std::min(cfg.max_alpha, s.alpha);
        if (a < cfg.alpha_cutoff) continue;
        out += s.feature * (a * transmittance);
        transmittance *= 1.0 - a;
        if (transmittance < cfg.transmittance_floor) break;
    }
    return out;
}

BlendWeights compute_blend_weights(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                                   const RenderConfig& cfg) {
    cfg.validate();
    BlendWeights blend;
    blend.width = width;
    blend.height = height;
    blend.gaussians = cloud.size();
    blend.weights.resize(static_cast<Eigen::Index>(width) * height, cloud.size());

    std::vector<std::optional<Splat2D>> projected(static_cast<std::size_t>(cloud.size()));
    parallel_for(projected.size(), cfg.threads, [&](std::size_t i) {
        auto s = project_gaussian(gaussian_at(cloud, static_cast<Eigen::Index>(i)), cam, width, height, cfg.dilation);
        if (s) s->gaussian_id = static_cast<Eigen::Index>(i);
        projected[i] = s;
    });
    std::vector<Splat2D> splats;
    for (auto& s : projected) {
        if (s && std::min(cfg.max_alpha, s->opacity) >= cfg.alpha_cutoff) splats.push_back(*s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_id < b.gaussian_id;
    });

    const int tiles_x = (width + cfg.tile - 1) / cfg.tile;
    const int tiles_y = (height + cfg.tile - 1) / cfg.tile;
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (int k = 0; k < static_cast<int>(splats.size()); ++k) {
        const Splat2D& s = splats[k];
        // Outside this radius the footprint alpha is below the cutoff.
        const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - s.cov.determinant()));
        const double reach = std::sqrt(2.0 * std::log(std::min(cfg.max_alpha, s.opacity) / cfg.alpha_cutoff) * lambda_max);
        const int x0 = std::max(0, static_cast<int>(std::ceil(s.mean.x() - reach - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(s.mean.x() + reach - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y() - reach - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(s.mean.y() + reach - 0.5)));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / cfg.tile; ty <= y1 / cfg.tile; ++ty) {
            for (int tx = x0 / cfg.tile; tx <= x1 / cfg.tile; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(k);
        }
    }

    using Triplet = Eigen::Triplet<double, Eigen::Index>;
    std::vector<std::vector<Triplet>> per_tile(bins.size());
    parallel_for(bins.size(), cfg.threads, [&](std::size_t tile_index) {
        const int tx = static_cast<int>(tile_index % tiles_x);
        const int ty = static_cast<int>(tile_index / tiles_x);
        const auto& list = bins[tile_index];
        auto& out = per_tile[tile_index];
        for (int y = ty * cfg.tile; y < std::min(height, (ty + 1) * cfg.tile); ++y) {
            for (int x = tx * cfg.tile; x < std::min(width, (tx + 1) * cfg.tile); ++x) {
                const Vec2 sample(x + 0.5, y + 0.5);
                const Eigen::Index pixel = static_cast<Eigen::Index>(y) * width + x;
                double transmittance = 1.0;
                for (int k : list) {
                    const double a = splat_alpha(splats[k], sample, cfg);
                    if (a < cfg.alpha_cutoff) continue;
                    out.emplace_back(pixel, splats[k].gaussian_id, a * transmittance);
                    transmittance *= 1.0 - a;
                    if (transmittance < cfg.transmittance_floor) break;
                }
            }
        }
    });
    std::size_t total = 0;
    for (const auto& t : per_tile) total += t.size();
    std::vector<Triplet> triplets;
    triplets.reserve(total);
    for (const auto& t : per_tile) triplets.insert(triplets.end(), t.begin(), t.end());
    blend.weights.setFromTriplets(triplets.begin(), triplets.end());
    return blend;
}

FeatureMap render_features(const BlendWeights& blend, const Pixels3<double>& features, int view) {
    if (features.rows() != blend.gaussians) throw ContractViolation("render_features: feature count mismatch");
    FeatureMap map(blend.width, blend.height, view);
    map.data = blend.weights * features;
    return map;
}

FeatureMap render_feature_map(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                              const RenderConfig& cfg, int view) {
    return render_features(compute_blend_weights(cloud, cam, width, height, cfg), cloud.features, view);
}

Pixels3<double> backward_features(const BlendWeights& blend, const Pixels3<double>& pixel_grads) {
    if (pixel_grads.rows() != blend.weights.rows()) {
        throw ContractViolation("backward_features: gradient map does not match the forward state");
    }
    return blend.weights.transpose() * pixel_grads;
}

Pixels3<double> backward_features(const GaussianCloud& cloud, const Camera& cam, int width, int height,
                                  const RenderConfig& cfg, const Pixels3<double>& pixel_grads) {
    return backward_features(compute_blend_weights(cloud, cam, width, height, cfg), pixel_grads);
}

}  // namespace gridfield
