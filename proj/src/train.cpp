#include "gridfield/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gridfield/loss.hpp"

namespace gridfield {

TrainResult train_features(const GaussianCloud& cloud, const std::vector<TrainView>& views, const TrainConfig& cfg,
                           const RenderConfig& render) {
    cfg.validate();
    if (views.empty()) throw DomainError("train_features: no supervised views");
    TrainResult result;
    result.cloud = cloud;
    if (cfg.iterations == 0) return result;

    RenderConfig rcfg = render;
    rcfg.threads = cfg.threads;
    std::vector<BlendWeights> blends;
    blends.reserve(views.size());
    for (const auto& v : views) {
        blends.push_back(compute_blend_weights(cloud, v.camera, v.target.width, v.target.height, rcfg));
    }

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    Pixels3<double>& f = result.cloud.features;
    Pixels3<double> m = Pixels3<double>::Zero(f.rows(), 3);
    Pixels3<double> v = Pixels3<double>::Zero(f.rows(), 3);

    // Seeded round-robin: one shuffled visiting order, cycled.
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Fisher-Yates with explicit modulo keeps the order identical across standard libraries.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double beta1_t = 1.0;
    double beta2_t = 1.0;
    result.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int it = 0; it < cfg.iterations; ++it) {
        const std::size_t k = order[static_cast<std::size_t>(it) % order.size()];
        const TrainView& view = views[k];

        const FeatureMap rendered = render_features(blends[k], f, static_cast<int>(k));
        const FeatureLoss loss = feature_loss(rendered, view.target, view.coverage, cfg.lambda);
        if (!std::isfinite(loss.total)) {
            throw NumericError("training diverged at iteration " + std::to_string(it));
        }
        result.loss_history.push_back(loss.total);

        const Pixels3<double> g = backward_features(blends[k], loss.grad);
        beta1_t *= kBeta1;
        beta2_t *= kBeta2;
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
        // Exponential decay from the base rate to 1% of it at the last iteration.
        const double rate = cfg.step_size * std::pow(0.01, static_cast<double>(it) / cfg.iterations);
        const double step = rate / (1.0 - beta1_t);
        const double v_corr = 1.0 / (1.0 - beta2_t);
        f.array() -= step * m.array() / ((v.array() * v_corr).sqrt() + kEps);
        f = f.cwiseMax(0.0).cwiseMin(1.0);
    }
    return result;
}

}  // namespace gridfield
