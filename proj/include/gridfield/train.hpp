#pragma once

#include <vector>

#include "gridfield/splat.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// One supervised view: camera, baked target and the pixels it covers.
struct TrainView {
    Camera camera;
    FeatureMap target;
    Bitmap coverage;
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<double> loss_history;  // one entry per iteration
};

/// Optimises per-Gaussian features with Adam (beta1 0.9, beta2 0.999,
/// eps 1e-8) on the L1 + D-SSIM loss. Views are visited in a seeded round-robin
/// order; geometry stays fixed and features are clamped to [0,1].
/// Throws NumericError naming the iteration if the loss turns non-finite.
TrainResult train_features(const GaussianCloud& cloud, const std::vector<TrainView>& views, const TrainConfig& cfg,
                           const RenderConfig& render = {});

}  // namespace gridfield
