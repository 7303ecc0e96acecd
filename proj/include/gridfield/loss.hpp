#pragma once

#include "gridfield/types.hpp"

namespace gridfield {

/// Components of (1 - lambda) * L1 + lambda * D-SSIM over covered pixels.
struct FeatureLoss {
    double total = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    Pixels3<double> grad;  // d total / d render, zero outside coverage
};

/// L1 is the mean absolute difference over covered pixels and channels.
/// D-SSIM is 1 - mean SSIM over covered pixels (11x11 Gaussian window,
/// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, zero padding), computed per channel on
/// coverage-masked images and averaged. Throws DomainError when nothing is
/// covered.
FeatureLoss feature_loss(const FeatureMap& render, const FeatureMap& target, const Bitmap& coverage, double lambda,
                         bool with_gradient = true);

}  // namespace gridfield
