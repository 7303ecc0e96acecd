#include "gridfield/loss.hpp"

#include <array>
#include <cmath>

namespace gridfield {

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_taps() {
    static const std::array<double, kWindow> taps = [] {
        std::array<double, kWindow> t{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += t[i];
        }
        for (auto& v : t) v /= sum;
        return t;
    }();
    return taps;
}

// Separable "same" correlation with zero padding; self-adjoint for the
// symmetric kernel.
Plane blur(const Plane& in) {
    const auto& g = gaussian_taps();
    const int h = static_cast<int>(in.rows());
    const int w = static_cast<int>(in.cols());
    constexpr int r = kWindow / 2;
    Plane tmp = Plane::Zero(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w) s += g[k + r] * in(y, xx);
            }
            tmp(y, x) = s;
        }
    }
    Plane out = Plane::Zero(h, w);
    for (int y = 0; y < h; ++y) {
        for (int k = -r; k <= r; ++k) {
            const int yy = y + k;
            if (yy >= 0 && yy < h) out.row(y) += g[k + r] * tmp.row(yy);
        }
    }
    return out;
}

Plane channel(const FeatureMap& map, int c) {
    Plane p(map.height, map.width);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) p(y, x) = map.data(static_cast<Eigen::Index>(y) * map.width + x, c);
    }
    return p;
}

}  // namespace

FeatureLoss feature_loss(const FeatureMap& render, const FeatureMap& target, const Bitmap& coverage, double lambda,
                         bool with_gradient) {
    if (render.width != target.width || render.height != target.height || coverage.rows() != render.height ||
        coverage.cols() != render.width) {
        throw ContractViolation("feature_loss: dimension mismatch");
    }
    const int h = render.height;
    const int w = render.width;
    const Plane mask = coverage.cast<double>().min(1.0);
    const double covered = mask.sum();
    if (covered < 1.0) throw DomainError("no supervised pixels");

    FeatureLoss out;
    if (with_gradient) out.grad = Pixels3<double>::Zero(render.data.rows(), 3);
    const double norm = 1.0 / (3.0 * covered);

    double l1_sum = 0.0;
    double ssim_sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Plane r = channel(render, c);
        const Plane t = channel(target, c);
        const Plane diff = (r - t) * mask;
        l1_sum += diff.abs().sum();

        Plane grad_c = Plane::Zero(h, w);
        if (lambda != 0.0) {
            const Plane x = r * mask;
            const Plane y = t * mask;
            const Plane mx = blur(x);
            const Plane my = blur(y);
            const Plane sxx = blur(x * x) - mx * mx;
            const Plane syy = blur(y * y) - my * my;
            const Plane sxy = blur(x * y) - mx * my;
            const Plane n1 = 2.0 * mx * my + kC1;
            const Plane n2 = 2.0 * sxy + kC2;
            const Plane d1 = mx * mx + my * my + kC1;
            const Plane d2 = sxx + syy + kC2;
            const Plane ssim = (n1 * n2) / (d1 * d2);
            ssim_sum += (ssim * mask).sum();

            if (with_gradient) {
                // dL/dSSIM per pixel, then chain through the windowed moments.
                const Plane s = -lambda * norm * mask;
                const Plane ds_dmx = (2.0 * my * n2) / (d1 * d2) - (n1 * n2 * 2.0 * mx) / (d1 * d1 * d2);
                const Plane ds_dsxx = -(n1 * n2) / (d1 * d2 * d2);
                const Plane ds_dsxy = (2.0 * n1) / (d1 * d2);
                const Plane a = s * (ds_dmx + ds_dsxx * (-2.0 * mx) + ds_dsxy * (-my));
                const Plane b = s * ds_dsxx;
                const Plane cxy = s * ds_dsxy;
                grad_c = (blur(a) + 2.0 * x * blur(b) + y * blur(cxy)) * mask;
            }
        }
        if (with_gradient && lambda != 1.0) {
            grad_c += (1.0 - lambda) * norm * diff.sign() * mask;
        }
        if (with_gradient) {
            for (int yy = 0; yy < h; ++yy) {
                for (int xx = 0; xx < w; ++xx) out.grad(static_cast<Eigen::Index>(yy) * w + xx, c) = grad_c(yy, xx);
            }
        }
    }
    out.l1 = l1_sum * norm;
    out.dssim = lambda != 0.0 ? 1.0 - ssim_sum * norm : 0.0;
    if (lambda == 0.0) {
        // Still report D-SSIM for diagnostics when it was not part of the objective.
        const FeatureLoss full = feature_loss(render, target, coverage, 1.0, false);
        out.dssim = full.dssim;
    }
    out.total = (1.0 - lambda) * out.l1 + lambda * out.dssim;
    return out;
}

}  // namespace gridfield
