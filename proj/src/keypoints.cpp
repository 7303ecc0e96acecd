#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "gridfield/ingest.hpp"
#include "gridfield/parallel.hpp"

namespace gridfield {

namespace {

using GrayImage = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

GrayImage to_gray(const ImageRGB& image) {
    GrayImage g(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const auto px = image.pixel(x, y);
            g(y, x) = 0.299 * px(0) + 0.587 * px(1) + 0.114 * px(2);
        }
    }
    return g;
}

// Separable Gaussian blur with clamped borders.
GrayImage blur(const GrayImage& in, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    Eigen::VectorXd kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) kernel(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel /= kernel.sum();
    const int h = static_cast<int>(in.rows());
    const int w = static_cast<int>(in.cols());
    GrayImage tmp(h, w);
    GrayImage out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += kernel(k + radius) * in(y, std::clamp(x + k, 0, w - 1));
            tmp(y, x) = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += kernel(k + radius) * tmp(std::clamp(y + k, 0, h - 1), x);
            out(y, x) = s;
        }
    }
    return out;
}

struct Feature {
    Eigen::Vector2i pos;
    Eigen::VectorXd descriptor;
};

std::vector<Feature> describe(const ImageRGB& image, const KeypointParams& params) {
    const GrayImage gray = to_gray(image);
    const int half = params.patch / 2;
    std::vector<Feature> out;
    for (const auto& p : detect_corners(image, params)) {
        Eigen::VectorXd d(params.patch * params.patch);
        int k = 0;
        for (int dy = -half; dy <= half; ++dy) {
            for (int dx = -half; dx <= half; ++dx) d(k++) = gray(p.y() + dy, p.x() + dx);
        }
        d.array() -= d.mean();
        const double n = d.norm();
        if (n < 1e-9) continue;
        out.push_back({p, d / n});
    }
    return out;
}

struct Neighbours {
    int best = -1;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
};

Neighbours nearest(const Eigen::VectorXd& q, const std::vector<Feature>& pool) {
    Neighbours nb;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double d = (pool[i].descriptor - q).norm();
        if (d < nb.d1) {
            nb.d2 = nb.d1;
            nb.d1 = d;
            nb.best = static_cast<int>(i);
        } else if (d < nb.d2) {
            nb.d2 = d;
        }
    }
    return nb;
}

bool passes_ratio(const Neighbours& nb, double ratio) {
    if (nb.best < 0) return false;
    if (!std::isfinite(nb.d2)) return true;
    return nb.d1 < ratio * nb.d2;
}

}  // namespace

std::vector<Eigen::Vector2i> detect_corners(const ImageRGB& image, const KeypointParams& params) {
    const GrayImage gray = to_gray(image);
    const int h = image.height;
    const int w = image.width;
    GrayImage ix = GrayImage::Zero(h, w);
    GrayImage iy = GrayImage::Zero(h, w);
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            ix(y, x) = (gray(y - 1, x + 1) + 2 * gray(y, x + 1) + gray(y + 1, x + 1)) -
                       (gray(y - 1, x - 1) + 2 * gray(y, x - 1) + gray(y + 1, x - 1));
            iy(y, x) = (gray(y + 1, x - 1) + 2 * gray(y + 1, x) + gray(y + 1, x + 1)) -
                       (gray(y - 1, x - 1) + 2 * gray(y - 1, x) + gray(y - 1, x + 1));
        }
    }
    const GrayImage sxx = blur(ix * ix, 1.0);
    const GrayImage syy = blur(iy * iy, 1.0);
    const GrayImage sxy = blur(ix * iy, 1.0);
    const GrayImage response = sxx * syy - sxy * sxy - params.harris_k * (sxx + syy).square();

    const int border = params.patch / 2 + 1;
    double peak = 0.0;
    for (int y = border; y < h - border; ++y) {
        for (int x = border; x < w - border; ++x) peak = std::max(peak, response(y, x));
    }
    const double threshold = std::max(params.min_response, params.response_frac * peak);

    struct Candidate {
        double r;
        int x;
        int y;
    };
    std::vector<Candidate> candidates;
    for (int y = border; y < h - border; ++y) {
        for (int x = border; x < w - border; ++x) {
            const double r = response(y, x);
            if (r <= threshold) continue;
            bool is_max = true;
            for (int dy = -params.nms_radius; dy <= params.nms_radius && is_max; ++dy) {
                for (int dx = -params.nms_radius; dx <= params.nms_radius; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int yy = y + dy;
                    const int xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double o = response(yy, xx);
                    // strict on earlier raster positions so plateaus keep exactly one point
                    if (o > r || (o == r && (dy < 0 || (dy == 0 && dx < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) candidates.push_back({r, x, y});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.r != b.r) return a.r > b.r;
        return std::pair(a.y, a.x) < std::pair(b.y, b.x);
    });
    if (static_cast<int>(candidates.size()) > params.max_corners) candidates.resize(params.max_corners);
    std::vector<Eigen::Vector2i> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.emplace_back(c.x, c.y);
    return out;
}

std::vector<KeypointMatch> match_keypoints(const ImageRGB& image_a, const ImageRGB& image_b,
                                           const KeypointParams& params) {
    const auto fa = describe(image_a, params);
    const auto fb = describe(image_b, params);
    std::vector<KeypointMatch> out;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const Neighbours ab = nearest(fa[i].descriptor, fb);
        if (!passes_ratio(ab, params.ratio)) continue;
        const Neighbours ba = nearest(fb[ab.best].descriptor, fa);
        if (ba.best != static_cast<int>(i) || !passes_ratio(ba, params.ratio)) continue;
        const auto& pa = fa[i].pos;
        const auto& pb = fb[ab.best].pos;
        out.push_back({Eigen::Vector2f(pa.x() + 0.5f, pa.y() + 0.5f), Eigen::Vector2f(pb.x() + 0.5f, pb.y() + 0.5f)});
    }
    std::sort(out.begin(), out.end(), [](const KeypointMatch& l, const KeypointMatch& r) {
        return std::tuple(l.a.y(), l.a.x(), l.b.y(), l.b.x()) < std::tuple(r.a.y(), r.a.x(), r.b.y(), r.b.x());
    });
    return out;
}

std::vector<KeypointMatch> detect_and_match_keypoints(const Dataset& ds, int view_a, int view_b,
                                                      const KeypointParams& params) {
    if (view_a < 0 || view_b < 0 || view_a >= ds.view_count() || view_b >= ds.view_count()) {
        throw ContractViolation("detect_and_match_keypoints: view index out of range");
    }
    if (ds.matches.contains(view_a, view_b)) return ds.matches.between(view_a, view_b);
    return match_keypoints(ds.views[view_a].rgb, ds.views[view_b].rgb, params);
}

KeypointMatchSet match_all_pairs(const Dataset& ds, int window, const KeypointParams& params, int threads) {
    std::vector<std::pair<int, int>> todo;
    for (int b = 0; b < ds.view_count(); ++b) {
        for (int a = 0; a < b; ++a) {
            if (window > 0 && b - a > window) continue;
            todo.emplace_back(a, b);
        }
    }
    std::vector<std::vector<KeypointMatch>> results(todo.size());
    parallel_for(todo.size(), threads, [&](std::size_t i) {
        results[i] = detect_and_match_keypoints(ds, todo[i].first, todo[i].second, params);
    });
    KeypointMatchSet out;
    for (std::size_t i = 0; i < todo.size(); ++i) out.set(todo[i].first, todo[i].second, std::move(results[i]));
    return out;
}

}  // namespace gridfield
