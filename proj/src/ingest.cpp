#include "gridfield/ingest.hpp"

#include <cmath>

#include "gridfield/parallel.hpp"

namespace gridfield {

double mask_iou(const Bitmap& a, const Bitmap& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractViolation("mask_iou: dimension mismatch");
    const auto inter = ((a != 0) && (b != 0)).count();
    const auto uni = ((a != 0) || (b != 0)).count();
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::vector<MaskRecord>> denoise_masks(const std::vector<std::vector<MaskRecord>>& masks, int width,
                                                   int height, const DenoiseParams& params,
                                                   std::vector<std::string>* warnings) {
    const double min_area = params.min_area_frac * static_cast<double>(width) * static_cast<double>(height);
    std::vector<std::vector<MaskRecord>> out(masks.size());
    for (std::size_t v = 0; v < masks.size(); ++v) {
        for (const auto& m : masks[v]) {
            if (static_cast<double>(m.area) < min_area) continue;
            bool duplicate = false;
            for (const auto& kept : out[v]) {
                if (mask_iou(kept.bitmap, m.bitmap) > params.dedup_iou) {
                    duplicate = true;
                    break;
                }
            }
            if (!duplicate) out[v].push_back(m);
        }
        if (out[v].empty() && warnings) {
            warnings->push_back("view " + std::to_string(v) + " has no masks after denoising");
        }
    }
    return out;
}

void denoise_dataset(Dataset& ds, const DenoiseParams& params, std::vector<std::string>* warnings) {
    ds.masks = denoise_masks(ds.masks, ds.meta.width, ds.meta.height, params, warnings);
}

ColorHistogram compute_color_histogram(const ImageRGB& image, const Bitmap& mask) {
    if (mask.rows() != image.height || mask.cols() != image.width) {
        throw ContractViolation("compute_color_histogram: mask and image dimensions differ");
    }
    Eigen::Matrix<double, ColorHistogram::kBins, 1> counts = Eigen::Matrix<double, ColorHistogram::kBins, 1>::Zero();
    long area = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!mask(y, x)) continue;
            const auto px = image.pixel(x, y);
            counts(ColorHistogram::bin_of(px(0), px(1), px(2))) += 1.0;
            ++area;
        }
    }
    if (area == 0) throw DomainError("compute_color_histogram: zero-area mask");
    ColorHistogram h;
    h.bins = (counts / static_cast<double>(area)).cast<float>();
    return h;
}

void ensure_histograms(Dataset& ds, int threads) {
    for (std::size_t v = 0; v < ds.masks.size(); ++v) {
        auto& list = ds.masks[v];
        const ImageRGB& image = ds.views[v].rgb;
        parallel_for(list.size(), threads, [&](std::size_t j) {
            auto& m = list[j];
            if (!m.histogram && m.area > 0) m.histogram = compute_color_histogram(image, m.bitmap);
        });
    }
}

}  // namespace gridfield
