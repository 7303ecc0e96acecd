#pragma once

#include <string>
#include <vector>

#include "gridfield/types.hpp"

namespace gridfield {

struct DenoiseParams {
    double min_area_frac = 0.001;
    double dedup_iou = 0.9;
};

/// Intersection over union of two equally sized bitmaps. Two empty masks give 1.
double mask_iou(const Bitmap& a, const Bitmap& b);

/// Drops masks smaller than min_area_frac * width * height, then collapses
/// same-view pairs with IoU > dedup_iou onto the lower local index. Views that
/// lose every mask are kept empty and reported in `warnings`.
std::vector<std::vector<MaskRecord>> denoise_masks(const std::vector<std::vector<MaskRecord>>& masks, int width,
                                                   int height, const DenoiseParams& params,
                                                   std::vector<std::string>* warnings = nullptr);

/// Convenience: denoise `ds.masks` in place.
void denoise_dataset(Dataset& ds, const DenoiseParams& params, std::vector<std::string>* warnings = nullptr);

/// 8x8x8 joint histogram over masked pixels, L1-normalised.
ColorHistogram compute_color_histogram(const ImageRGB& image, const Bitmap& mask);

/// Fills missing histograms (masks with zero area are left without one).
void ensure_histograms(Dataset& ds, int threads = 1);

struct KeypointParams {
    double harris_k = 0.04;
    double response_frac = 0.01;  // relative to the strongest response in the image
    double min_response = 1e-10;
    int max_corners = 400;
    int nms_radius = 2;
    int patch = 11;
    double ratio = 0.75;
};

/// Harris corners as integer pixel positions, strongest first.
std::vector<Eigen::Vector2i> detect_corners(const ImageRGB& image, const KeypointParams& params = {});

/// Built-in fallback matcher: Harris corners, normalised patch descriptors,
/// nearest neighbour with ratio test in both directions plus mutual check.
/// Returns points at pixel centres, `.a` in view_a.
std::vector<KeypointMatch> match_keypoints(const ImageRGB& image_a, const ImageRGB& image_b,
                                           const KeypointParams& params = {});

/// Matches for a view pair: dataset-supplied matches verbatim when present,
/// otherwise the built-in matcher.
std::vector<KeypointMatch> detect_and_match_keypoints(const Dataset& ds, int view_a, int view_b,
                                                      const KeypointParams& params = {});

/// Completes `ds.matches` for every pair (a < b) with b - a <= window (0 = all).
KeypointMatchSet match_all_pairs(const Dataset& ds, int window, const KeypointParams& params = {}, int threads = 1);

}  // namespace gridfield
