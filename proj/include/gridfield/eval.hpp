#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridfield/ingest.hpp"
#include "gridfield/png_io.hpp"
#include "gridfield/query.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

struct MaskMetrics {
    double iou = 0.0;
    double accuracy = 0.0;
};

/// IoU (1 when both masks are empty) and pixel accuracy.
MaskMetrics mask_metrics(const Bitmap& pred, const Bitmap& truth);

/// Inclusive-exclusive pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

PixelBox bounding_box(const Bitmap& mask);

/// Hit iff the minimum-distance pixel of the first target grid lies in the box
/// (ties go to the first pixel in row-major order).
bool localization_hit(const QueryResult& result, const PixelBox& truth_box);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// A query with its ground truth reference: object `object` seen in `view`.
struct EvalQuery {
    std::string name;
    Eigen::VectorXf embedding;
    int view = 0;
    int object = 0;
};

/// Per-view label maps: 0 = background, o + 1 = object o.
struct GroundTruth {
    std::vector<png::Gray8> labels;

    std::optional<Bitmap> object_mask(int view, int object) const;
};

struct QueryEval {
    std::string name;
    int view = 0;
    double iou = 0.0;
    double accuracy = 0.0;
    bool hit = false;
    double seconds = 0.0;
};

struct Ablation {
    bool keypoints = true;
    bool color = true;
};

struct EvalReport {
    std::vector<QueryEval> queries;
    std::vector<std::string> skipped;
    double miou = 0.0;
    double macc = 0.0;
    double mtime = 0.0;
    double localization = 0.0;
    Ablation ablation;
};

EvalReport evaluate_queries(QueryEngine& engine, const std::vector<EvalQuery>& queries, const GroundTruth& truth,
                            const QueryConfig& config);

struct SuiteConfig {
    DenoiseParams denoise;
    MatchParams match;
    TrainConfig train;
    RenderConfig render;
    QueryConfig query;
};

/// Re-maps, re-bakes and re-trains under the ablation switches (keypoints off
/// skips the correspondence branch, colour off forces alpha = 0), then
/// evaluates every query.
EvalReport run_suite(const Dataset& ds, const GaussianCloud& initial, const std::vector<EvalQuery>& queries,
                     const GroundTruth& truth, const Ablation& ablation, const SuiteConfig& config);

nlohmann::json report_to_json(const EvalReport& report);

/// Query list JSON: [{"name", "embedding" (path relative to the file), "view", "object"}].
std::vector<EvalQuery> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<EvalQuery>& queries);

/// Reads `labels/{t:04}.png` for t in [0, views).
GroundTruth read_truth(const std::filesystem::path& dir, int views);
void write_truth(const std::filesystem::path& dir, const GroundTruth& truth);

}  // namespace gridfield
