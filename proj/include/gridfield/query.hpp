#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "gridfield/lattice.hpp"
#include "gridfield/splat.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// Pairwise-softmax relevancy, min over canonical phrases:
/// min_i exp(img.q) / (exp(img.c_i) + exp(img.q)). Inputs are expected unit-norm.
template <typename DerivedImg, typename DerivedQuery>
double relevancy_score(const Eigen::MatrixBase<DerivedImg>& img, const Eigen::MatrixBase<DerivedQuery>& query,
                       const std::vector<Eigen::VectorXf>& canonical) {
    if (canonical.empty()) throw DomainError("relevancy_score: empty canonical set");
    if (img.size() != query.size()) throw DomainError("relevancy_score: length mismatch");
    const Eigen::VectorXd im = img.template cast<double>();
    const double q = im.dot(query.template cast<double>());
    double best = 1.0;
    for (const auto& c : canonical) {
        if (c.size() != im.size()) throw DomainError("relevancy_score: canonical length mismatch");
        // exp(q) / (exp(c) + exp(q)) == 1 / (1 + exp(c - q))
        best = std::min(best, 1.0 / (1.0 + std::exp(im.dot(c.cast<double>()) - q)));
    }
    return best;
}

/// Per-cell relevancy, aggregated over the cell's stored multi-view embeddings.
std::vector<double> score_grids(const GridLattice& lattice, const Eigen::VectorXf& query, const QueryConfig& config);

/// Row-major H x W distance map in the (0,255)-scaled feature space.
using DistanceMap = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TargetMask {
    DistanceMap distance;
    Bitmap mask;  // distance < tau_ac
};

TargetMask extract_target_mask(const FeatureMap& feature_map, const GridCell& cell, double tau_ac);

/// A trained field ready for querying.
struct FeatureField {
    GaussianCloud cloud;
    GridLattice lattice;  // cells carry their multi-view embeddings
    std::vector<Camera> cameras;
    int width = 0;
    int height = 0;
    RenderConfig render;
    std::vector<Eigen::VectorXf> canonical;
};

struct QueryInput {
    Eigen::VectorXf embedding;  // unit norm
    int view = 0;
    std::optional<Camera> camera;  // overrides `view` (never cached)
    QueryConfig config;
};

struct QueryTimings {
    double render_s = 0.0;
    double restore_s = 0.0;
    double mask_s = 0.0;
    bool cache_hit = false;
};

struct QueryResult {
    int view = -1;
    std::vector<double> scores;            // per grid cell
    std::vector<int> targets;              // selected cells, best first
    std::vector<DistanceMap> distances;    // one per target
    Bitmap mask;                           // union over targets
    QueryTimings timings;
};

/// Thread-safe query front end with a per-view feature-map cache.
class QueryEngine {
public:
    explicit QueryEngine(std::shared_ptr<const FeatureField> field);

    const FeatureField& field() const { return *field_; }

    /// Rendered map for a view; computed once, then shared by later queries.
    std::shared_ptr<const FeatureMap> feature_map(int view, bool* cache_hit = nullptr);
    void prime(int view, FeatureMap map);

    QueryResult query(const QueryInput& input);

private:
    std::shared_ptr<const FeatureField> field_;
    std::shared_mutex cache_mutex_;
    std::map<int, std::shared_ptr<const FeatureMap>> cache_;
};

/// Selects up to top_n cells by descending score (lowest id on ties),
/// dropping cells below the optional relevancy floor.
std::vector<int> select_targets(const std::vector<double>& scores, const QueryConfig& config);

}  // namespace gridfield
