#include "gridfield/query.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <mutex>
#include <numeric>

namespace gridfield {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<double> score_grids(const GridLattice& lattice, const Eigen::VectorXf& query, const QueryConfig& config) {
    if (lattice.cells.empty()) throw DomainError("score_grids: empty lattice");
    std::vector<double> scores(lattice.cells.size());
    for (std::size_t i = 0; i < lattice.cells.size(); ++i) {
        const auto& cell = lattice.cells[i];
        if (cell.entries.empty()) throw ContractViolation("score_grids: grid cell without stored embeddings");
        double agg = 0.0;
        for (const auto& e : cell.entries) {
            const double s = relevancy_score(e.embedding, query, config.canonical);
            agg = config.aggregation == Aggregation::Max ? std::max(agg, s) : agg + s;
        }
        if (config.aggregation == Aggregation::Mean) agg /= static_cast<double>(cell.entries.size());
        scores[i] = agg;
    }
    return scores;
}

std::vector<int> select_targets(const std::vector<double>& scores, const QueryConfig& config) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<int> out;
    for (int id : order) {
        if (static_cast<int>(out.size()) >= config.top_n) break;
        if (config.relevancy_floor && scores[id] < *config.relevancy_floor) break;
        out.push_back(id);
    }
    return out;
}

TargetMask extract_target_mask(const FeatureMap& feature_map, const GridCell& cell, double tau_ac) {
    const Vec3 center = cell.scaled_center();
    TargetMask out;
    out.distance.resize(feature_map.height, feature_map.width);
    out.mask.resize(feature_map.height, feature_map.width);
    for (int y = 0; y < feature_map.height; ++y) {
        for (int x = 0; x < feature_map.width; ++x) {
            const auto f = feature_map.data.row(static_cast<Eigen::Index>(y) * feature_map.width + x);
            const double d0 = f(0) * kFeatureScale - center.x();
            const double d1 = f(1) * kFeatureScale - center.y();
            const double d2 = f(2) * kFeatureScale - center.z();
            const double d = std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
            out.distance(y, x) = d;
            out.mask(y, x) = d < tau_ac ? 1 : 0;
        }
    }
    return out;
}

QueryEngine::QueryEngine(std::shared_ptr<const FeatureField> field) : field_(std::move(field)) {
    if (!field_) throw ContractViolation("QueryEngine: null field");
}

std::shared_ptr<const FeatureMap> QueryEngine::feature_map(int view, bool* cache_hit) {
    {
        std::shared_lock lock(cache_mutex_);
        const auto it = cache_.find(view);
        if (it != cache_.end()) {
            if (cache_hit) *cache_hit = true;
            return it->second;
        }
    }
    if (view < 0 || view >= static_cast<int>(field_->cameras.size())) {
        throw std::out_of_range("unknown view id " + std::to_string(view));
    }
    auto map = std::make_shared<const FeatureMap>(
        render_feature_map(field_->cloud, field_->cameras[view], field_->width, field_->height, field_->render, view));
    std::unique_lock lock(cache_mutex_);
    const auto [it, inserted] = cache_.emplace(view, std::move(map));
    if (cache_hit) *cache_hit = !inserted;
    return it->second;
}

void QueryEngine::prime(int view, FeatureMap map) {
    std::unique_lock lock(cache_mutex_);
    cache_[view] = std::make_shared<const FeatureMap>(std::move(map));
}

QueryResult QueryEngine::query(const QueryInput& input) {
    QueryConfig config = input.config;
    if (config.canonical.empty()) config.canonical = field_->canonical;
    config.validate();
    if (std::abs(input.embedding.cast<double>().norm() - 1.0) > 1e-6) {
        throw DomainError("query embedding must be unit-normalised");
    }

    QueryResult result;
    result.view = input.view;

    auto start = std::chrono::steady_clock::now();
    std::shared_ptr<const FeatureMap> map;
    if (input.camera) {
        map = std::make_shared<const FeatureMap>(
            render_feature_map(field_->cloud, *input.camera, field_->width, field_->height, field_->render, -1));
        result.timings.render_s = seconds_since(start);
    } else {
        bool hit = false;
        map = feature_map(input.view, &hit);
        result.timings.cache_hit = hit;
        result.timings.render_s = hit ? 0.0 : seconds_since(start);
    }

    start = std::chrono::steady_clock::now();
    result.scores = score_grids(field_->lattice, input.embedding, config);
    result.targets = select_targets(result.scores, config);
    result.timings.restore_s = seconds_since(start);

    start = std::chrono::steady_clock::now();
    result.mask = Bitmap::Zero(map->height, map->width);
    for (int id : result.targets) {
        TargetMask t = extract_target_mask(*map, field_->lattice.cells[id], config.tau_ac);
        result.mask = result.mask.max(t.mask);
        result.distances.push_back(std::move(t.distance));
    }
    result.timings.mask_s = seconds_since(start);
    return result;
}

}  // namespace gridfield
