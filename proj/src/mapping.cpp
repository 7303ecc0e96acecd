#include "gridfield/mapping.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "gridfield/similarity.hpp"

namespace gridfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool contains_point(const Bitmap& bitmap, const Eigen::Vector2f& p) {
    const int x = static_cast<int>(std::floor(p.x()));
    const int y = static_cast<int>(std::floor(p.y()));
    if (x < 0 || y < 0 || y >= bitmap.rows() || x >= bitmap.cols()) return false;
    return bitmap(y, x) != 0;
}

}  // namespace

std::string to_string(MatchKind kind) {
    switch (kind) {
        case MatchKind::Init: return "init";
        case MatchKind::Keypoint: return "keypoint";
        case MatchKind::Similarity: return "similarity";
        case MatchKind::New: return "new";
    }
    return "new";
}

MatchKind match_kind_from_string(const std::string& s) {
    if (s == "init") return MatchKind::Init;
    if (s == "keypoint") return MatchKind::Keypoint;
    if (s == "similarity") return MatchKind::Similarity;
    if (s == "new") return MatchKind::New;
    throw FormatError("unknown match kind '" + s + "'");
}

int MappingResult::idx_of(int view, int local) const {
    for (const auto& a : assignments) {
        if (a.view == view && a.local == local) return a.idx;
    }
    return -1;
}

Correspondence count_mask_correspondences(const MaskRecord& mask, const std::vector<const MaskRecord*>& prior,
                                          const KeypointMatchSet& matches) {
    Correspondence best;
    std::map<int, std::vector<KeypointMatch>> by_view;
    for (const MaskRecord* cand : prior) {
        if (cand->view == mask.view) continue;
        auto it = by_view.find(cand->view);
        if (it == by_view.end()) it = by_view.emplace(cand->view, matches.between(mask.view, cand->view)).first;
        int count = 0;
        for (const auto& m : it->second) {
            if (contains_point(mask.bitmap, m.a) && contains_point(cand->bitmap, m.b)) ++count;
        }
        if (best.best == nullptr || count > best.count ||
            (count == best.count && cand->key() < best.best->key())) {
            best = {cand, count};
        }
    }
    return best;
}

MappingResult cross_view_grid_mapping(const Dataset& ds, const MatchParams& params, const KeypointParams& keypoints) {
    params.validate();
    if (ds.mask_count() == 0) throw DomainError("nothing to map");

    MappingResult result;
    std::map<std::pair<int, int>, int> index;  // (view, local) -> idx
    std::vector<const MaskRecord*> accumulated;
    int K = 0;

    for (int i = 0; i < ds.view_count(); ++i) {
        const auto& view_masks = ds.masks[i];
        if (view_masks.empty()) continue;

        // Correspondences against prior views inside the window.
        KeypointMatchSet corr;
        std::vector<const MaskRecord*> prior_in_window;
        if (params.use_keypoints) {
            for (const MaskRecord* m : accumulated) {
                if (m->view == i) continue;
                if (params.window > 0 && i - m->view > params.window) continue;
                prior_in_window.push_back(m);
                if (!corr.contains(i, m->view)) corr.set(i, m->view, detect_and_match_keypoints(ds, i, m->view, keypoints));
            }
        }

        const bool first = accumulated.empty();
        for (const auto& mask : view_masks) {
            MaskAssignment a{mask.view, mask.local, 0, {}};
            if (first) {
                a.idx = K++;
                a.provenance.kind = MatchKind::Init;
            } else {
                bool assigned = false;
                if (params.use_keypoints && !prior_in_window.empty()) {
                    const Correspondence c = count_mask_correspondences(mask, prior_in_window, corr);
                    a.provenance.keypoints = c.count;
                    if (c.best && c.count >= params.tau_kp) {
                        a.idx = index.at(c.best->key());
                        a.provenance.kind = MatchKind::Keypoint;
                        a.provenance.partner = c.best->key();
                        assigned = true;
                    }
                }
                if (!assigned) {
                    const MaskRecord* best = nullptr;
                    double best_sim = -std::numeric_limits<double>::infinity();
                    for (const MaskRecord* cand : accumulated) {
                        const double s = similarity_hybrid(mask, *cand, params);
                        if (s > best_sim) {
                            best_sim = s;
                            best = cand;
                        }
                    }
                    a.provenance.similarity = best ? best_sim : 0.0;
                    if (best && best_sim >= params.theta) {
                        a.idx = index.at(best->key());
                        a.provenance.kind = MatchKind::Similarity;
                        a.provenance.partner = best->key();
                    } else {
                        a.idx = K++;
                        a.provenance.kind = MatchKind::New;
                    }
                }
            }
            index[mask.key()] = a.idx;
            result.assignments.push_back(std::move(a));
            accumulated.push_back(&mask);
        }
    }

    result.K = K;
    result.lattice = build_lattice(K);
    attach_embeddings(result, ds);
    return result;
}

double similarity_hybrid(const MaskRecord& a, const MaskRecord& b, const MatchParams& params) {
    const double clip = similarity_clip(a.embedding, b.embedding);
    if (params.alpha == 0.0) return clip;
    if (!a.histogram || !b.histogram) throw DomainError("similarity_hybrid: mask without colour histogram");
    return blend_similarity(similarity_color(*a.histogram, *b.histogram), clip, params.alpha);
}

void attach_embeddings(MappingResult& mapping, const Dataset& ds) {
    for (auto& cell : mapping.lattice.cells) cell.entries.clear();
    for (const auto& a : mapping.assignments) {
        const MaskRecord* m = ds.find_mask(a.view, a.local);
        if (!m) throw ContractViolation("mapping references a mask missing from the dataset");
        if (a.idx < 0 || a.idx >= mapping.lattice.K) throw ContractViolation("mapping index outside the lattice");
        const float n = m->embedding.norm();
        if (!(n > 0.0f)) throw DomainError("zero-norm embedding in mapped mask");
        mapping.lattice.cells[a.idx].entries.push_back({a.view, a.local, m->embedding / n});
    }
}

std::vector<BakedView> bake_feature_maps(const Dataset& ds, const MappingResult& mapping) {
    const int w = ds.meta.width;
    const int h = ds.meta.height;
    std::vector<BakedView> out(static_cast<std::size_t>(ds.view_count()));
    for (int t = 0; t < ds.view_count(); ++t) {
        BakedView& baked = out[t];
        baked.target = FeatureMap(w, h, t);
        baked.coverage = Bitmap::Zero(h, w);
        Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> owner_area =
            Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(h, w,
                                                                                   std::numeric_limits<long>::max());
        for (const auto& m : ds.masks[t]) {
            const int idx = mapping.idx_of(m.view, m.local);
            if (idx < 0) continue;
            const Vec3& center = mapping.lattice.cells[idx].center;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!m.bitmap(y, x) || m.area >= owner_area(y, x)) continue;
                    owner_area(y, x) = m.area;
                    baked.coverage(y, x) = 1;
                    baked.target.data.row(static_cast<Eigen::Index>(y) * w + x) = center.transpose();
                }
            }
        }
    }
    return out;
}

void write_mapping(const fs::path& path, const MappingResult& mapping, const fs::path& dataset_dir,
                   const MatchParams& params) {
    json cells = json::array();
    for (const auto& c : mapping.lattice.cells) {
        cells.push_back({{"object_id", c.object_id}, {"center", {c.center.x(), c.center.y(), c.center.z()}}});
    }
    json assignments = json::array();
    for (const auto& a : mapping.assignments) {
        json p = {{"kind", to_string(a.provenance.kind)},
                  {"keypoints", a.provenance.keypoints},
                  {"similarity", a.provenance.similarity}};
        p["partner"] = a.provenance.partner ? json::array({a.provenance.partner->first, a.provenance.partner->second})
                                            : json(nullptr);
        assignments.push_back({{"view", a.view}, {"local", a.local}, {"idx", a.idx}, {"provenance", p}});
    }
    const json j = {
        {"dataset", fs::absolute(dataset_dir).lexically_normal().string()},
        {"K", mapping.K},
        {"lattice", {{"dim", mapping.lattice.dim}, {"side", mapping.lattice.side}, {"edge", mapping.lattice.edge},
                     {"cells", cells}}},
        {"params", {{"tau", params.tau_kp}, {"theta", params.theta}, {"alpha", params.alpha},
                    {"window", params.window}, {"keypoints", params.use_keypoints}}},
        {"assignments", assignments},
    };
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

LoadedMapping read_mapping(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    LoadedMapping loaded;
    try {
        const json j = json::parse(in);
        loaded.dataset_dir = j.at("dataset").get<std::string>();
        auto& m = loaded.mapping;
        m.K = j.at("K").get<int>();
        m.lattice = build_lattice(m.K);
        for (const auto& a : j.at("assignments")) {
            MaskAssignment rec;
            rec.view = a.at("view").get<int>();
            rec.local = a.at("local").get<int>();
            rec.idx = a.at("idx").get<int>();
            const auto& p = a.at("provenance");
            rec.provenance.kind = match_kind_from_string(p.at("kind").get<std::string>());
            rec.provenance.keypoints = p.at("keypoints").get<int>();
            rec.provenance.similarity = p.at("similarity").get<double>();
            if (!p.at("partner").is_null()) {
                rec.provenance.partner = std::pair(p.at("partner")[0].get<int>(), p.at("partner")[1].get<int>());
            }
            if (rec.idx < 0 || rec.idx >= m.K) throw FormatError(path.string() + ": index outside 0..K-1");
            m.assignments.push_back(rec);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return loaded;
}

}  // namespace gridfield
