#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridfield/ingest.hpp"
#include "gridfield/lattice.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// How a mask obtained its object index during the sweep.
enum class MatchKind { Init, Keypoint, Similarity, New };

std::string to_string(MatchKind kind);
MatchKind match_kind_from_string(const std::string& s);

struct Provenance {
    MatchKind kind = MatchKind::New;
    std::optional<std::pair<int, int>> partner;  // (view, local) of the mask it inherited from
    int keypoints = 0;                           // best correspondence count
    double similarity = 0.0;                     // best hybrid similarity (if evaluated)
};

struct MaskAssignment {
    int view = 0;
    int local = 0;
    int idx = 0;
    Provenance provenance;
};

struct MappingResult {
    int K = 0;
    std::vector<MaskAssignment> assignments;  // sweep order == (view, local) order
    GridLattice lattice;

    /// Object index of mask (view, local), or -1.
    int idx_of(int view, int local) const;
};

struct Correspondence {
    const MaskRecord* best = nullptr;
    int count = 0;
};

/// Counts, for every candidate prior mask, the matches whose endpoint in
/// `mask.view` falls inside `mask` and whose other endpoint falls inside the
/// candidate. Highest count wins; ties go to the lowest (view, local).
Correspondence count_mask_correspondences(const MaskRecord& mask, const std::vector<const MaskRecord*>& prior,
                                          const KeypointMatchSet& matches);

/// Sequential cross-view grid mapping. Masks are visited in dataset order;
/// each inherits an index from keypoint correspondence (count >= tau_kp),
/// else from the most similar accumulated mask (hybrid similarity >= theta),
/// else opens a new index. The lattice is laid out once K is final.
/// Missing view-pair matches are computed with the built-in matcher.
MappingResult cross_view_grid_mapping(const Dataset& ds, const MatchParams& params,
                                      const KeypointParams& keypoints = {});

/// Fills lattice cell entries with unit-normalised embeddings of their masks.
void attach_embeddings(MappingResult& mapping, const Dataset& ds);

struct BakedView {
    FeatureMap target;
    Bitmap coverage;
};

/// Pixel-aligned supervision: each covered pixel takes the centre of the
/// smallest covering mask's object; uncovered pixels stay (0,0,0).
std::vector<BakedView> bake_feature_maps(const Dataset& ds, const MappingResult& mapping);

void write_mapping(const std::filesystem::path& path, const MappingResult& mapping,
                   const std::filesystem::path& dataset_dir, const MatchParams& params);

struct LoadedMapping {
    MappingResult mapping;
    std::filesystem::path dataset_dir;
};

/// Reads mapping.json. Cell entries are empty until attach_embeddings runs.
LoadedMapping read_mapping(const std::filesystem::path& path);

}  // namespace gridfield
