#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gridfield/eval.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// Oracle scene description. Objects are Gaussian shells laid out on a square
/// grid in the z = 0 plane, viewed by cameras on an arc in front of them.
struct SyntheticSceneSpec {
    int objects = 8;       // K_true
    int views = 5;         // T
    int width = 128;
    int height = 128;
    int dim = 32;          // embedding dimension D
    double noise = 0.0;    // per-component embedding noise sigma
    double match_dropout = 0.0;
    int gaussians_per_object = 3000;
    double object_radius = 0.42;
    double spacing = 1.0;
    double orbit_degrees = 40.0;   // azimuth span of the camera arc
    double elevation_degrees = 8.0;
    // A pixel is labelled with an object only when that object supplies at
    // least this share of full opacity there; mixed rim pixels stay background.
    double label_weight = 0.95;
    std::uint64_t seed = 0;

    void validate() const;
};

SyntheticSceneSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SyntheticSceneSpec& spec);

struct SyntheticScene {
    Dataset dataset;
    GaussianCloud cloud;                          // features reset to 0.5
    std::vector<int> gaussian_object;             // per Gaussian
    std::vector<std::vector<int>> mask_object;    // [view][local]
    GroundTruth truth;                            // per-pixel object labels
    std::vector<Eigen::VectorXf> prototypes;      // per object, unit norm
    std::vector<EvalQuery> queries;               // one per object
};

/// Deterministic in the spec (seed included). Throws DomainError naming the
/// object if some object is invisible in every view.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

/// Writes the dataset layout plus gaussians.bin, truth/labels/, truth/objects.json
/// (mask and Gaussian object ids) and queries.json.
void write_synthetic_scene(const std::filesystem::path& dir, const SyntheticScene& scene);

}  // namespace gridfield
