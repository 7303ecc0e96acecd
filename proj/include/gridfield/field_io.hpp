#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "gridfield/mapping.hpp"
#include "gridfield/query.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// Sidecar metadata stored next to field.bin as `<field>.json`.
struct FieldSidecar {
    std::filesystem::path dataset_dir;
    TrainConfig train;
    RenderConfig render;
    std::vector<double> loss_history;
};

std::filesystem::path sidecar_path(const std::filesystem::path& field_path);

/// field.bin uses the gaussians.bin record layout with trained features.
void write_field(const std::filesystem::path& field_path, const GaussianCloud& cloud, const FieldSidecar& sidecar);
FieldSidecar read_sidecar(const std::filesystem::path& field_path);

/// Assembles a queryable field from field.bin, mapping.json and the dataset the
/// mapping was computed on (`dataset_override` replaces the recorded path).
std::shared_ptr<FeatureField> load_field(const std::filesystem::path& field_path,
                                         const std::filesystem::path& mapping_path,
                                         const std::optional<std::filesystem::path>& dataset_override = std::nullopt,
                                         Dataset* dataset_out = nullptr);

/// Builds a field in memory from already loaded pieces.
std::shared_ptr<FeatureField> make_field(const GaussianCloud& cloud, const MappingResult& mapping, const Dataset& ds,
                                         const RenderConfig& render = {});

}  // namespace gridfield
