#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridfield/types.hpp"

namespace gridfield {

/// One broken invariant. view/local are -1 when not applicable.
struct Violation {
    int view = -1;
    int local = -1;
    std::string code;
    std::string message;

    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

/// Checks every Dataset invariant. Empty report means valid.
ValidationReport validate_dataset(const Dataset& ds);

/// Reads the dataset directory layout. Throws FormatError on unreadable or
/// structurally inconsistent payloads; invariant violations are left for
/// validate_dataset. Missing histograms are recomputed from image and mask.
Dataset read_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

GaussianCloud read_gaussians(const std::filesystem::path& path);
void write_gaussians(const std::filesystem::path& path, const GaussianCloud& cloud);

/// Flat little-endian float32 vector file (query embeddings).
Eigen::VectorXf read_embedding(const std::filesystem::path& path);
void write_embedding(const std::filesystem::path& path, const Eigen::VectorXf& v);

}  // namespace gridfield
