#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gridfield/errors.hpp"

namespace gridfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// H x W boolean image, row-major (row index = y).
using Bitmap = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Pixel-major three-channel buffer: row `y * width + x` holds one pixel.
template <typename Scalar>
using Pixels3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Low-dimensional feature dimension. The lattice math is general in d but
/// the rest of the pipeline works in three components.
inline constexpr int kFeatureDim = 3;

/// Scale between the unit feature space and the (0,255) space used for the
/// activation threshold and visualisation.
inline constexpr double kFeatureScale = 255.0;

struct ImageRGB {
    int width = 0;
    int height = 0;
    Pixels3<float> data;  // values in [0,1]

    ImageRGB() = default;
    ImageRGB(int w, int h) : width(w), height(h), data(Pixels3<float>::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}

    auto pixel(int x, int y) const { return data.row(static_cast<Eigen::Index>(y) * width + x); }
    auto pixel(int x, int y) { return data.row(static_cast<Eigen::Index>(y) * width + x); }
};

/// Pinhole camera with a rigid world-to-camera transform. Camera looks down +z.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat4 world_to_camera = Mat4::Identity();
    double near = 0.01;

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 to_camera(const Vec3& world) const { return rotation() * world + translation(); }
    Vec2 project(const Vec3& cam) const { return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy}; }

    /// Camera at `eye` looking at `target`, y pointing down in the image.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, double cx,
                          double cy, double near = 0.01);
};

struct PosedImage {
    ImageRGB rgb;
    Camera camera;
};

/// 8x8x8 joint RGB histogram, L1-normalised. Bins are stored as 32-bit floats,
/// matching the on-disk layout.
struct ColorHistogram {
    static constexpr int kBinsPerChannel = 8;
    static constexpr int kBins = kBinsPerChannel * kBinsPerChannel * kBinsPerChannel;
    using Bins = Eigen::Matrix<float, kBins, 1>;

    Bins bins = Bins::Zero();

    static int bin_of(float r, float g, float b);
};

struct MaskRecord {
    int view = 0;
    int local = 0;
    Bitmap bitmap;
    long area = 0;
    Eigen::VectorXf embedding;
    std::optional<ColorHistogram> histogram;

    /// (view, local) ordering key used for every deterministic tie-break.
    std::pair<int, int> key() const { return {view, local}; }
};

/// Recounts `area` from the bitmap.
long count_area(const Bitmap& bitmap);

struct KeypointMatch {
    Eigen::Vector2f a;
    Eigen::Vector2f b;

    KeypointMatch swapped() const { return {b, a}; }
    bool operator==(const KeypointMatch&) const = default;
};

/// Keypoint correspondences keyed by ordered view pair (first < second).
struct KeypointMatchSet {
    std::map<std::pair<int, int>, std::vector<KeypointMatch>> pairs;

    bool contains(int view_a, int view_b) const;
    /// Matches oriented so that `.a` lies in view_a; empty if the pair is absent.
    std::vector<KeypointMatch> between(int view_a, int view_b) const;
    void set(int view_a, int view_b, std::vector<KeypointMatch> matches);
    std::size_t total() const;
};

struct DatasetMeta {
    int dim = 0;  // embedding dimension D
    int width = 0;
    int height = 0;
    std::string source;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<PosedImage> views;
    std::vector<std::vector<MaskRecord>> masks;  // per view, sorted by local index
    KeypointMatchSet matches;
    std::vector<Eigen::VectorXf> canonical;  // canonical phrase embeddings, may be empty

    int view_count() const { return static_cast<int>(views.size()); }
    std::size_t mask_count() const;
    const MaskRecord* find_mask(int view, int local) const;
};

/// Fixed 3D Gaussian geometry with trainable low-dim features.
struct GaussianCloud {
    Pixels3<double> positions;
    Pixels3<double> scales;
    Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> rotations;  // (w, x, y, z)
    Eigen::VectorXd opacities;
    Pixels3<double> features;

    Eigen::Index size() const { return positions.rows(); }
    void resize(Eigen::Index n);
    Eigen::Quaterniond rotation(Eigen::Index i) const {
        return {rotations(i, 0), rotations(i, 1), rotations(i, 2), rotations(i, 3)};
    }
};

/// Rendered or baked H x W x 3 low-dim feature image.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int view = -1;
    Pixels3<double> data;

    FeatureMap() = default;
    FeatureMap(int w, int h, int v = -1)
        : width(w), height(h), view(v), data(Pixels3<double>::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}

    Eigen::Index pixel_count() const { return data.rows(); }
};

struct MatchParams {
    int tau_kp = 4;
    double theta = 0.95;
    double alpha = 0.3;
    int window = 0;  // prior views scanned for correspondences; 0 = all
    bool use_keypoints = true;

    void validate() const;
};

enum class Aggregation { Max, Mean };

struct QueryConfig {
    double tau_ac = 5.0;
    std::vector<Eigen::VectorXf> canonical;
    int top_n = 1;
    Aggregation aggregation = Aggregation::Max;
    std::optional<double> relevancy_floor;

    void validate() const;
};

struct TrainConfig {
    double lambda = 0.2;
    int iterations = 2000;
    double step_size = 5e-3;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

struct RenderConfig {
    int tile = 16;
    double alpha_cutoff = 1.0 / 255.0;
    double dilation = 0.3;
    double transmittance_floor = 1e-4;
    double max_alpha = 0.99;
    int threads = 1;

    void validate() const;
};

/// Scales a unit-space feature into (0,255)^3. Throws DomainError outside (0,1).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> encode_feature(const Eigen::MatrixBase<Derived>& f) {
    using Scalar = typename Derived::Scalar;
    if (f.size() != 3) throw DomainError("encode_feature: expected 3 components");
    for (Eigen::Index i = 0; i < 3; ++i) {
        if (!(f(i) > Scalar(0) && f(i) < Scalar(1))) throw DomainError("encode_feature: component outside (0,1)");
    }
    return f * Scalar(kFeatureScale);
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> decode_feature(const Eigen::MatrixBase<Derived>& scaled) {
    using Scalar = typename Derived::Scalar;
    if (scaled.size() != 3) throw DomainError("decode_feature: expected 3 components");
    for (Eigen::Index i = 0; i < 3; ++i) {
        if (!(scaled(i) > Scalar(0) && scaled(i) < Scalar(kFeatureScale)))
            throw DomainError("decode_feature: component outside (0,255)");
    }
    return scaled / Scalar(kFeatureScale);
}

}  // namespace gridfield
