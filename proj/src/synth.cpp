#include "gridfield/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "gridfield/dataset_io.hpp"
#include "gridfield/ingest.hpp"
#include "gridfield/splat.hpp"

namespace gridfield {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSceneSpec::validate() const {
    if (objects < 1) throw DomainError("synthetic spec: objects must be >= 1");
    if (objects > 254) throw DomainError("synthetic spec: at most 254 objects fit the label maps");
    if (views < 2) throw DomainError("synthetic spec: views must be >= 2");
    if (width < 8 || height < 8) throw DomainError("synthetic spec: image too small");
    if (dim < 1) throw DomainError("synthetic spec: dim must be >= 1");
    if (!(noise >= 0.0)) throw DomainError("synthetic spec: noise must be >= 0");
    if (!(match_dropout >= 0.0 && match_dropout <= 1.0)) throw DomainError("synthetic spec: match_dropout outside [0,1]");
    if (gaussians_per_object < 1) throw DomainError("synthetic spec: gaussians_per_object must be >= 1");
    if (!(object_radius > 0.0) || !(spacing > 0.0)) throw DomainError("synthetic spec: sizes must be positive");
    if (!(label_weight >= 0.5 && label_weight <= 1.0)) throw DomainError("synthetic spec: label_weight outside [0.5,1]");
}

SyntheticSceneSpec synth_spec_from_json(const json& j) {
    SyntheticSceneSpec s;
    try {
        s.objects = j.value("objects", s.objects);
        s.views = j.value("views", s.views);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.dim = j.value("dim", s.dim);
        s.noise = j.value("noise", s.noise);
        s.match_dropout = j.value("match_dropout", s.match_dropout);
        s.gaussians_per_object = j.value("gaussians_per_object", s.gaussians_per_object);
        s.object_radius = j.value("object_radius", s.object_radius);
        s.spacing = j.value("spacing", s.spacing);
        s.orbit_degrees = j.value("orbit_degrees", s.orbit_degrees);
        s.elevation_degrees = j.value("elevation_degrees", s.elevation_degrees);
        s.label_weight = j.value("label_weight", s.label_weight);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

json synth_spec_to_json(const SyntheticSceneSpec& s) {
    return {{"objects", s.objects},
            {"views", s.views},
            {"width", s.width},
            {"height", s.height},
            {"dim", s.dim},
            {"noise", s.noise},
            {"match_dropout", s.match_dropout},
            {"gaussians_per_object", s.gaussians_per_object},
            {"object_radius", s.object_radius},
            {"spacing", s.spacing},
            {"orbit_degrees", s.orbit_degrees},
            {"elevation_degrees", s.elevation_degrees},
            {"label_weight", s.label_weight},
            {"seed", s.seed}};
}

namespace {

Vec3 hue_color(double h) {
    // HSV with s = 0.8, v = 0.9
    const double v = 0.9;
    const double s = 0.8;
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    Vec3 rgb;
    if (hp < 1) rgb = {c, x, 0};
    else if (hp < 2) rgb = {x, c, 0};
    else if (hp < 3) rgb = {0, c, x};
    else if (hp < 4) rgb = {0, x, c};
    else if (hp < 5) rgb = {x, 0, c};
    else rgb = {c, 0, x};
    return rgb.array() + (v - c);
}

Eigen::VectorXf random_unit(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    if (v.norm() == 0.0) v(0) = 1.0;
    return (v / v.norm()).cast<float>();
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

float to_f32(double v) { return static_cast<float>(v); }

}  // namespace

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const int K = spec.objects;
    const int W = spec.width;
    const int H = spec.height;

    SyntheticScene scene;

    // Object layout and geometry.
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K))));
    const int rows = (K + cols - 1) / cols;
    std::vector<Vec3> centers(K);
    std::vector<Vec3> colors(K);
    for (int o = 0; o < K; ++o) {
        const int c = o % cols;
        const int r = o / cols;
        centers[o] = {(c - 0.5 * (cols - 1)) * spec.spacing, (r - 0.5 * (rows - 1)) * spec.spacing,
                      (uniform01(rng) - 0.5) * 0.2 * spec.spacing};
        colors[o] = hue_color(static_cast<double>(o) / K);
    }

    const int n = spec.gaussians_per_object;
    const double shell_spacing = std::sqrt(4.0 * std::numbers::pi * spec.object_radius * spec.object_radius / n);
    const double scale = 0.6 * shell_spacing;
    GaussianCloud& cloud = scene.cloud;
    cloud.resize(static_cast<Eigen::Index>(K) * n);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int o = 0; o < K; ++o) {
        for (int i = 0; i < n; ++i) {
            const Eigen::Index g = static_cast<Eigen::Index>(o) * n + i;
            const double y = n == 1 ? 0.0 : 1.0 - 2.0 * (i + 0.5) / n;
            const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
            const double phi = golden * i;
            const Vec3 p = centers[o] + spec.object_radius * Vec3(std::cos(phi) * rad, y, std::sin(phi) * rad);
            // Stored as f32 so the in-memory cloud equals its gaussians.bin round trip.
            for (int k = 0; k < 3; ++k) cloud.positions(g, k) = to_f32(p(k));
            cloud.scales.row(g).setConstant(to_f32(scale));
            cloud.opacities(g) = to_f32(0.9);
            scene.gaussian_object.push_back(o);
        }
    }
    cloud.features.setConstant(0.5);

    Pixels3<double> gaussian_colors(cloud.size(), 3);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(cloud.size(), K);
    for (Eigen::Index g = 0; g < cloud.size(); ++g) {
        gaussian_colors.row(g) = colors[scene.gaussian_object[g]].transpose();
        onehot(g, scene.gaussian_object[g]) = 1.0;
    }

    // Cameras on an arc in front of the grid, looking at the origin.
    const double half_extent = 0.5 * (std::max(cols, rows) - 1) * spec.spacing + spec.object_radius;
    const double fx = W;
    const double distance = half_extent / (0.45 * std::min(W, H) / fx) + 0.1 * spec.spacing;
    const Vec3 background(0.08, 0.08, 0.1);

    Dataset& ds = scene.dataset;
    ds.meta = {spec.dim, W, H, "synthetic"};
    ds.views.resize(spec.views);
    ds.masks.resize(spec.views);
    scene.truth.labels.resize(spec.views);
    scene.mask_object.resize(spec.views);

    for (int o = 0; o < K; ++o) scene.prototypes.push_back(random_unit(spec.dim, rng));
    for (int c = 0; c < 3; ++c) ds.canonical.push_back(random_unit(spec.dim, rng));

    RenderConfig render;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < spec.views; ++t) {
        const double span = spec.orbit_degrees * std::numbers::pi / 180.0;
        const double az = spec.views == 1 ? 0.0 : -0.5 * span + span * t / (spec.views - 1);
        const double el = spec.elevation_degrees * std::numbers::pi / 180.0 * ((t % 2 == 0) ? 1.0 : -1.0);
        const Vec3 eye = distance * Vec3(std::sin(az) * std::cos(el), std::sin(el), -std::cos(az) * std::cos(el));
        const Camera cam = Camera::look_at(eye, Vec3::Zero(), Vec3(0, -1, 0), fx, fx, 0.5 * W, 0.5 * H, 0.01);

        BlendWeights blend = compute_blend_weights(cloud, cam, W, H, render);
        const Pixels3<double> rgb_lin = blend.weights * gaussian_colors;
        const Eigen::MatrixXd per_object = blend.weights * onehot;

        PosedImage& view = ds.views[t];
        view.camera = cam;
        view.rgb = ImageRGB(W, H);
        png::Gray8 labels = png::Gray8::Zero(H, W);
        for (Eigen::Index p = 0; p < blend.weights.rows(); ++p) {
            const double cover = per_object.row(p).sum();
            const Vec3 c = rgb_lin.row(p).transpose() + (1.0 - cover) * background;
            for (int ch = 0; ch < 3; ++ch) {
                const long k = std::lround(std::clamp(c(ch), 0.0, 1.0) * 255.0);
                view.rgb.data(p, ch) = static_cast<float>(k) / 255.0f;
            }
            Eigen::Index best = 0;
            const double w = per_object.row(p).maxCoeff(&best);
            if (w >= spec.label_weight) labels(p / W, p % W) = static_cast<std::uint8_t>(best + 1);
        }
        scene.truth.labels[t] = labels;

        std::vector<int> present;
        for (int o = 0; o < K; ++o) {
            if ((labels == static_cast<std::uint8_t>(o + 1)).count() > 0) present.push_back(o);
        }
        for (int i = static_cast<int>(present.size()) - 1; i > 0; --i) {
            std::swap(present[i], present[rng() % static_cast<std::uint64_t>(i + 1)]);
        }
        for (int j = 0; j < static_cast<int>(present.size()); ++j) {
            const int o = present[j];
            MaskRecord m;
            m.view = t;
            m.local = j;
            m.bitmap = (labels == static_cast<std::uint8_t>(o + 1)).cast<std::uint8_t>();
            m.area = count_area(m.bitmap);
            Eigen::VectorXd e = scene.prototypes[o].cast<double>();
            if (spec.noise > 0.0) {
                for (int d = 0; d < spec.dim; ++d) e(d) += spec.noise * normal(rng);
            }
            m.embedding = (e / e.norm()).cast<float>();
            m.histogram = compute_color_histogram(view.rgb, m.bitmap);
            ds.masks[t].push_back(std::move(m));
            scene.mask_object[t].push_back(o);
        }
    }

    for (int o = 0; o < K; ++o) {
        bool seen = false;
        for (const auto& l : scene.truth.labels) seen = seen || (l == static_cast<std::uint8_t>(o + 1)).count() > 0;
        if (!seen) throw DomainError("synthetic scene: object " + std::to_string(o) + " is not visible in any view");
    }

    // Ground-truth correspondences: Gaussian centres facing both cameras.
    auto visible_at = [&](int t, Eigen::Index g) -> std::optional<Eigen::Vector2f> {
        const Camera& cam = ds.views[t].camera;
        const Vec3 pc = cam.to_camera(cloud.positions.row(g).transpose());
        if (pc.z() <= cam.near) return std::nullopt;
        const Vec2 px = cam.project(pc);
        const Eigen::Vector2f pf = px.cast<float>();
        const int x = static_cast<int>(std::floor(pf.x()));
        const int y = static_cast<int>(std::floor(pf.y()));
        if (x < 0 || y < 0 || x >= W || y >= H) return std::nullopt;
        if (scene.truth.labels[t](y, x) != scene.gaussian_object[g] + 1) return std::nullopt;
        // Front-facing shell points are unoccluded unless another object covers them,
        // which the label test above already rules out.
        const Vec3 eye = -cam.rotation().transpose() * cam.translation();
        const Vec3 normal = cloud.positions.row(g).transpose() - centers[scene.gaussian_object[g]];
        if (normal.dot(eye - cloud.positions.row(g).transpose()) <= 0.0) return std::nullopt;
        return pf;
    };

    for (int a = 0; a < spec.views; ++a) {
        std::vector<std::optional<Eigen::Vector2f>> va(static_cast<std::size_t>(cloud.size()));
        for (Eigen::Index g = 0; g < cloud.size(); ++g) va[g] = visible_at(a, g);
        for (int b = a + 1; b < spec.views; ++b) {
            std::vector<KeypointMatch> list;
            std::set<std::tuple<float, float, float, float>> seen;
            for (Eigen::Index g = 0; g < cloud.size(); ++g) {
                const double keep = uniform01(rng);
                if (!va[g]) continue;
                const auto pb = visible_at(b, g);
                if (!pb) continue;
                if (keep < spec.match_dropout) continue;
                if (!seen.insert({va[g]->x(), va[g]->y(), pb->x(), pb->y()}).second) continue;
                list.push_back({*va[g], *pb});
            }
            ds.matches.set(a, b, std::move(list));
        }
    }

    // One query per object, referenced in the view where it is largest.
    for (int o = 0; o < K; ++o) {
        int best_view = 0;
        long best_area = -1;
        for (int t = 0; t < spec.views; ++t) {
            const long area = (scene.truth.labels[t] == static_cast<std::uint8_t>(o + 1)).count();
            if (area > best_area) {
                best_area = area;
                best_view = t;
            }
        }
        scene.queries.push_back({"object-" + std::to_string(o), scene.prototypes[o], best_view, o});
    }
    return scene;
}

void write_synthetic_scene(const fs::path& dir, const SyntheticScene& scene) {
    write_dataset(dir, scene.dataset);
    write_gaussians(dir / "gaussians.bin", scene.cloud);
    write_truth(dir / "truth", scene.truth);
    const json objects = {{"masks", scene.mask_object}, {"gaussians", scene.gaussian_object}};
    std::ofstream out(dir / "truth" / "objects.json");
    if (!out) throw FormatError("cannot write " + (dir / "truth" / "objects.json").string());
    out << objects.dump() << '\n';
    write_queries(dir / "queries.json", scene.queries);
}

}  // namespace gridfield
