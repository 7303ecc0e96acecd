#include "gridfield/types.hpp"

#include <algorithm>
#include <cmath>

namespace gridfield {

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, double cx,
                       double cy, double near) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 rot;
    rot.row(0) = right.transpose();
    rot.row(1) = down.transpose();
    rot.row(2) = forward.transpose();
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.near = near;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = rot;
    cam.world_to_camera.topRightCorner<3, 1>() = -rot * eye;
    return cam;
}

int ColorHistogram::bin_of(float r, float g, float b) {
    auto q = [](float v) {
        return std::clamp(static_cast<int>(std::floor(v * kBinsPerChannel)), 0, kBinsPerChannel - 1);
    };
    return (q(r) * kBinsPerChannel + q(g)) * kBinsPerChannel + q(b);
}

long count_area(const Bitmap& bitmap) { return static_cast<long>((bitmap != 0).count()); }

bool KeypointMatchSet::contains(int view_a, int view_b) const {
    return pairs.count({std::min(view_a, view_b), std::max(view_a, view_b)}) > 0;
}

std::vector<KeypointMatch> KeypointMatchSet::between(int view_a, int view_b) const {
    const auto it = pairs.find({std::min(view_a, view_b), std::max(view_a, view_b)});
    if (it == pairs.end()) return {};
    if (view_a <= view_b) return it->second;
    std::vector<KeypointMatch> out;
    out.reserve(it->second.size());
    for (const auto& m : it->second) out.push_back(m.swapped());
    return out;
}

void KeypointMatchSet::set(int view_a, int view_b, std::vector<KeypointMatch> matches) {
    if (view_a > view_b) {
        for (auto& m : matches) m = m.swapped();
        std::swap(view_a, view_b);
    }
    pairs[{view_a, view_b}] = std::move(matches);
}

std::size_t KeypointMatchSet::total() const {
    std::size_t n = 0;
    for (const auto& [key, list] : pairs) n += list.size();
    return n;
}

std::size_t Dataset::mask_count() const {
    std::size_t n = 0;
    for (const auto& v : masks) n += v.size();
    return n;
}

const MaskRecord* Dataset::find_mask(int view, int local) const {
    if (view < 0 || view >= static_cast<int>(masks.size())) return nullptr;
    for (const auto& m : masks[view]) {
        if (m.local == local) return &m;
    }
    return nullptr;
}

void GaussianCloud::resize(Eigen::Index n) {
    positions.setZero(n, 3);
    scales.setOnes(n, 3);
    rotations.setZero(n, 4);
    rotations.col(0).setOnes();
    opacities.setConstant(n, 0.5);
    features.setConstant(n, 3, 0.5);
}

void MatchParams::validate() const {
    if (tau_kp < 1) throw DomainError("tau_kp must be >= 1");
    if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("theta must lie in (0,1]");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
    if (window < 0) throw DomainError("window must be >= 0");
}

void QueryConfig::validate() const {
    if (!(tau_ac > 0.0)) throw DomainError("tau_ac must be positive");
    if (canonical.empty()) throw DomainError("canonical phrase set is empty");
    if (top_n < 1) throw DomainError("top_n must be >= 1");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    if (iterations < 0) throw DomainError("iterations must be >= 0");
    if (!(step_size > 0.0)) throw DomainError("step_size must be positive");
}

void RenderConfig::validate() const {
    if (tile < 1) throw DomainError("tile must be >= 1");
    if (!(alpha_cutoff > 0.0 && alpha_cutoff < 1.0)) throw DomainError("alpha_cutoff must lie in (0,1)");
    if (!(dilation >= 0.0)) throw DomainError("dilation must be >= 0");
}

}  // namespace gridfield
