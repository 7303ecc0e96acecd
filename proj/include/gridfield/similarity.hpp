#pragma once

#include <algorithm>
#include <cmath>

#include "gridfield/types.hpp"

namespace gridfield {

/// Cosine similarity of two embeddings, evaluated in double precision.
template <typename DerivedA, typename DerivedB>
double similarity_clip(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    if (a.size() != b.size()) throw DomainError("similarity_clip: length mismatch");
    const Eigen::VectorXd ad = a.template cast<double>();
    const Eigen::VectorXd bd = b.template cast<double>();
    const double aa = ad.dot(ad);
    const double bb = bd.dot(bd);
    if (!(aa > 0.0) || !(bb > 0.0)) throw DomainError("similarity_clip: zero-norm embedding");
    // sqrt(x * x) == x in IEEE arithmetic, so self-similarity is exactly 1.
    return std::clamp(ad.dot(bd) / std::sqrt(aa * bb), -1.0, 1.0);
}

/// Bhattacharyya coefficient sum_b sqrt(p_b q_b) of two normalised histograms.
/// The sum is divided by sqrt(sum p * sum q), which is 1 up to rounding for
/// valid inputs and makes identical float32 histograms score exactly 1.
template <typename DerivedA, typename DerivedB>
double bhattacharyya_coefficient(const Eigen::MatrixBase<DerivedA>& p, const Eigen::MatrixBase<DerivedB>& q) {
    if (p.size() != q.size()) throw DomainError("bhattacharyya_coefficient: length mismatch");
    const Eigen::ArrayXd pd = p.template cast<double>().array();
    const Eigen::ArrayXd qd = q.template cast<double>().array();
    if ((pd < 0.0).any() || (qd < 0.0).any()) {
        throw DomainError("bhattacharyya_coefficient: negative bin");
    }
    const double sp = pd.sum();
    const double sq = qd.sum();
    if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6) {
        throw DomainError("bhattacharyya_coefficient: histogram is not normalised");
    }
    const Eigen::ArrayXd root = (pd * qd).sqrt();
    return std::min(1.0, root.sum() / std::sqrt(sp * sq));
}

inline double similarity_color(const ColorHistogram& a, const ColorHistogram& b) {
    return bhattacharyya_coefficient(a.bins, b.bins);
}

/// alpha * color + (1 - alpha) * clip, written so equal inputs come back unchanged.
inline double blend_similarity(double sim_color, double sim_clip, double alpha) {
    return sim_clip + alpha * (sim_color - sim_clip);
}

/// Hybrid mask similarity. With alpha == 0 the colour term is never evaluated.
double similarity_hybrid(const MaskRecord& a, const MaskRecord& b, const MatchParams& params);

}  // namespace gridfield
