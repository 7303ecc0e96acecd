#pragma once

#include <vector>

#include "gridfield/types.hpp"

namespace gridfield {

/// One multi-view embedding stored in a grid cell (unit-normalised copy).
struct GridEntry {
    int view = 0;
    int local = 0;
    Eigen::VectorXf embedding;
};

struct GridCell {
    int object_id = 0;
    Vec3 center = Vec3::Constant(0.5);  // low-dim feature in (0,1)^3
    std::vector<GridEntry> entries;

    Vec3 scaled_center() const { return center * kFeatureScale; }
};

/// Semantic feature grid: K cells on a side^3 lattice in (0,1)^3.
struct GridLattice {
    int K = 0;
    int dim = kFeatureDim;
    int side = 0;
    double edge = 0.0;
    std::vector<GridCell> cells;

    /// Index of the assigned cell whose centre is closest to `f` (lowest id on ties).
    int nearest_cell(const Vec3& f) const;
};

/// Smallest s with s^d >= K, i.e. ceil(K^(1/d)) without floating-point rounding.
int lattice_side(int K, int d = kFeatureDim);

/// Row-major lattice coordinates of cell `o` (first axis slowest).
Eigen::Vector3i unrank_cell(int o, int side);

/// Lattice geometry for K objects; cell o gets the centre of the o-th lattice
/// cell. Entries are left empty.
GridLattice build_lattice(int K);

}  // namespace gridfield
