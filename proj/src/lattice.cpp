#include "gridfield/lattice.hpp"

#include <limits>

namespace gridfield {

int lattice_side(int K, int d) {
    if (K < 1) throw DomainError("lattice needs at least one object");
    int s = 1;
    auto power = [d](long long base) {
        long long p = 1;
        for (int i = 0; i < d; ++i) p *= base;
        return p;
    };
    while (power(s) < K) ++s;
    return s;
}

Eigen::Vector3i unrank_cell(int o, int side) {
    return {o / (side * side), (o / side) % side, o % side};
}

GridLattice build_lattice(int K) {
    GridLattice lattice;
    lattice.K = K;
    lattice.side = lattice_side(K);
    lattice.edge = 1.0 / lattice.side;
    lattice.cells.resize(static_cast<std::size_t>(K));
    for (int o = 0; o < K; ++o) {
        const Eigen::Vector3i uvw = unrank_cell(o, lattice.side);
        lattice.cells[o].object_id = o;
        lattice.cells[o].center = (uvw.cast<double>().array() + 0.5) / lattice.side;
    }
    return lattice;
}

int GridLattice::nearest_cell(const Vec3& f) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : cells) {
        const double d = (c.center - f).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c.object_id;
        }
    }
    return best;
}

}  // namespace gridfield
