#include "repmkt/grids.hpp"

#include <algorithm>
#include <cmath>

namespace repmkt {

RatingGrid RatingGrid::linspace(double lo, double hi, int n) {
    if (n < 1) throw InvalidGridError("rating grid needs at least one point");
    RatingGrid g;
    g.r_min = lo;
    g.r_max = hi;
    g.points.resize(n);
    if (n == 1) {
        g.points[0] = hi;
        return g;
    }
    for (int i = 0; i < n; ++i) g.points[i] = lo + (hi - lo) * i / (n - 1);
    g.points.back() = hi;
    return g;
}

int RatingGrid::snap(double r) const {
    if (points.empty()) throw InvalidGridError("empty rating grid");
    int best = 0;
    double dist = std::abs(r - points[0]);
    for (int i = 1; i < size(); ++i) {
        const double d = std::abs(r - points[i]);
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return best;
}

void RatingGrid::validate(bool allow_single_point) const {
    if (points.empty()) throw InvalidGridError("rating grid has no points");
    if (!allow_single_point && points.size() < 2)
        throw InvalidGridError("rating grid needs at least two points");
    for (size_t i = 0; i + 1 < points.size(); ++i)
        if (!(points[i] < points[i + 1]))
            throw InvalidGridError("rating grid points must be strictly increasing");
    if (points.front() < r_min || points.back() > r_max)
        throw InvalidGridError("rating grid points must lie within bounds");
}

SalesGrid SalesGrid::from_edges(const std::vector<double>& edges) {
    SalesGrid g; // no edges: a single unbounded bucket
    g.buckets.reserve(edges.size());
    double lo = 0.0;
    for (double e : edges) {
        if (!(e > lo)) throw InvalidGridError("sales bucket edges must be increasing from 0");
        g.buckets.push_back({lo, e});
        lo = e;
    }
    g.buckets.push_back({lo, std::numeric_limits<double>::infinity()});
    return g;
}

SalesGrid SalesGrid::default_grid() {
    return from_edges({1, 5, 10, 50, 100, 500, 1000, 2000, 5000});
}

void SalesGrid::validate() const {
    if (buckets.empty()) throw InvalidGridError("sales grid has no buckets");
    if (buckets.front().lo != 0.0) throw InvalidGridError("first sales bucket must start at 0");
    for (size_t i = 0; i + 1 < buckets.size(); ++i) {
        if (!(buckets[i].lo < buckets[i].hi))
            throw InvalidGridError("sales buckets must be non-degenerate");
        if (buckets[i].hi != buckets[i + 1].lo)
            throw InvalidGridError("sales buckets must be contiguous");
    }
    if (!std::isinf(buckets.back().hi))
        throw InvalidGridError("last sales bucket must be unbounded");
}

StateSpace::StateSpace(RatingGrid r, SalesGrid s)
    : rating_grid(std::move(r)), sales_grid(std::move(s)) {
    rating_grid.validate();
    sales_grid.validate();
}

StateSpace StateSpace::default_space() {
    return StateSpace(RatingGrid::linspace(3.0, 5.0, 51), SalesGrid::default_grid());
}

StateSpace StateSpace::estimation_space() {
    return StateSpace(RatingGrid::linspace(3.0, 5.0, 21),
                      SalesGrid::from_edges({1, 10, 100, 1000, 5000}));
}

} // namespace repmkt
