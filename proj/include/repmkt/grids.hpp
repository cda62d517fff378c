#pragma once

#include "repmkt/types.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace repmkt {

/// An ordered grid of rating levels. A single point is legal (the no-rating
/// counterfactual); everything else requires at least two.
struct RatingGrid {
    std::vector<double> points;
    double r_min = 0.0;
    double r_max = 5.0;

    static RatingGrid linspace(double lo, double hi, int n);

    int size() const { return static_cast<int>(points.size()); }

    /// Index of the grid point nearest to r (ties resolve downward).
    int snap(double r) const;

    void validate(bool allow_single_point = true) const;
};

/// Contiguous half-open sales-count intervals; the last is unbounded above.
struct SalesGrid {
    struct Bucket {
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity(); // exclusive
    };
    std::vector<Bucket> buckets;

    static SalesGrid from_edges(const std::vector<double>& edges);
    static SalesGrid default_grid();

    int size() const { return static_cast<int>(buckets.size()); }
    void validate() const;
};

/// The public state space: lexicographic enumeration of (rating, bucket)
/// pairs with rating-major index order, so the product transition kernel is
/// kron(rating_kernel, sales_kernel). Entry is at (r_max, first bucket).
struct StateSpace {
    RatingGrid rating_grid;
    SalesGrid sales_grid;

    StateSpace() = default;
    StateSpace(RatingGrid r, SalesGrid s);

    int n_ratings() const { return rating_grid.size(); }
    int n_buckets() const { return sales_grid.size(); }
    int n_states() const { return n_ratings() * n_buckets(); }

    int index(int rating_idx, int bucket_idx) const {
        return rating_idx * n_buckets() + bucket_idx;
    }
    int rating_index(int state) const { return state / n_buckets(); }
    int bucket_index(int state) const { return state % n_buckets(); }
    double rating_value(int state) const { return rating_grid.points[rating_index(state)]; }

    int entry_state() const { return index(n_ratings() - 1, 0); }

    static StateSpace default_space();
    static StateSpace estimation_space(); // coarse grid for NFXP runs
};

} // namespace repmkt
