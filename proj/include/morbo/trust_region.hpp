#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "morbo/observation.hpp"
#include "morbo/pareto.hpp"

namespace morbo::trust_region {

/// Marks an unbounded streak tolerance.
inline constexpr int kInfiniteStreak = std::numeric_limits<int>::max();

struct TRDefaults {
    double length_init = 0.8;
    double length_max = 1.6;
    double length_min = 0.01;
    int num_regions = 5;
    int tau_succ = kInfiniteStreak;
    /// Unset means max(10, ceil(d / 3)).
    std::optional<int> tau_fail;

    int tau_fail_for(Eigen::Index d) const;
};

enum class Status { active, terminated };

struct TrustRegion {
    int id = 0;
    Vector center;
    double length = 0.8;
    double length_min = 0.01;
    double length_max = 1.6;
    int success_count = 0;
    int failure_count = 0;
    int tau_succ = kInfiniteStreak;
    int tau_fail = 10;
    Status status = Status::active;

    bool active() const { return status == Status::active; }
    /// center +- L/2 clipped to the unit cube.
    Box bounds() const;
};

/// Fresh region of length L_init with zeroed counters.
TrustRegion make_trust_region(int id, Vector center, const TRDefaults& defaults);

/// Updates the streak counters with one batch outcome.
TrustRegion record_batch_outcome(TrustRegion tr, bool improved);

/// Applies the expansion / halving rules; a region whose length drops below
/// L_min is marked terminated.
TrustRegion adjust_length(TrustRegion tr);

/// Picks one center observation per requested region. A region passed as
/// nullopt chooses among all observations; a box restricts the choice to
/// observations inside it. Feasible Pareto points are ranked by hypervolume
/// contribution and handed out greedily in request order, each at most once
/// while unclaimed candidates remain. Returns observation indices.
IndexVector select_centers(std::span<const Observation> observations,
                           const pareto::ParetoState& state,
                           std::span<const std::optional<Box>> regions);

struct WindowOptions {
    std::size_t min_points = 0;  // N_m
    std::size_t max_points = 0;  // N_cap, 0 = unbounded
};

/// min(250, 2d).
std::size_t default_min_points(Eigen::Index d);

/// Indices (ascending) of the observations used to fit a region's models:
/// those within infinity-norm distance `half_width` of `center`, or the
/// `min_points` nearest by Euclidean distance when the cube holds fewer,
/// truncated to the `max_points` nearest.
IndexVector local_window(std::span<const Observation> observations, const Vector& center,
                         double half_width, const WindowOptions& options);

}  // namespace morbo::trust_region
