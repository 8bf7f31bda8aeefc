#pragma once

#include <cstdint>
#include <span>

#include "morbo/trust_region.hpp"

namespace morbo::candidates {

/// Rows `start` .. `start + n - 1` of a scrambled Sobol sequence in [0,1)^d.
/// Row 0 of the unscrambled sequence is the origin. Scrambling is a random
/// lower-triangular linear matrix scramble plus a digital shift per
/// dimension, both drawn from `seed`. Supports d <= 3667.
Matrix sobol(std::size_t n, Eigen::Index d, std::uint64_t seed, std::size_t start = 0);

struct PerturbSchedule {
    long n0 = 1;
    long nf = 2;
    Eigen::Index d = 1;
    /// p0 = min(scale / d, 1).
    double scale = 20.0;

    double p0() const;
    long budget() const { return nf - n0; }  // b
};

/// p0 (1 - 0.5 log n' / log b) with n' = min(max(n - n0, 1), b).
double perturb_prob(long n, const PerturbSchedule& sched);

/// Discrete candidates inside `tr`'s box. Each row starts from a base point
/// drawn uniformly (the region's center when `base_points` is empty) and
/// replaces every coordinate with probability `p` by a scrambled Sobol value
/// in the box; at least one coordinate is always replaced.
Matrix gen_candidates(const trust_region::TrustRegion& tr, std::span<const Vector> base_points,
                      std::size_t r, double p, std::uint64_t seed);

}  // namespace morbo::candidates
