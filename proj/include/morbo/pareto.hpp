#pragma once

#include <span>
#include <vector>

#include "morbo/types.hpp"

// Pareto utilities in the maximization convention: larger is better in every
// objective and the reference point bounds the measured region from below.
namespace morbo::pareto {

/// True iff `a` is no worse than `b` everywhere and strictly better somewhere.
bool dominates(const Vector& a, const Vector& b);

/// Indices of the points not dominated by any other point, ascending.
/// Exact duplicates do not dominate each other, so every copy is kept.
IndexVector pareto_filter(std::span<const Vector> points);

/// Exact dominated hypervolume of `front` above `ref`. Points that do not
/// strictly exceed `ref` in every coordinate add no volume. Supports 2 to 4
/// objectives (sweep for M=2, recursive slicing above that).
double hypervolume(std::span<const Vector> front, const Vector& ref);

/// Volume dominated by `point` alone that `base` does not already dominate.
double point_improvement(const Vector& point, std::span<const Vector> base,
                         const Vector& ref);

/// Exclusive contribution of each member of a nondominated front.
std::vector<double> hv_contributions(std::span<const Vector> front, const Vector& ref);

struct FrontMember {
    Vector values;
    std::size_t origin = 0;  // index of the observation the values came from
};

/// Global archive of nondominated objective vectors with a cached hypervolume.
class ParetoState {
public:
    explicit ParetoState(Vector ref_point);

    const Vector& ref_point() const { return ref_; }
    const std::vector<FrontMember>& front() const { return front_; }
    std::vector<Vector> front_values() const;
    double hypervolume() const { return hv_; }
    std::size_t num_objectives() const { return static_cast<std::size_t>(ref_.size()); }

    /// Offers a point to the archive. Returns the hypervolume gain, which is
    /// zero for dominated points, duplicates and points below the reference.
    double insert(const Vector& values, std::size_t origin);

private:
    Vector ref_;
    std::vector<FrontMember> front_;
    double hv_ = 0.0;
};

/// Hypervolume gained by adding `new_points` to the archive's front.
double hvi(std::span<const Vector> new_points, const ParetoState& state);

/// Precomputed base set for scoring many single-point improvements against
/// the same front; `improvement(p)` equals HV(base + p) - HV(base).
class ImprovementScorer {
public:
    ImprovementScorer(std::span<const Vector> base, Vector ref);
    double improvement(const Vector& point) const;

private:
    Vector ref_;
    std::vector<Vector> base_;  // nondominated members strictly above ref
};

}  // namespace morbo::pareto
