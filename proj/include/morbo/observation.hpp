#pragma once

#include <cstddef>

#include "morbo/types.hpp"

namespace morbo {

/// One evaluated design. `x` is the point in the normalized unit cube,
/// objectives use the maximization convention and constraints are feasible
/// when <= 0.
struct Observation {
    Vector x;
    Vector objectives;
    Vector constraints;

    /// Sum of positive constraint values.
    double violation() const { return constraints.size() ? constraints.cwiseMax(0.0).sum() : 0.0; }
    bool feasible() const { return violation() <= 0.0; }
};

/// Axis-aligned box inside the unit cube.
struct Box {
    Vector lower;
    Vector upper;

    bool contains(const Vector& x) const {
        return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }
};

}  // namespace morbo
