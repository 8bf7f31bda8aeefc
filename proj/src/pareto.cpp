#include "morbo/pareto.hpp"

#include <algorithm>
#include <numeric>

namespace morbo::pareto {

namespace {

void check_objective_count(Eigen::Index m) {
    if (m < 2 || m > 4) {
        throw UnsupportedError("exact hypervolume supports 2 to 4 objectives, got " +
                               std::to_string(m));
    }
}

bool strictly_above(const Vector& p, const Vector& ref) {
    return (p.array() > ref.array()).all();
}

// Points are stored as columns of a plain vector so the recursive slicing
// can reorder them cheaply.
using PointList = std::vector<Vector>;

double sweep_2d(PointList pts, const Vector& ref) {
    std::sort(pts.begin(), pts.end(),
              [](const Vector& a, const Vector& b) { return a(0) > b(0); });
    double area = 0.0;
    double best_y = ref(1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        best_y = std::max(best_y, pts[i](1));
        const double next_x = (i + 1 < pts.size()) ? pts[i + 1](0) : ref(0);
        area += (pts[i](0) - next_x) * (best_y - ref(1));
    }
    return area;
}

// Slices along the last coordinate and recurses on the projection.
double slice_volume(PointList pts, const Vector& ref) {
    const Eigen::Index m = ref.size();
    if (pts.empty()) return 0.0;
    if (m == 2) return sweep_2d(std::move(pts), ref);

    std::sort(pts.begin(), pts.end(),
              [m](const Vector& a, const Vector& b) { return a(m - 1) > b(m - 1); });
    const Vector sub_ref = ref.head(m - 1);
    PointList projected;
    projected.reserve(pts.size());
    double volume = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        projected.push_back(pts[i].head(m - 1));
        const double next_z = (i + 1 < pts.size()) ? pts[i + 1](m - 1) : ref(m - 1);
        const double depth = pts[i](m - 1) - next_z;
        if (depth > 0.0) {
            // Dropping dominated projections keeps the recursion small.
            PointList nd;
            for (std::size_t k : pareto_filter(projected)) nd.push_back(projected[k]);
            volume += depth * slice_volume(std::move(nd), sub_ref);
        }
    }
    return volume;
}

}  // namespace

bool dominates(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("dominates: objective vectors differ in length");
    }
    bool strictly_better = false;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a(k) < b(k)) return false;
        if (a(k) > b(k)) strictly_better = true;
    }
    return strictly_better;
}

IndexVector pareto_filter(std::span<const Vector> points) {
    IndexVector keep;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            dominated = (j != i) && dominates(points[j], points[i]);
        }
        if (!dominated) keep.push_back(i);
    }
    return keep;
}

double hypervolume(std::span<const Vector> front, const Vector& ref) {
    check_objective_count(ref.size());
    PointList pts;
    for (const auto& p : front) {
        if (p.size() != ref.size()) {
            throw InvalidArgument("hypervolume: point and reference differ in length");
        }
        if (strictly_above(p, ref)) pts.push_back(p);
    }
    return slice_volume(std::move(pts), ref);
}

double point_improvement(const Vector& point, std::span<const Vector> base,
                         const Vector& ref) {
    check_objective_count(ref.size());
    if (!strictly_above(point, ref)) return 0.0;
    // Weakly dominated points add exactly nothing; no rounding residue.
    for (const auto& b : base) {
        if ((b.array() >= point.array()).all()) return 0.0;
    }
    const double own = (point - ref).prod();
    // The part of the point's box already covered is the volume dominated by
    // the base set clipped to that box.
    PointList limited;
    limited.reserve(base.size());
    for (const auto& b : base) {
        Vector clipped = b.cwiseMin(point);
        if (strictly_above(clipped, ref)) limited.push_back(std::move(clipped));
    }
    PointList nd;
    for (std::size_t k : pareto_filter(limited)) nd.push_back(limited[k]);
    return std::max(0.0, own - slice_volume(std::move(nd), ref));
}

std::vector<double> hv_contributions(std::span<const Vector> front, const Vector& ref) {
    for (std::size_t i = 0; i < front.size(); ++i) {
        for (std::size_t j = 0; j < front.size(); ++j) {
            if (i != j && dominates(front[j], front[i])) {
                throw InvalidArgument("hv_contributions: front member " + std::to_string(i) +
                                      " is dominated");
            }
        }
    }
    std::vector<double> contrib(front.size(), 0.0);
    std::vector<Vector> others;
    for (std::size_t i = 0; i < front.size(); ++i) {
        others.clear();
        for (std::size_t j = 0; j < front.size(); ++j) {
            if (j != i) others.push_back(front[j]);
        }
        contrib[i] = point_improvement(front[i], others, ref);
    }
    return contrib;
}

ParetoState::ParetoState(Vector ref_point) : ref_(std::move(ref_point)) {
    check_objective_count(ref_.size());
}

std::vector<Vector> ParetoState::front_values() const {
    std::vector<Vector> out;
    out.reserve(front_.size());
    for (const auto& m : front_) out.push_back(m.values);
    return out;
}

double ParetoState::insert(const Vector& values, std::size_t origin) {
    if (values.size() != ref_.size()) {
        throw InvalidArgument("ParetoState::insert: wrong objective count");
    }
    for (const auto& m : front_) {
        if (dominates(m.values, values)) return 0.0;
    }
    const auto current = front_values();
    const double gain = point_improvement(values, current, ref_);

    std::erase_if(front_, [&](const FrontMember& m) { return dominates(values, m.values); });
    front_.push_back({values, origin});
    // Recomputed from scratch; the max keeps rounding from reporting a loss.
    hv_ = std::max(hv_, pareto::hypervolume(front_values(), ref_));
    return gain;
}

double hvi(std::span<const Vector> new_points, const ParetoState& state) {
    if (new_points.empty()) return 0.0;
    std::vector<Vector> all = state.front_values();
    all.insert(all.end(), new_points.begin(), new_points.end());
    const double after = hypervolume(all, state.ref_point());
    return std::max(0.0, after - state.hypervolume());
}

ImprovementScorer::ImprovementScorer(std::span<const Vector> base, Vector ref)
    : ref_(std::move(ref)) {
    check_objective_count(ref_.size());
    std::vector<Vector> above;
    for (const auto& b : base) {
        if (strictly_above(b, ref_)) above.push_back(b);
    }
    for (std::size_t k : pareto_filter(above)) base_.push_back(above[k]);
    if (ref_.size() == 2) {
        // Descending first objective implies ascending second on a front.
        std::sort(base_.begin(), base_.end(), [](const Vector& a, const Vector& b) {
            return a(0) > b(0) || (a(0) == b(0) && a(1) < b(1));
        });
    }
}

double ImprovementScorer::improvement(const Vector& point) const {
    if (ref_.size() != 2) return point_improvement(point, base_, ref_);
    if (!(point(0) > ref_(0) && point(1) > ref_(1))) return 0.0;

    const std::size_t n = base_.size();
    for (const auto& b : base_) {
        if (b(0) >= point(0) && b(1) >= point(1)) return 0.0;
    }
    // Staircase area of the base clipped to the point's box, in one pass.
    double covered = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::min(point(0), base_[i](0));
        const double y = std::min(point(1), base_[i](1));
        const double next_x = (i + 1 < n) ? std::min(point(0), base_[i + 1](0)) : ref_(0);
        covered += (x - next_x) * (y - ref_(1));
    }
    const double own = (point(0) - ref_(0)) * (point(1) - ref_(1));
    return std::max(0.0, own - covered);
}

}  // namespace morbo::pareto
