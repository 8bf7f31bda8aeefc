#include "morbo/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace morbo::trust_region {

int TRDefaults::tau_fail_for(Eigen::Index d) const {
    if (tau_fail) return *tau_fail;
    return std::max(10, static_cast<int>((d + 2) / 3));
}

Box TrustRegion::bounds() const {
    const Vector half = Vector::Constant(center.size(), 0.5 * length);
    return {(center - half).cwiseMax(0.0), (center + half).cwiseMin(1.0)};
}

TrustRegion make_trust_region(int id, Vector center, const TRDefaults& defaults) {
    TrustRegion tr;
    tr.id = id;
    tr.length = defaults.length_init;
    tr.length_min = defaults.length_min;
    tr.length_max = defaults.length_max;
    tr.tau_succ = defaults.tau_succ;
    tr.tau_fail = defaults.tau_fail_for(center.size());
    tr.center = std::move(center);
    return tr;
}

TrustRegion record_batch_outcome(TrustRegion tr, bool improved) {
    if (!tr.active()) {
        throw LifecycleError("record_batch_outcome: trust region " + std::to_string(tr.id) +
                             " is terminated");
    }
    if (improved) {
        ++tr.success_count;
        tr.failure_count = 0;
    } else {
        ++tr.failure_count;
        tr.success_count = 0;
    }
    return tr;
}

TrustRegion adjust_length(TrustRegion tr) {
    if (!tr.active()) return tr;
    if (tr.success_count >= tr.tau_succ) {
        tr.length = std::min(2.0 * tr.length, tr.length_max);
        tr.success_count = 0;
        tr.failure_count = 0;
    } else if (tr.failure_count >= tr.tau_fail) {
        tr.length *= 0.5;
        tr.success_count = 0;
        tr.failure_count = 0;
    }
    if (tr.length < tr.length_min) tr.status = Status::terminated;
    return tr;
}

namespace {

double dominated_volume(const Vector& f, const Vector& ref) {
    return (f - ref).cwiseMax(0.0).prod();
}

// Fallback order: least violation, then most volume above the reference,
// then earliest observation.
IndexVector rank_by_violation(std::span<const Observation> obs, IndexVector idx,
                              const Vector& ref) {
    std::vector<double> viol(obs.size()), vol(obs.size());
    for (std::size_t i : idx) {
        viol[i] = obs[i].violation();
        vol[i] = dominated_volume(obs[i].objectives, ref);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (viol[a] != viol[b]) return viol[a] < viol[b];
        if (vol[a] != vol[b]) return vol[a] > vol[b];
        return a < b;
    });
    return idx;
}

}  // namespace

IndexVector select_centers(std::span<const Observation> observations,
                           const pareto::ParetoState& state,
                           std::span<const std::optional<Box>> regions) {
    if (observations.empty()) throw PreconditionError("select_centers: no observations");

    // Front members ranked by contribution; ties go to the earliest origin.
    const auto& members = state.front();
    const auto contrib = pareto::hv_contributions(state.front_values(), state.ref_point());
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (contrib[a] != contrib[b]) return contrib[a] > contrib[b];
        return members[a].origin < members[b].origin;
    });
    IndexVector front_ranked;
    for (std::size_t k : order) front_ranked.push_back(members[k].origin);

    IndexVector all(observations.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const IndexVector global_ranked =
        front_ranked.empty() ? rank_by_violation(observations, all, state.ref_point())
                             : front_ranked;

    std::vector<bool> taken(observations.size(), false);
    IndexVector centers;
    for (const auto& region : regions) {
        IndexVector ranked;
        if (region) {
            for (std::size_t i : front_ranked) {
                if (region->contains(observations[i].x)) ranked.push_back(i);
            }
            if (ranked.empty()) {
                IndexVector inside;
                for (std::size_t i : all) {
                    if (region->contains(observations[i].x)) inside.push_back(i);
                }
                ranked = rank_by_violation(observations, std::move(inside), state.ref_point());
            }
        }
        if (ranked.empty()) ranked = global_ranked;

        auto pick = std::find_if(ranked.begin(), ranked.end(),
                                 [&](std::size_t i) { return !taken[i]; });
        const std::size_t chosen = pick != ranked.end() ? *pick : ranked.front();
        taken[chosen] = true;
        centers.push_back(chosen);
    }
    return centers;
}

std::size_t default_min_points(Eigen::Index d) {
    return static_cast<std::size_t>(std::min<Eigen::Index>(250, 2 * d));
}

IndexVector local_window(std::span<const Observation> observations, const Vector& center,
                         double half_width, const WindowOptions& options) {
    if (!(half_width > 0.0)) throw InvalidArgument("local_window: half width must be positive");
    IndexVector inside;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        if ((observations[i].x - center).cwiseAbs().maxCoeff() <= half_width) inside.push_back(i);
    }

    // The `count` members of `pool` closest to the center, ties by index.
    auto nearest = [&](const IndexVector& pool, std::size_t count) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(pool.size());
        for (std::size_t i : pool) dist.emplace_back((observations[i].x - center).squaredNorm(), i);
        count = std::min(count, dist.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(count),
                          dist.end());
        IndexVector out;
        for (std::size_t k = 0; k < count; ++k) out.push_back(dist[k].second);
        return out;
    };

    IndexVector chosen = inside;
    if (inside.size() < options.min_points) {
        IndexVector all(observations.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        chosen = nearest(all, options.min_points);
    }
    if (options.max_points > 0 && chosen.size() > options.max_points) {
        chosen = nearest(chosen, options.max_points);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace morbo::trust_region
