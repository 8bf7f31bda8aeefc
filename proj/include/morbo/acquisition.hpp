#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "morbo/observation.hpp"
#include "morbo/pareto.hpp"
#include "morbo/surrogate.hpp"

namespace morbo::acquisition {

struct PendingPoint {
    Vector x;
    Vector sampled_objectives;   // values of the draw the point was chosen under
    Vector sampled_constraints;
    int source_tr = 0;

    bool sampled_feasible() const {
        return sampled_constraints.size() == 0 || (sampled_constraints.array() <= 0.0).all();
    }
};

/// Acquisition value of each candidate row: for a sample satisfying every
/// constraint, the hypervolume it adds to the front together with the
/// feasible pending values; otherwise minus its total constraint violation.
/// `pending_values` are objective vectors that already passed feasibility.
Vector score_candidates(const Matrix& sampled_f, const Matrix& sampled_c,
                        std::span<const Vector> pending_values, const pareto::ParetoState& state);

/// Convenience overload taking the pending points themselves.
Vector score_candidates(const Matrix& sampled_f, const Matrix& sampled_c,
                        std::span<const PendingPoint> pending, const pareto::ParetoState& state);

/// Joint draws over a fixed point set. Each call to draw() returns one
/// sample of every outcome: rows follow the point set, columns are the
/// objectives followed by the constraints.
class JointDraws {
public:
    virtual ~JointDraws() = default;
    virtual Matrix draw(std::mt19937_64& rng) const = 0;
};

/// The models of one trust region, one per outcome.
class RegionSurrogate {
public:
    virtual ~RegionSurrogate() = default;
    virtual Eigen::Index num_objectives() const = 0;
    virtual Eigen::Index num_constraints() const = 0;
    virtual std::unique_ptr<JointDraws> condition(const Matrix& x) const = 0;
};

/// Exact joint posterior sampling from independent GPs.
class ExactSurrogate : public RegionSurrogate {
public:
    ExactSurrogate(std::vector<surrogate::GPModel> models, Eigen::Index num_objectives);
    Eigen::Index num_objectives() const override { return m_; }
    Eigen::Index num_constraints() const override {
        return static_cast<Eigen::Index>(models_.size()) - m_;
    }
    std::unique_ptr<JointDraws> condition(const Matrix& x) const override;

private:
    std::vector<surrogate::GPModel> models_;
    Eigen::Index m_;
};

/// Each draw is a fresh random-Fourier-feature function sample per outcome.
class RffSurrogate : public RegionSurrogate {
public:
    RffSurrogate(std::vector<surrogate::GPModel> models, Eigen::Index num_objectives,
                 std::size_t num_features);
    Eigen::Index num_objectives() const override { return m_; }
    Eigen::Index num_constraints() const override {
        return static_cast<Eigen::Index>(models_.size()) - m_;
    }
    std::unique_ptr<JointDraws> condition(const Matrix& x) const override;

private:
    std::vector<surrogate::GPModel> models_;
    Eigen::Index m_;
    std::size_t features_;
};

/// One trust region's contribution to batch selection. `generate(step)`
/// returns that region's candidate rows for a greedy step.
struct RegionInput {
    int tr_id = 0;
    const RegionSurrogate* surrogate = nullptr;
    std::function<Matrix(std::size_t step)> generate;
};

struct BatchOptions {
    /// Regenerates every region's candidates (and refactorizes its joint
    /// posterior) at each greedy step. Otherwise one candidate set per region
    /// serves the whole call and each step draws a fresh joint sample.
    bool fresh_candidates_per_step = false;
};

/// What one greedy step saw, for auditing the selection rule.
struct StepLog {
    int winner_tr = 0;
    double winner_score = 0.0;
    bool winner_feasible = false;
    double best_feasible_score = -INFINITY;    // over all regions' candidates
    double best_infeasible_score = -INFINITY;
};

/// Sequential-greedy selection of `q` points. Regions compete for each slot;
/// a region's own pending points are resampled jointly with its candidates,
/// other regions' pending points enter through their stored sampled values.
/// `existing` holds points already awaiting evaluation. Ties go to the
/// lowest region id, then the lowest candidate index.
std::vector<PendingPoint> select_batch(std::span<const RegionInput> regions,
                                       const pareto::ParetoState& state, std::size_t q,
                                       std::mt19937_64& rng,
                                       std::span<const PendingPoint> existing = {},
                                       const BatchOptions& options = {},
                                       std::vector<StepLog>* log = nullptr);

}  // namespace morbo::acquisition
