#include "morbo/acquisition.hpp"

#include <limits>

namespace morbo::acquisition {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool row_feasible(const Matrix& c, Eigen::Index i) {
    return c.cols() == 0 || (c.row(i).array() <= 0.0).all();
}

class ExactDraws : public JointDraws {
public:
    ExactDraws(const std::vector<surrogate::GPModel>& models, const Matrix& x) {
        samplers_.reserve(models.size());
        for (const auto& m : models) samplers_.emplace_back(m, x);
        rows_ = x.rows();
    }

    Matrix draw(std::mt19937_64& rng) const override {
        Matrix out(rows_, static_cast<Eigen::Index>(samplers_.size()));
        for (std::size_t k = 0; k < samplers_.size(); ++k) {
            out.col(static_cast<Eigen::Index>(k)) = samplers_[k].draw(rng);
        }
        return out;
    }

private:
    std::vector<surrogate::JointSampler> samplers_;
    Eigen::Index rows_ = 0;
};

class RffDraws : public JointDraws {
public:
    RffDraws(const std::vector<surrogate::GPModel>& models, Matrix x, std::size_t features)
        : models_(models), x_(std::move(x)), features_(features) {}

    Matrix draw(std::mt19937_64& rng) const override {
        Matrix out(x_.rows(), static_cast<Eigen::Index>(models_.size()));
        for (std::size_t k = 0; k < models_.size(); ++k) {
            const auto sample = surrogate::draw_rff(models_[k], features_, rng);
            out.col(static_cast<Eigen::Index>(k)) = surrogate::eval_rff(sample, x_);
        }
        return out;
    }

private:
    const std::vector<surrogate::GPModel>& models_;
    Matrix x_;
    std::size_t features_;
};

void check_models(const std::vector<surrogate::GPModel>& models, Eigen::Index m) {
    if (m < 1 || static_cast<Eigen::Index>(models.size()) < m) {
        throw InvalidArgument("region surrogate: fewer models than objectives");
    }
}

}  // namespace

Vector score_candidates(const Matrix& sampled_f, const Matrix& sampled_c,
                        std::span<const Vector> pending_values, const pareto::ParetoState& state) {
    if (sampled_f.cols() != state.ref_point().size()) {
        throw InvalidArgument("score_candidates: objective count mismatch");
    }
    if (sampled_c.rows() != sampled_f.rows() && sampled_c.size() != 0) {
        throw InvalidArgument("score_candidates: constraint rows mismatch");
    }
    std::vector<Vector> base = state.front_values();
    base.insert(base.end(), pending_values.begin(), pending_values.end());
    const pareto::ImprovementScorer scorer(base, state.ref_point());

    Vector out(sampled_f.rows());
    for (Eigen::Index i = 0; i < sampled_f.rows(); ++i) {
        if (sampled_c.size() == 0 || row_feasible(sampled_c, i)) {
            out(i) = scorer.improvement(sampled_f.row(i).transpose());
        } else {
            out(i) = -sampled_c.row(i).cwiseMax(0.0).sum();
        }
    }
    return out;
}

Vector score_candidates(const Matrix& sampled_f, const Matrix& sampled_c,
                        std::span<const PendingPoint> pending, const pareto::ParetoState& state) {
    std::vector<Vector> values;
    for (const auto& p : pending) {
        if (p.sampled_feasible()) values.push_back(p.sampled_objectives);
    }
    return score_candidates(sampled_f, sampled_c, values, state);
}

ExactSurrogate::ExactSurrogate(std::vector<surrogate::GPModel> models, Eigen::Index num_objectives)
    : models_(std::move(models)), m_(num_objectives) {
    check_models(models_, m_);
}

std::unique_ptr<JointDraws> ExactSurrogate::condition(const Matrix& x) const {
    return std::make_unique<ExactDraws>(models_, x);
}

RffSurrogate::RffSurrogate(std::vector<surrogate::GPModel> models, Eigen::Index num_objectives,
                           std::size_t num_features)
    : models_(std::move(models)), m_(num_objectives), features_(num_features) {
    check_models(models_, m_);
}

std::unique_ptr<JointDraws> RffSurrogate::condition(const Matrix& x) const {
    return std::make_unique<RffDraws>(models_, x, features_);
}

namespace {

struct RegionWork {
    const RegionInput* input = nullptr;
    Matrix x;                      // candidates, then own pending rows
    Eigen::Index num_candidates = 0;
    std::unique_ptr<JointDraws> draws;
    std::vector<bool> taken;       // candidate rows already selected
    std::vector<std::pair<std::size_t, Eigen::Index>> own;  // (pending index, row of x)
};

// Candidates of `step` stacked above the region's pending points.
void prepare(RegionWork& w, std::size_t step, const std::vector<PendingPoint>& pending) {
    const Matrix cand = w.input->generate(step);
    if (cand.rows() < 1) throw PreconditionError("select_batch: empty candidate set");
    std::vector<std::size_t> mine;
    for (std::size_t k = 0; k < pending.size(); ++k) {
        if (pending[k].source_tr == w.input->tr_id) mine.push_back(k);
    }
    w.num_candidates = cand.rows();
    w.x.resize(cand.rows() + static_cast<Eigen::Index>(mine.size()), cand.cols());
    w.x.topRows(cand.rows()) = cand;
    w.own.clear();
    for (std::size_t k = 0; k < mine.size(); ++k) {
        const Eigen::Index row = cand.rows() + static_cast<Eigen::Index>(k);
        w.x.row(row) = pending[mine[k]].x.transpose();
        w.own.emplace_back(mine[k], row);
    }
    w.taken.assign(static_cast<std::size_t>(cand.rows()), false);
    w.draws = w.input->surrogate->condition(w.x);
}

}  // namespace

std::vector<PendingPoint> select_batch(std::span<const RegionInput> regions,
                                       const pareto::ParetoState& state, std::size_t q,
                                       std::mt19937_64& rng,
                                       std::span<const PendingPoint> existing,
                                       const BatchOptions& options, std::vector<StepLog>* log) {
    if (regions.empty()) throw LifecycleError("select_batch: no active trust regions");
    if (q < 1) throw InvalidArgument("select_batch: q must be at least 1");
    for (std::size_t i = 1; i < regions.size(); ++i) {
        if (regions[i].tr_id <= regions[i - 1].tr_id) {
            throw InvalidArgument("select_batch: regions must be ordered by increasing id");
        }
    }
    const Eigen::Index m = regions.front().surrogate->num_objectives();

    std::vector<PendingPoint> pending(existing.begin(), existing.end());
    std::vector<RegionWork> work(regions.size());
    for (std::size_t i = 0; i < regions.size(); ++i) {
        work[i].input = &regions[i];
        if (!options.fresh_candidates_per_step) prepare(work[i], 0, pending);
    }

    std::vector<PendingPoint> batch;
    for (std::size_t step = 0; step < q; ++step) {
        StepLog entry;
        double best = kNegInf;
        std::size_t best_region = 0;
        Eigen::Index best_row = -1;
        Eigen::RowVectorXd best_sample;

        for (std::size_t i = 0; i < work.size(); ++i) {
            auto& w = work[i];
            if (options.fresh_candidates_per_step) prepare(w, step, pending);
            const Matrix s = w.draws->draw(rng);
            const Eigen::Index c = s.cols() - m;

            // Own pending points take this draw's values; the rest keep theirs.
            std::vector<Eigen::Index> row_of(pending.size(), -1);
            for (const auto& [k, row] : w.own) row_of[k] = row;
            std::vector<Vector> pending_values;
            for (std::size_t k = 0; k < pending.size(); ++k) {
                if (row_of[k] >= 0) {
                    const Eigen::Index row = row_of[k];
                    if (c == 0 || (s.row(row).tail(c).array() <= 0.0).all()) {
                        pending_values.push_back(s.row(row).head(m).transpose());
                    }
                } else if (pending[k].sampled_feasible()) {
                    pending_values.push_back(pending[k].sampled_objectives);
                }
            }

            const Eigen::Index nc = w.num_candidates;
            const Matrix f = s.topLeftCorner(nc, m);
            const Matrix cons = s.topRightCorner(nc, c);
            const Vector scores = score_candidates(f, cons, pending_values, state);
            for (Eigen::Index j = 0; j < nc; ++j) {
                if (w.taken[static_cast<std::size_t>(j)]) continue;
                const bool feasible = c == 0 || (cons.row(j).array() <= 0.0).all();
                auto& slot = feasible ? entry.best_feasible_score : entry.best_infeasible_score;
                slot = std::max(slot, scores(j));
                if (scores(j) > best) {
                    best = scores(j);
                    best_region = i;
                    best_row = j;
                    best_sample = s.row(j);
                    entry.winner_feasible = feasible;
                }
            }
        }
        if (best_row < 0) throw PreconditionError("select_batch: candidate sets exhausted");

        auto& w = work[best_region];
        PendingPoint point;
        point.x = w.x.row(best_row).transpose();
        point.sampled_objectives = best_sample.head(m).transpose();
        point.sampled_constraints = best_sample.tail(best_sample.size() - m).transpose();
        point.source_tr = w.input->tr_id;
        w.taken[static_cast<std::size_t>(best_row)] = true;
        w.own.emplace_back(pending.size(), best_row);
        pending.push_back(point);
        batch.push_back(point);

        entry.winner_tr = point.source_tr;
        entry.winner_score = best;
        if (log) log->push_back(entry);
    }
    return batch;
}

}  // namespace morbo::acquisition
