#include "morbo/engine.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "morbo/acquisition.hpp"
#include "morbo/candidates.hpp"
#include "morbo/surrogate.hpp"

namespace morbo::engine {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
    kDesignStream = 0xD35,
    kFitStream = 0xF17,
    kCandidateStream = 0xCA4D,
    kSelectStream = 0x5E1,
};

using Clock = std::chrono::steady_clock;

class PhaseTimer {
public:
    PhaseTimer(std::map<std::string, double>& sink, std::string name)
        : sink_(sink), name_(std::move(name)), start_(Clock::now()) {}
    ~PhaseTimer() {
        sink_[name_] += std::chrono::duration<double>(Clock::now() - start_).count();
    }

private:
    std::map<std::string, double>& sink_;
    std::string name_;
    Clock::time_point start_;
};

bool same(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        // Bitwise agreement, so NaN matches NaN.
        if (std::memcmp(&a(i), &b(i), sizeof(double)) != 0) return false;
    }
    return true;
}

bool same_config(const RunConfig& a, const RunConfig& b) {
    return a.problem == b.problem && a.n0 == b.n0 && a.nf == b.nf && a.q == b.q &&
           a.candidates == b.candidates && a.perturb_scale == b.perturb_scale && a.tr.length_init == b.tr.length_init &&
           a.tr.length_max == b.tr.length_max && a.tr.length_min == b.tr.length_min &&
           a.tr.num_regions == b.tr.num_regions && a.tr.tau_succ == b.tr.tau_succ &&
           a.tr.tau_fail == b.tr.tau_fail && a.sampler == b.sampler &&
           a.rff_features == b.rff_features && a.seed == b.seed &&
           a.async_workers == b.async_workers && a.fit_restarts == b.fit_restarts &&
           a.fit_restarts_warm == b.fit_restarts_warm &&
           a.fit_max_iterations == b.fit_max_iterations && a.warm_start == b.warm_start &&
           a.window_min == b.window_min && a.window_cap == b.window_cap &&
           a.fresh_candidates_per_step == b.fresh_candidates_per_step;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

void RunConfig::validate() const {
    if (n0 < 1) throw InvalidConfig("n0 must be at least 1");
    if (nf < n0) throw InvalidConfig("nf must be at least n0");
    if (q < 1) throw InvalidConfig("q must be at least 1");
    if (tr.num_regions < 1) throw InvalidConfig("n_tr must be at least 1");
    if (!(tr.length_min > 0 && tr.length_min <= tr.length_init && tr.length_init <= tr.length_max)) {
        throw InvalidConfig("trust region lengths must satisfy 0 < L_min <= L_init <= L_max");
    }
    if (tr.tau_succ < 1 || (tr.tau_fail && *tr.tau_fail < 1)) {
        throw InvalidConfig("streak tolerances must be positive");
    }
    if (sampler == SamplerKind::rff && rff_features < 1) {
        throw InvalidConfig("rff sampler needs at least one feature");
    }
    if (!(perturb_scale > 0)) throw InvalidConfig("perturb_scale must be positive");
    if (async_workers < 1) throw InvalidConfig("async_workers must be at least 1");
    if (fit_restarts < 1 || fit_restarts_warm < 1 || fit_max_iterations < 1) {
        throw InvalidConfig("fit restarts and iterations must be positive");
    }
}

bool RunRecord::same_result(const RunRecord& o) const {
    if (method != o.method || !same_config(config, o.config) || complete != o.complete ||
        error != o.error || front != o.front || !same_bits(final_hypervolume, o.final_hypervolume)) {
        return false;
    }
    if (problem.name != o.problem.name || !same(problem.lower, o.problem.lower) ||
        !same(problem.upper, o.problem.upper) || !same(problem.ref_point, o.problem.ref_point)) {
        return false;
    }
    if (observations.size() != o.observations.size() || trace.size() != o.trace.size() ||
        events.size() != o.events.size() || acquisition.size() != o.acquisition.size()) {
        return false;
    }
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto& a = observations[i];
        const auto& b = o.observations[i];
        if (a.iteration != b.iteration || a.tr != b.tr || a.valid != b.valid || !same(a.x, b.x) ||
            !same(a.objectives, b.objectives) || !same(a.constraints, b.constraints)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace[i].evaluations != o.trace[i].evaluations ||
            !same_bits(trace[i].hypervolume, o.trace[i].hypervolume)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& a = events[i];
        const auto& b = o.events[i];
        if (a.iteration != b.iteration || a.tr != b.tr || a.kind != b.kind ||
            !same_bits(a.length, b.length) || a.center != b.center) {
            return false;
        }
    }
    for (std::size_t i = 0; i < acquisition.size(); ++i) {
        const auto& a = acquisition[i];
        const auto& b = o.acquisition[i];
        if (a.iteration != b.iteration || a.step != b.step || a.winner_tr != b.winner_tr ||
            !same_bits(a.winner_score, b.winner_score) || a.winner_feasible != b.winner_feasible ||
            !same_bits(a.best_feasible_score, b.best_feasible_score) ||
            !same_bits(a.best_infeasible_score, b.best_infeasible_score)) {
            return false;
        }
    }
    return true;
}

std::uint64_t design_seed(std::uint64_t seed) { return derive_seed(seed, {kDesignStream}); }

std::vector<TracePoint> hv_trace(const RunRecord& record) { return record.trace; }

namespace {

// Shared state of one optimization run: the observation store in unit
// coordinates, the archive and the trust regions.
class Optimizer {
public:
    Optimizer(const RunConfig& config, const problems::Problem& problem, RunRecord& record)
        : cfg_(config),
          problem_(problem),
          spec_(problem.spec()),
          rec_(record),
          state_(spec_.ref_point) {
        window_.min_points = cfg_.window_min ? cfg_.window_min
                                             : trust_region::default_min_points(spec_.d);
        window_.max_points = cfg_.window_cap;
        candidates_ = cfg_.candidates ? cfg_.candidates : spec_.default_candidates;
    }

    const RunConfig& cfg() const { return cfg_; }
    long evaluated() const { return static_cast<long>(rec_.observations.size()); }
    double hypervolume() const { return state_.hypervolume(); }

    /// Evaluates a unit-cube point. Returns nullopt on a hard failure.
    std::optional<problems::Outcome> evaluate(const Vector& unit) const {
        try {
            return problem_.evaluate(spec_.to_raw(unit));
        } catch (const Error& e) {
            std::lock_guard lock(error_mutex_);
            if (error_.empty()) error_ = e.what();
            return std::nullopt;
        }
    }

    std::string error() const {
        std::lock_guard lock(error_mutex_);
        return error_;
    }

    /// Stores one evaluated point and reports whether it counts as progress.
    bool add(const Vector& unit, const problems::Outcome& out, long iteration, int tr) {
        ObservationRecord r;
        r.iteration = iteration;
        r.tr = tr;
        r.x = spec_.to_raw(unit);
        r.objectives = out.objectives;
        r.constraints = out.constraints;
        r.valid = out.objectives.allFinite() && out.constraints.allFinite() &&
                  out.objectives.size() == spec_.num_objectives &&
                  out.constraints.size() == spec_.num_constraints;
        rec_.observations.push_back(r);
        if (!r.valid) return false;

        const double hv_before = state_.hypervolume();
        const double viol_before = min_violation_;
        Observation o{unit, out.objectives, out.constraints};
        const std::size_t idx = obs_.size();
        obs_.push_back(o);
        record_index_.push_back(rec_.observations.size() - 1);
        const double viol = o.violation();
        min_violation_ = std::min(min_violation_, viol);
        double gain = 0.0;
        if (o.feasible()) gain = state_.insert(o.objectives, idx);
        return gain > 1e-12 || (hv_before == 0.0 && viol < viol_before);
    }

    void push_trace() { rec_.trace.push_back({evaluated(), state_.hypervolume()}); }

    /// Creates the regions and their first centers.
    void init_regions() {
        if (obs_.empty()) {
            throw EvaluationError("no valid observation in the initial design");
        }
        for (int j = 0; j < cfg_.tr.num_regions; ++j) {
            trs_.push_back(trust_region::make_trust_region(j, Vector::Zero(spec_.d), cfg_.tr));
            fresh_.push_back(true);
            warm_.emplace_back();
        }
        recenter(0);
    }

    /// Counter and length updates after a block of evaluations. `had` and
    /// `improved` are indexed by region id.
    void update_regions(long iteration, const std::vector<bool>& had,
                        const std::vector<bool>& improved) {
        for (std::size_t j = 0; j < trs_.size(); ++j) {
            if (!had[j]) continue;
            auto& tr = trs_[j];
            const double before = tr.length;
            tr = trust_region::adjust_length(trust_region::record_batch_outcome(tr, improved[j]));
            if (tr.length > before) event(iteration, tr, "expand");
            if (tr.length < before) event(iteration, tr, "shrink");
            if (!tr.active()) {
                event(iteration, tr, "terminate");
                tr = trust_region::make_trust_region(tr.id, tr.center, cfg_.tr);
                fresh_[j] = true;
                warm_[j].clear();
                event(iteration, tr, "reinit");
            }
        }
        recenter(iteration);
    }

    /// Local surrogates for every region.
    std::vector<std::unique_ptr<acquisition::RegionSurrogate>> fit(long call) {
        PhaseTimer t(rec_.timings, "fit");
        const Eigen::Index m = spec_.num_objectives;
        const Eigen::Index outcomes = m + spec_.num_constraints;
        std::vector<std::unique_ptr<acquisition::RegionSurrogate>> out;
        for (std::size_t j = 0; j < trs_.size(); ++j) {
            const auto& tr = trs_[j];
            const IndexVector win = trust_region::local_window(obs_, tr.center, tr.length, window_);
            Matrix x(static_cast<Eigen::Index>(win.size()), spec_.d);
            for (std::size_t i = 0; i < win.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = obs_[win[i]].x.transpose();
            }
            std::vector<surrogate::GPModel> models;
            auto& warm = warm_[j];
            warm.resize(static_cast<std::size_t>(outcomes));
            for (Eigen::Index k = 0; k < outcomes; ++k) {
                Vector y(x.rows());
                for (std::size_t i = 0; i < win.size(); ++i) {
                    const auto& o = obs_[win[i]];
                    y(static_cast<Eigen::Index>(i)) = k < m ? o.objectives(k) : o.constraints(k - m);
                }
                surrogate::FitOptions fo;
                fo.max_iterations = cfg_.fit_max_iterations;
                fo.seed = derive_seed(cfg_.seed, {kFitStream, static_cast<std::uint64_t>(call),
                                                  static_cast<std::uint64_t>(j),
                                                  static_cast<std::uint64_t>(k)});
                auto& prev = warm[static_cast<std::size_t>(k)];
                if (cfg_.warm_start && prev) {
                    fo.warm_start = prev;
                    fo.restarts = cfg_.fit_restarts_warm;
                } else {
                    fo.restarts = cfg_.fit_restarts;
                }
                models.push_back(surrogate::fit_gp(x, y, fo));
                prev = models.back().hyperparams();
            }
            if (cfg_.sampler == SamplerKind::rff) {
                out.push_back(std::make_unique<acquisition::RffSurrogate>(std::move(models), m,
                                                                          cfg_.rff_features));
            } else {
                out.push_back(std::make_unique<acquisition::ExactSurrogate>(std::move(models), m));
            }
        }
        return out;
    }

    /// Chooses up to `count` new points given the points still in flight.
    std::vector<acquisition::PendingPoint> select(
        long call, long iteration, std::size_t count,
        const std::vector<std::unique_ptr<acquisition::RegionSurrogate>>& models,
        std::span<const acquisition::PendingPoint> in_flight) {
        PhaseTimer t(rec_.timings, "select");
        const candidates::PerturbSchedule sched{cfg_.n0, cfg_.nf, spec_.d, cfg_.perturb_scale};
        double p = sched.p0();
        if (sched.budget() >= 2) p = candidates::perturb_prob(evaluated(), sched);
        std::vector<acquisition::RegionInput> regions;
        for (std::size_t j = 0; j < trs_.size(); ++j) {
            const auto tr = trs_[j];
            const Box box = tr.bounds();
            std::vector<Vector> base;
            for (const auto& member : state_.front()) {
                if (box.contains(obs_[member.origin].x)) base.push_back(obs_[member.origin].x);
            }
            const std::size_t r = candidates_;
            const std::uint64_t seed = cfg_.seed;
            regions.push_back(
                {tr.id, models[j].get(), [tr, base, r, p, seed, call](std::size_t step) {
                     return candidates::gen_candidates(
                         tr, base, r, p,
                         derive_seed(seed, {kCandidateStream, static_cast<std::uint64_t>(call),
                                            static_cast<std::uint64_t>(tr.id), step}));
                 }});
        }
        std::mt19937_64 rng(derive_seed(cfg_.seed, {kSelectStream, static_cast<std::uint64_t>(call)}));
        std::vector<acquisition::StepLog> log;
        auto batch = acquisition::select_batch(regions, state_, count, rng, in_flight,
                                               {cfg_.fresh_candidates_per_step}, &log);
        for (std::size_t s = 0; s < log.size(); ++s) {
            rec_.acquisition.push_back({iteration, static_cast<int>(s), log[s].winner_tr,
                                        log[s].winner_score, log[s].winner_feasible,
                                        log[s].best_feasible_score, log[s].best_infeasible_score});
        }
        return batch;
    }

    void finish() {
        rec_.front.clear();
        for (const auto& m : state_.front()) rec_.front.push_back(record_index_[m.origin]);
        std::sort(rec_.front.begin(), rec_.front.end());
        rec_.final_hypervolume = state_.hypervolume();
    }

    std::size_t num_regions() const { return trs_.size(); }

private:
    void event(long iteration, const trust_region::TrustRegion& tr, const char* kind) {
        const long center = center_[static_cast<std::size_t>(tr.id)];
        rec_.events.push_back({iteration, tr.id, kind, tr.length, center});
    }

    // Sequential-greedy center assignment in region-id order; fresh regions
    // choose globally, surviving ones within their current box.
    void recenter(long iteration) {
        std::vector<std::optional<Box>> requests;
        for (std::size_t j = 0; j < trs_.size(); ++j) {
            if (fresh_[j]) {
                requests.emplace_back();
            } else {
                requests.emplace_back(trs_[j].bounds());
            }
        }
        const IndexVector centers = trust_region::select_centers(obs_, state_, requests);
        center_.resize(trs_.size(), -1);
        for (std::size_t j = 0; j < trs_.size(); ++j) {
            const long idx = static_cast<long>(record_index_[centers[j]]);
            const bool moved = center_[j] != idx;
            trs_[j].center = obs_[centers[j]].x;
            center_[j] = idx;
            if (fresh_[j] && iteration == 0) {
                event(iteration, trs_[j], "init");
            } else if (moved) {
                event(iteration, trs_[j], "center");
            }
            fresh_[j] = false;
        }
    }

    const RunConfig& cfg_;
    const problems::Problem& problem_;
    const problems::ProblemSpec& spec_;
    RunRecord& rec_;
    pareto::ParetoState state_;
    trust_region::WindowOptions window_;
    std::size_t candidates_ = 0;

    std::vector<Observation> obs_;    // valid observations only
    IndexVector record_index_;        // obs_ index -> record index
    double min_violation_ = std::numeric_limits<double>::infinity();
    std::vector<trust_region::TrustRegion> trs_;
    std::vector<bool> fresh_;
    std::vector<long> center_;
    std::vector<std::vector<std::optional<surrogate::GPHyperparams>>> warm_;

    mutable std::mutex error_mutex_;
    mutable std::string error_;
};

RunRecord start_record(const std::string& method, const RunConfig& config,
                       const problems::Problem& problem) {
    config.validate();
    RunRecord rec;
    rec.method = method;
    rec.config = config;
    rec.config.problem = problem.spec().name;
    rec.problem = problem.spec();
    return rec;
}

Matrix design_points(const problems::ProblemSpec& spec, std::size_t n, std::uint64_t seed,
                     std::size_t start) {
    return candidates::sobol(n, spec.d, design_seed(seed), start);
}

// Evaluates the initial design; false when the run must stop.
bool evaluate_design(Optimizer& opt, RunRecord& rec) {
    const auto& cfg = opt.cfg();
    const Matrix design = design_points(rec.problem, static_cast<std::size_t>(cfg.n0), cfg.seed, 0);
    PhaseTimer t(rec.timings, "evaluate");
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const Vector x = design.row(i).transpose();
        const auto out = opt.evaluate(x);
        if (!out) return false;
        opt.add(x, *out, 0, -1);
    }
    return true;
}

void run_sync(Optimizer& opt, RunRecord& rec) {
    const auto& cfg = opt.cfg();
    long iteration = 1;
    while (opt.evaluated() < cfg.nf) {
        const auto count = static_cast<std::size_t>(std::min<long>(cfg.q, cfg.nf - opt.evaluated()));
        const auto models = opt.fit(iteration);
        const auto batch = opt.select(iteration, iteration, count, models, {});

        std::vector<bool> had(opt.num_regions(), false), improved(opt.num_regions(), false);
        {
            PhaseTimer t(rec.timings, "evaluate");
            for (const auto& p : batch) {
                const auto out = opt.evaluate(p.x);
                if (!out) return;
                const auto j = static_cast<std::size_t>(p.source_tr);
                had[j] = true;
                if (opt.add(p.x, *out, iteration, p.source_tr)) improved[j] = true;
            }
        }
        opt.push_trace();
        opt.update_regions(iteration, had, improved);
        ++iteration;
    }
}

// Fixed pool of evaluation threads fed through a queue.
class WorkerPool {
public:
    struct Job {
        long id;
        Vector x;
    };
    struct Result {
        long id;
        std::optional<problems::Outcome> outcome;
    };

    WorkerPool(const Optimizer& opt, int workers) : opt_(opt) {
        for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
    }
    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void submit(Job job) {
        {
            std::lock_guard lock(mutex_);
            jobs_.push_back(std::move(job));
        }
        cv_.notify_all();
    }

    Result wait() {
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return !results_.empty(); });
        Result r = std::move(results_.front());
        results_.pop_front();
        return r;
    }

private:
    void loop() {
        for (;;) {
            Job job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
                if (stop_ && jobs_.empty()) return;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            Result r{job.id, opt_.evaluate(job.x)};
            {
                std::lock_guard lock(mutex_);
                results_.push_back(std::move(r));
            }
            done_cv_.notify_all();
        }
    }

    const Optimizer& opt_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_, done_cv_;
    std::deque<Job> jobs_;
    std::deque<Result> results_;
    bool stop_ = false;
};

// Selection runs whenever workers are idle; region updates happen after
// every q completed evaluations.
void run_async(Optimizer& opt) {
    const auto& cfg = opt.cfg();
    const long budget = cfg.nf - opt.evaluated();
    WorkerPool pool(opt, cfg.async_workers);
    std::map<long, acquisition::PendingPoint> in_flight;
    long dispatched = 0, received = 0, call = 0, next_id = 0;
    long iteration = 1;
    bool fresh_data = true;
    std::vector<bool> had(opt.num_regions(), false), improved(opt.num_regions(), false);
    std::vector<std::unique_ptr<acquisition::RegionSurrogate>> models;

    while (received < budget) {
        const long idle = cfg.async_workers - static_cast<long>(in_flight.size());
        if (idle > 0 && dispatched < budget) {
            ++call;
            if (fresh_data || models.empty()) models = opt.fit(call);
            fresh_data = false;
            std::vector<acquisition::PendingPoint> pending;
            for (const auto& [id, p] : in_flight) pending.push_back(p);
            const auto count = static_cast<std::size_t>(std::min(idle, budget - dispatched));
            for (auto& p : opt.select(call, iteration, count, models, pending)) {
                pool.submit({next_id, p.x});
                in_flight.emplace(next_id++, std::move(p));
                ++dispatched;
            }
            continue;
        }
        auto result = pool.wait();
        const auto point = in_flight.at(result.id);
        in_flight.erase(result.id);
        if (!result.outcome) {
            // Let the remaining workers finish before the pool is torn down.
            while (!in_flight.empty()) {
                in_flight.erase(pool.wait().id);
            }
            return;
        }
        const auto j = static_cast<std::size_t>(point.source_tr);
        had[j] = true;
        if (opt.add(point.x, *result.outcome, iteration, point.source_tr)) improved[j] = true;
        fresh_data = true;
        ++received;
        if (received % cfg.q == 0 || received == budget) {
            opt.push_trace();
            opt.update_regions(iteration, had, improved);
            std::fill(had.begin(), had.end(), false);
            std::fill(improved.begin(), improved.end(), false);
            ++iteration;
        }
    }
}

}  // namespace

RunRecord run(const RunConfig& config, const problems::Problem& problem) {
    RunRecord rec = start_record("morbo", config, problem);
    const auto t0 = Clock::now();
    Optimizer opt(rec.config, problem, rec);
    try {
        if (evaluate_design(opt, rec)) {
            opt.push_trace();
            opt.init_regions();
            if (rec.config.async_workers > 1) {
                run_async(opt);
            } else {
                run_sync(opt, rec);
            }
        }
        rec.error = opt.error();
    } catch (const Error& e) {
        rec.error = e.what();
    }
    if (rec.trace.empty()) opt.push_trace();
    opt.finish();
    rec.complete = rec.error.empty() && opt.evaluated() == rec.config.nf;
    rec.timings["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
    return rec;
}

RunRecord run(const RunConfig& config) { return run(config, *problems::make_problem(config.problem)); }

RunRecord run_sobol_baseline(const RunConfig& config, const problems::Problem& problem) {
    RunRecord rec = start_record("sobol", config, problem);
    const auto t0 = Clock::now();
    Optimizer opt(rec.config, problem, rec);
    try {
        if (evaluate_design(opt, rec)) {
            opt.push_trace();
            const auto n0 = static_cast<std::size_t>(rec.config.n0);
            const Matrix rest = design_points(rec.problem, static_cast<std::size_t>(rec.config.nf) - n0,
                                              rec.config.seed, n0);
            long iteration = 1;
            PhaseTimer t(rec.timings, "evaluate");
            for (Eigen::Index i = 0; i < rest.rows(); ++i) {
                const Vector x = rest.row(i).transpose();
                const auto out = opt.evaluate(x);
                if (!out) break;
                opt.add(x, *out, iteration, -1);
                if ((i + 1) % rec.config.q == 0 || i + 1 == rest.rows()) {
                    opt.push_trace();
                    ++iteration;
                }
            }
        }
        rec.error = opt.error();
    } catch (const Error& e) {
        rec.error = e.what();
    }
    if (rec.trace.empty()) opt.push_trace();
    opt.finish();
    rec.complete = rec.error.empty() && opt.evaluated() == rec.config.nf;
    rec.timings["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
    return rec;
}

RunRecord run_sobol_baseline(const RunConfig& config) {
    return run_sobol_baseline(config, *problems::make_problem(config.problem));
}

}  // namespace morbo::engine
