#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "morbo/problems.hpp"
#include "morbo/trust_region.hpp"

namespace morbo::engine {

enum class SamplerKind { exact, rff };

struct RunConfig {
    std::string problem;
    long n0 = 50;
    long nf = 500;
    int q = 10;
    /// Candidate-set size; 0 takes the problem's default.
    std::size_t candidates = 0;
    /// Numerator of the initial perturbation probability min(scale / d, 1).
    double perturb_scale = 20.0;
    trust_region::TRDefaults tr;
    SamplerKind sampler = SamplerKind::exact;
    std::size_t rff_features = 1024;
    std::uint64_t seed = 0;
    int async_workers = 1;

    // Local model fitting.
    int fit_restarts = 5;
    /// Restarts when a region refits from its previous hyperparameters.
    int fit_restarts_warm = 5;
    int fit_max_iterations = 100;
    bool warm_start = true;
    /// N_m; 0 means min(250, 2d).
    std::size_t window_min = 0;
    /// N_cap; 0 means unbounded.
    std::size_t window_cap = 0;
    bool fresh_candidates_per_step = false;

    void validate() const;
};

struct ObservationRecord {
    long iteration = 0;  // 0 for the initial design
    int tr = -1;         // -1 when no trust region produced the point
    Vector x;            // raw domain
    Vector objectives;
    Vector constraints;
    bool valid = true;   // false when the evaluation returned non-finite values
};

struct TREvent {
    long iteration = 0;
    int tr = 0;
    std::string kind;  // init, expand, shrink, terminate, reinit, center
    double length = 0.0;
    long center = -1;  // observation index of the center after the event
};

struct AcquisitionEntry {
    long iteration = 0;
    int step = 0;
    int winner_tr = 0;
    double winner_score = 0.0;
    bool winner_feasible = false;
    double best_feasible_score = 0.0;
    double best_infeasible_score = 0.0;
};

struct TracePoint {
    long evaluations = 0;
    double hypervolume = 0.0;
};

struct RunRecord {
    std::string method;  // "morbo" or "sobol"
    RunConfig config;
    problems::ProblemSpec problem;
    std::vector<ObservationRecord> observations;
    std::vector<TracePoint> trace;
    std::vector<TREvent> events;
    std::vector<AcquisitionEntry> acquisition;
    IndexVector front;  // observation indices of the final Pareto set
    double final_hypervolume = 0.0;
    bool complete = false;
    std::string error;
    std::map<std::string, double> timings;  // seconds per phase

    /// Equality of everything except wall-clock timings.
    bool same_result(const RunRecord& other) const;
};

/// Runs the optimizer on `problem`.
RunRecord run(const RunConfig& config, const problems::Problem& problem);
/// Runs on the built-in problem named in the config.
RunRecord run(const RunConfig& config);

/// Evaluates the initial design followed by the continuation of the same
/// scrambled Sobol stream, in batches of q.
RunRecord run_sobol_baseline(const RunConfig& config, const problems::Problem& problem);
RunRecord run_sobol_baseline(const RunConfig& config);

/// (evaluations, hypervolume) at each batch boundary.
std::vector<TracePoint> hv_trace(const RunRecord& record);

/// Writes `<base>.observations.tsv`, `<base>.summary.json` and the
/// wall-clock timings in `<base>.timings.json`; only the last one differs
/// between repeated identical runs.
void write_record(const RunRecord& record, const std::string& base);
/// Reads a record written by write_record. Throws InvalidData on malformed
/// or missing files.
RunRecord read_record(const std::string& base);

/// Seed of the scrambled Sobol stream shared by the initial design and the
/// Sobol baseline.
std::uint64_t design_seed(std::uint64_t seed);

}  // namespace morbo::engine
