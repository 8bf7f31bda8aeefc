#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "morbo/types.hpp"

namespace morbo::problems {

struct ProblemSpec {
    std::string name;
    Eigen::Index d = 0;
    Eigen::Index num_objectives = 0;
    Eigen::Index num_constraints = 0;
    Vector lower;
    Vector upper;
    Vector ref_point;  // maximization convention
    std::size_t default_candidates = 4096;

    void validate() const;
    /// Maps a unit-cube point to the raw domain; the result is clamped so
    /// that x = 1 lands exactly on the upper bound.
    Vector to_raw(const Vector& unit) const;
    Vector to_unit(const Vector& raw) const;
};

struct Outcome {
    Vector objectives;   // maximization convention
    Vector constraints;  // <= 0 feasible
};

/// A black-box problem. Implementations must be safe to call from several
/// threads at once.
class Problem {
public:
    virtual ~Problem() = default;
    const ProblemSpec& spec() const { return spec_; }
    /// Evaluates a raw point; rejects points outside the bounds.
    Outcome evaluate(const Vector& raw) const;

protected:
    explicit Problem(ProblemSpec spec);
    virtual Outcome evaluate_raw(const Vector& raw) const = 0;

private:
    ProblemSpec spec_;
};

/// DTLZ2 with two objectives and `d` inputs in [0,1].
std::unique_ptr<Problem> dtlz2(Eigen::Index d);
/// MW7: 10 inputs, 2 objectives, 2 constraints.
std::unique_ptr<Problem> mw7();
/// Welded beam design: 4 inputs, 2 objectives, 4 constraints.
std::unique_ptr<Problem> welded_beam();
/// Vehicle crash safety: 5 inputs, 3 objectives.
std::unique_ptr<Problem> vehicle_safety();

/// Built-in problem by name: dtlz2-10, dtlz2-30, dtlz2-100, mw7,
/// welded-beam, vehicle-safety. Throws InvalidConfig for unknown names.
std::unique_ptr<Problem> make_problem(const std::string& name);
std::vector<std::string> builtin_names();

/// External problem served by a child process. Each evaluation writes the
/// raw point as one line of d decimals to the child's stdin and reads one
/// line of M + C decimals from its stdout. With `minimize` set the child's
/// objectives are negated on the way in. Calls are serialized.
class SubprocessProblem : public Problem {
public:
    SubprocessProblem(ProblemSpec spec, std::vector<std::string> argv, bool minimize = false);
    ~SubprocessProblem() override;

protected:
    Outcome evaluate_raw(const Vector& raw) const override;

private:
    void shutdown();

    std::vector<std::string> argv_;
    bool minimize_ = false;
    mutable std::mutex mutex_;
    int pid_ = -1;
    int to_child_ = -1;
    std::FILE* from_child_ = nullptr;
};

/// Scrambled Sobol points mapped into the problem's bounds, one per row.
Matrix initial_design(const ProblemSpec& spec, std::size_t n0, std::uint64_t seed);

}  // namespace morbo::problems
