#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "morbo/engine.hpp"
#include "morbo/candidates.hpp"
#include "morbo/pareto.hpp"
#include "oracles.hpp"

using morbo::Vector;
using namespace morbo::engine;

namespace {

RunConfig small(const std::string& problem, long n0, long nf, std::uint64_t seed = 0) {
    RunConfig c;
    c.problem = problem;
    c.n0 = n0;
    c.nf = nf;
    c.q = 10;
    c.candidates = 256;
    c.tr.num_regions = 2;
    c.fit_restarts = 1;
    c.fit_restarts_warm = 1;
    c.fit_max_iterations = 30;
    c.seed = seed;
    return c;
}

bool feasible(const ObservationRecord& o) {
    return o.valid && (o.constraints.size() == 0 || (o.constraints.array() <= 0).all());
}

// Hypervolume of the feasible observations among the first `n`.
double hv_prefix(const RunRecord& rec, long n) {
    std::vector<Vector> pts;
    for (long i = 0; i < n; ++i) {
        const auto& o = rec.observations[static_cast<std::size_t>(i)];
        if (feasible(o)) pts.push_back(o.objectives);
    }
    std::vector<Vector> front;
    for (std::size_t k : oracle::pareto_indices(pts)) front.push_back(pts[k]);
    return morbo::pareto::hypervolume(front, rec.problem.ref_point);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Flaky : public morbo::problems::Problem {
public:
    Flaky(bool throw_mode, int fail_after)
        : Problem({"flaky", 3, 2, 0, Vector::Zero(3), Vector::Ones(3), Vector::Constant(2, -2.0)}),
          throw_mode_(throw_mode),
          fail_after_(fail_after) {}

protected:
    morbo::problems::Outcome evaluate_raw(const Vector& x) const override {
        const int n = count_++;
        Vector f(2);
        f << -x(0) - x(2), x(0) - 1 - x(1);
        if (n >= fail_after_) {
            if (throw_mode_) throw morbo::EvaluationError("simulator crashed");
            if (n % 3 == 0) f(0) = std::nan("");
        }
        return {f, Vector()};
    }

private:
    bool throw_mode_;
    int fail_after_;
    mutable std::atomic<int> count_{0};
};

}  // namespace

TEST_CASE("zero-iteration run holds only the initial design") {
    const auto rec = run(small("dtlz2-10", 20, 20));
    CHECK(rec.complete);
    CHECK(rec.observations.size() == 20);
    REQUIRE(rec.trace.size() == 1);
    CHECK(rec.trace[0].evaluations == 20);
    CHECK(rec.trace[0].hypervolume == doctest::Approx(hv_prefix(rec, 20)).epsilon(1e-12));
    CHECK(rec.acquisition.empty());
    for (const auto& o : rec.observations) CHECK(o.iteration == 0);
}

TEST_CASE("runs are bit-identical for a fixed seed") {
    const auto a = run(small("dtlz2-10", 20, 120, 7));
    const auto b = run(small("dtlz2-10", 20, 120, 7));
    CHECK(a.complete);
    CHECK(a.same_result(b));
    const auto c = run(small("dtlz2-10", 20, 120, 8));
    CHECK_FALSE(a.same_result(c));
}

TEST_CASE("trace, front and windows follow the run") {
    const auto rec = run(small("dtlz2-10", 20, 120, 3));
    REQUIRE(rec.complete);
    CHECK(rec.observations.size() == 120);
    CHECK(rec.trace.size() == 1 + (120 - 20) / 10);
    for (std::size_t i = 0; i < rec.trace.size(); ++i) {
        CHECK(rec.trace[i].evaluations == 20 + 10 * static_cast<long>(i));
        CHECK(std::abs(rec.trace[i].hypervolume - hv_prefix(rec, rec.trace[i].evaluations)) < 1e-9);
        if (i > 0) CHECK(rec.trace[i].hypervolume >= rec.trace[i - 1].hypervolume);
    }
    CHECK(hv_trace(rec).size() == rec.trace.size());

    std::vector<Vector> pts;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rec.observations.size(); ++i) {
        if (feasible(rec.observations[i])) {
            pts.push_back(rec.observations[i].objectives);
            idx.push_back(i);
        }
    }
    morbo::IndexVector expected;
    for (std::size_t k : oracle::pareto_indices(pts)) expected.push_back(idx[k]);
    CHECK(rec.front == expected);

    // Every terminated region is reinitialized in the same iteration.
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
        if (rec.events[i].kind == "terminate") {
            REQUIRE(i + 1 < rec.events.size());
            CHECK(rec.events[i + 1].kind == "reinit");
            CHECK(rec.events[i + 1].tr == rec.events[i].tr);
            CHECK(rec.events[i + 1].length == 0.8);
        }
    }
    // Each selected point belongs to a live region id.
    for (const auto& o : rec.observations) CHECK(o.tr < 2);
}

TEST_CASE("regions fit on points produced by other regions") {
    auto cfg = small("dtlz2-10", 20, 100, 5);
    const auto rec = run(cfg);
    REQUIRE(rec.complete);
    const auto problem = morbo::problems::make_problem("dtlz2-10");
    // Reconstruct each region's center and length at the start of every
    // iteration from the event log and rebuild its window.
    bool foreign = false;
    for (long it = 2; it <= 8 && !foreign; ++it) {
        std::vector<morbo::Observation> obs;
        std::vector<int> source;
        for (const auto& o : rec.observations) {
            if (o.iteration >= it) break;
            obs.push_back({problem->spec().to_unit(o.x), o.objectives, o.constraints});
            source.push_back(o.tr);
        }
        for (int tr = 0; tr < 2; ++tr) {
            long center = -1;
            double length = 0.8;
            for (const auto& e : rec.events) {
                if (e.iteration >= it) break;
                if (e.tr == tr) {
                    center = e.center;
                    length = e.length;
                }
            }
            REQUIRE(center >= 0);
            const auto win = morbo::trust_region::local_window(
                obs, obs[static_cast<std::size_t>(center)].x, length, {20, 0});
            for (std::size_t i : win) {
                if (source[i] >= 0 && source[i] != tr) foreign = true;
            }
        }
    }
    CHECK(foreign);
}

TEST_CASE("optimization improves on the initial design") {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rec = run(small("dtlz2-10", 20, 120, seed));
        improved += rec.final_hypervolume > rec.trace.front().hypervolume;
    }
    CHECK(improved >= 19);
}

TEST_CASE("sobol baseline") {
    auto cfg = small("dtlz2-10", 20, 95, 4);
    const auto a = run_sobol_baseline(cfg);
    CHECK(a.complete);
    CHECK(a.method == "sobol");
    CHECK(a.observations.size() == 95);
    CHECK(a.trace.size() == 1 + 8);
    CHECK(a.trace.back().evaluations == 95);
    for (std::size_t i = 1; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].hypervolume >= a.trace[i - 1].hypervolume);
    }
    CHECK(a.same_result(run_sobol_baseline(cfg)));
    // Shares its first n0 points with the optimizer's initial design.
    const auto m = run(small("dtlz2-10", 20, 20, 4));
    for (std::size_t i = 0; i < 20; ++i) CHECK(a.observations[i].x == m.observations[i].x);
    // And continues the same stream: the first 95 rows of one sequence.
    const auto spec = morbo::problems::make_problem("dtlz2-10")->spec();
    const auto seq = morbo::candidates::sobol(95, 10, design_seed(4));
    for (Eigen::Index i = 0; i < 95; ++i) {
        CHECK(a.observations[static_cast<std::size_t>(i)].x == spec.to_raw(seq.row(i).transpose()));
    }
}

TEST_CASE("constrained run never loses feasible hypervolume") {
    auto cfg = small("welded-beam", 30, 90, 2);
    const auto rec = run(cfg);
    REQUIRE(rec.complete);
    for (std::size_t i = 1; i < rec.trace.size(); ++i) {
        CHECK(rec.trace[i].hypervolume >= rec.trace[i - 1].hypervolume);
    }
    CHECK(rec.acquisition.size() == 60);
    for (const auto& a : rec.acquisition) {
        if (a.best_feasible_score > 0) CHECK(a.winner_feasible);
        if (a.winner_feasible) CHECK(a.winner_score >= 0);
    }
}

TEST_CASE("non-finite outputs are recorded, not fatal") {
    Flaky p(false, 25);
    auto cfg = small("flaky", 20, 60, 1);
    const auto rec = run(cfg, p);
    CHECK(rec.complete);
    CHECK(rec.observations.size() == 60);
    long invalid = 0;
    for (const auto& o : rec.observations) invalid += !o.valid;
    CHECK(invalid > 0);
    for (std::size_t k : rec.front) CHECK(rec.observations[k].valid);
}

TEST_CASE("evaluation failure aborts with a partial record") {
    Flaky p(true, 35);
    const auto rec = run(small("flaky", 20, 60, 1), p);
    CHECK_FALSE(rec.complete);
    CHECK(rec.error.find("crashed") != std::string::npos);
    CHECK(rec.observations.size() == 35);

    Flaky early(true, 5);
    const auto rec2 = run(small("flaky", 20, 60, 1), early);
    CHECK_FALSE(rec2.complete);
    CHECK(rec2.observations.size() == 5);
    CHECK(rec2.trace.size() == 1);
}

TEST_CASE("asynchronous workers") {
    auto cfg = small("dtlz2-10", 20, 77, 6);
    cfg.async_workers = 3;
    const auto rec = run(cfg);
    CHECK(rec.complete);
    CHECK(rec.observations.size() == 77);
    // Updates after every q = 10 results plus the final partial block.
    CHECK(rec.trace.size() == 1 + 6);
    CHECK(rec.trace.back().evaluations == 77);
    for (std::size_t i = 1; i < rec.trace.size(); ++i) {
        CHECK(rec.trace[i].hypervolume >= rec.trace[i - 1].hypervolume);
    }
}

TEST_CASE("sampler variants run") {
    auto cfg = small("dtlz2-10", 20, 50, 2);
    cfg.sampler = SamplerKind::rff;
    cfg.rff_features = 256;
    auto rec = run(cfg);
    CHECK(rec.complete);
    cfg.sampler = SamplerKind::exact;
    cfg.fresh_candidates_per_step = true;
    cfg.candidates = 64;
    rec = run(cfg);
    CHECK(rec.complete);
    CHECK(rec.observations.size() == 50);
}

TEST_CASE("record files round-trip exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "morbo_test_engine";
    std::filesystem::create_directories(dir);
    Flaky p(false, 25);
    const auto rec = run(small("flaky", 20, 50, 9), p);
    const std::string base = (dir / "run").string();
    write_record(rec, base);
    const auto back = read_record(base);
    CHECK(back.same_result(rec));
    CHECK(back.timings == rec.timings);
    const std::string base2 = (dir / "again").string();
    write_record(back, base2);
    CHECK(slurp(base + ".observations.tsv") == slurp(base2 + ".observations.tsv"));
    CHECK(slurp(base + ".summary.json") == slurp(base2 + ".summary.json"));
    CHECK_THROWS_AS(read_record((dir / "missing").string()), morbo::InvalidData);
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
    auto bad = small("dtlz2-10", 20, 10);
    CHECK_THROWS_AS(bad.validate(), morbo::InvalidConfig);
    bad = small("dtlz2-10", 20, 40);
    bad.q = 0;
    CHECK_THROWS_AS(run(bad), morbo::InvalidConfig);
    bad = small("dtlz2-10", 20, 40);
    bad.tr.length_min = 1.0;
    CHECK_THROWS_AS(bad.validate(), morbo::InvalidConfig);
    bad = small("nope", 20, 40);
    CHECK_THROWS_AS(run(bad), morbo::InvalidConfig);
}
