#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "morbo/engine.hpp"

namespace morbo::engine {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON has no infinities or NaN; they travel as strings.
json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw InvalidData("record: bad number '" + s + "'");
    }
    return j.get<double>();
}

json vec(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

Vector vec(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i]);
    return v;
}

json config_json(const RunConfig& c) {
    return {
        {"problem", c.problem},
        {"n0", c.n0},
        {"nf", c.nf},
        {"q", c.q},
        {"candidates", c.candidates},
        {"perturb_scale", c.perturb_scale},
        {"length_init", c.tr.length_init},
        {"length_max", c.tr.length_max},
        {"length_min", c.tr.length_min},
        {"n_tr", c.tr.num_regions},
        {"tau_succ", c.tr.tau_succ},
        {"tau_fail", c.tr.tau_fail ? json(*c.tr.tau_fail) : json(nullptr)},
        {"sampler", c.sampler == SamplerKind::rff ? "rff" : "exact"},
        {"rff_features", c.rff_features},
        {"seed", c.seed},
        {"async_workers", c.async_workers},
        {"fit_restarts", c.fit_restarts},
        {"fit_restarts_warm", c.fit_restarts_warm},
        {"fit_max_iterations", c.fit_max_iterations},
        {"warm_start", c.warm_start},
        {"window_min", c.window_min},
        {"window_cap", c.window_cap},
        {"fresh_candidates_per_step", c.fresh_candidates_per_step},
    };
}

RunConfig config_from(const json& j) {
    RunConfig c;
    c.problem = j.at("problem").get<std::string>();
    c.n0 = j.at("n0").get<long>();
    c.nf = j.at("nf").get<long>();
    c.q = j.at("q").get<int>();
    c.candidates = j.at("candidates").get<std::size_t>();
    c.perturb_scale = j.at("perturb_scale").get<double>();
    c.tr.length_init = j.at("length_init").get<double>();
    c.tr.length_max = j.at("length_max").get<double>();
    c.tr.length_min = j.at("length_min").get<double>();
    c.tr.num_regions = j.at("n_tr").get<int>();
    c.tr.tau_succ = j.at("tau_succ").get<int>();
    if (!j.at("tau_fail").is_null()) c.tr.tau_fail = j.at("tau_fail").get<int>();
    c.sampler = j.at("sampler").get<std::string>() == "rff" ? SamplerKind::rff : SamplerKind::exact;
    c.rff_features = j.at("rff_features").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.async_workers = j.at("async_workers").get<int>();
    c.fit_restarts = j.at("fit_restarts").get<int>();
    c.fit_restarts_warm = j.at("fit_restarts_warm").get<int>();
    c.fit_max_iterations = j.at("fit_max_iterations").get<int>();
    c.warm_start = j.at("warm_start").get<bool>();
    c.window_min = j.at("window_min").get<std::size_t>();
    c.window_cap = j.at("window_cap").get<std::size_t>();
    c.fresh_candidates_per_step = j.at("fresh_candidates_per_step").get<bool>();
    return c;
}

std::string observation_header(const problems::ProblemSpec& p) {
    std::string h = "iteration\ttr\tvalid";
    for (Eigen::Index i = 0; i < p.d; ++i) h += "\tx" + std::to_string(i);
    for (Eigen::Index i = 0; i < p.num_objectives; ++i) h += "\tf" + std::to_string(i);
    for (Eigen::Index i = 0; i < p.num_constraints; ++i) h += "\tc" + std::to_string(i);
    return h;
}

}  // namespace

void write_record(const RunRecord& rec, const std::string& base) {
    {
        std::ofstream out(base + ".observations.tsv");
        if (!out) throw InvalidArgument("cannot write " + base + ".observations.tsv");
        out << observation_header(rec.problem) << '\n';
        for (const auto& o : rec.observations) {
            out << o.iteration << '\t' << o.tr << '\t' << (o.valid ? 1 : 0);
            for (const Vector* v : {&o.x, &o.objectives, &o.constraints}) {
                for (Eigen::Index i = 0; i < v->size(); ++i) out << '\t' << fmt((*v)(i));
            }
            out << '\n';
        }
    }

    json s;
    s["method"] = rec.method;
    s["problem"] = {{"name", rec.problem.name},
                    {"d", rec.problem.d},
                    {"num_objectives", rec.problem.num_objectives},
                    {"num_constraints", rec.problem.num_constraints},
                    {"lower", vec(rec.problem.lower)},
                    {"upper", vec(rec.problem.upper)},
                    {"ref_point", vec(rec.problem.ref_point)},
                    {"default_candidates", rec.problem.default_candidates}};
    s["config"] = config_json(rec.config);
    s["complete"] = rec.complete;
    s["error"] = rec.error;
    s["evaluations"] = rec.observations.size();
    s["final_hypervolume"] = number(rec.final_hypervolume);
    s["front"] = rec.front;
    json trace = json::array();
    for (const auto& t : rec.trace) trace.push_back({t.evaluations, number(t.hypervolume)});
    s["trace"] = trace;
    json events = json::array();
    for (const auto& e : rec.events) {
        events.push_back({{"iteration", e.iteration},
                          {"tr", e.tr},
                          {"kind", e.kind},
                          {"length", number(e.length)},
                          {"center", e.center}});
    }
    s["events"] = events;
    json acq = json::array();
    for (const auto& a : rec.acquisition) {
        acq.push_back({a.iteration, a.step, a.winner_tr, number(a.winner_score), a.winner_feasible,
                       number(a.best_feasible_score), number(a.best_infeasible_score)});
    }
    s["acquisition"] = acq;

    std::ofstream out(base + ".summary.json");
    if (!out) throw InvalidArgument("cannot write " + base + ".summary.json");
    out << s.dump(1) << '\n';

    json timings = json::object();
    for (const auto& [k, v] : rec.timings) timings[k] = number(v);
    std::ofstream tout(base + ".timings.json");
    if (!tout) throw InvalidArgument("cannot write " + base + ".timings.json");
    tout << timings.dump(1) << '\n';
}

RunRecord read_record(const std::string& base) {
    std::ifstream sin(base + ".summary.json");
    if (!sin) throw InvalidData("missing record " + base + ".summary.json");
    RunRecord rec;
    try {
        const json s = json::parse(sin);
        rec.method = s.at("method").get<std::string>();
        const auto& p = s.at("problem");
        rec.problem.name = p.at("name").get<std::string>();
        rec.problem.d = p.at("d").get<Eigen::Index>();
        rec.problem.num_objectives = p.at("num_objectives").get<Eigen::Index>();
        rec.problem.num_constraints = p.at("num_constraints").get<Eigen::Index>();
        rec.problem.lower = vec(p.at("lower"));
        rec.problem.upper = vec(p.at("upper"));
        rec.problem.ref_point = vec(p.at("ref_point"));
        rec.problem.default_candidates = p.at("default_candidates").get<std::size_t>();
        rec.config = config_from(s.at("config"));
        rec.complete = s.at("complete").get<bool>();
        rec.error = s.at("error").get<std::string>();
        rec.final_hypervolume = number(s.at("final_hypervolume"));
        rec.front = s.at("front").get<IndexVector>();
        for (const auto& t : s.at("trace")) rec.trace.push_back({t.at(0).get<long>(), number(t.at(1))});
        for (const auto& e : s.at("events")) {
            rec.events.push_back({e.at("iteration").get<long>(), e.at("tr").get<int>(),
                                  e.at("kind").get<std::string>(), number(e.at("length")),
                                  e.at("center").get<long>()});
        }
        for (const auto& a : s.at("acquisition")) {
            rec.acquisition.push_back({a.at(0).get<long>(), a.at(1).get<int>(), a.at(2).get<int>(),
                                       number(a.at(3)), a.at(4).get<bool>(), number(a.at(5)),
                                       number(a.at(6))});
        }
    } catch (const json::exception& e) {
        throw InvalidData("malformed record " + base + ".summary.json: " + e.what());
    }
    if (std::ifstream tin(base + ".timings.json"); tin) {
        try {
            const json t = json::parse(tin);
            for (const auto& [k, v] : t.items()) rec.timings[k] = number(v);
        } catch (const json::exception& e) {
            throw InvalidData("malformed record " + base + ".timings.json: " + e.what());
        }
    }

    std::ifstream oin(base + ".observations.tsv");
    if (!oin) throw InvalidData("missing record " + base + ".observations.tsv");
    std::string line;
    std::getline(oin, line);
    if (line != observation_header(rec.problem)) {
        throw InvalidData("observation header does not match the problem in " + base);
    }
    const Eigen::Index d = rec.problem.d, m = rec.problem.num_objectives,
                       c = rec.problem.num_constraints;
    while (std::getline(oin, line)) {
        if (line.empty()) continue;
        std::istringstream in(line);
        std::vector<std::string> cells;
        for (std::string cell; std::getline(in, cell, '\t');) cells.push_back(cell);
        if (static_cast<Eigen::Index>(cells.size()) != 3 + d + m + c) {
            throw InvalidData("malformed observation line in " + base);
        }
        ObservationRecord o;
        o.iteration = std::stol(cells[0]);
        o.tr = std::stoi(cells[1]);
        o.valid = cells[2] == "1";
        auto read = [&](Eigen::Index offset, Eigen::Index count) {
            Vector v(count);
            for (Eigen::Index i = 0; i < count; ++i) {
                v(i) = std::strtod(cells[static_cast<std::size_t>(offset + i)].c_str(), nullptr);
            }
            return v;
        };
        o.x = read(3, d);
        o.objectives = read(3 + d, m);
        o.constraints = read(3 + d + m, c);
        rec.observations.push_back(std::move(o));
    }
    return rec;
}

}  // namespace morbo::engine
