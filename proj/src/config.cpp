#include "morbo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace morbo::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_int(const std::string& key, const std::string& text) {
    const std::string s = trim(text);
    T v{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
        throw InvalidConfig(key + ": expected an integer, got '" + text + "'");
    }
    return v;
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string s = trim(text);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
        throw InvalidConfig(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw InvalidConfig(key + ": expected true or false, got '" + text + "'");
}

bool is_auto(const std::string& text) { return trim(text) == "auto"; }

Vector parse_list(const std::string& key, const std::string& text) {
    std::string s = text;
    for (char& c : s) {
        if (c == ',') c = ' ';
    }
    std::istringstream in(s);
    std::vector<double> vals;
    for (std::string tok; in >> tok;) vals.push_back(parse_double(key, tok));
    if (vals.empty()) throw InvalidConfig(key + ": expected a list of numbers");
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_list(const Vector& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v(i));
    return out;
}

template <class T>
std::string auto_or(T v) {
    return v == 0 ? "auto" : std::to_string(v);
}

struct Key {
    std::string name;
    std::function<void(Experiment&, const std::string&, const std::string&)> set;
    std::function<std::string(const Experiment&)> get;
};

ExternalProblem& ext(Experiment& e) {
    if (!e.external) e.external.emplace();
    return *e.external;
}

const std::vector<Key>& keys() {
    using E = Experiment;
    using S = const std::string&;
    static const std::vector<Key> table = {
        {"run.problem", [](E& e, S, S v) { e.run.problem = trim(v); },
         [](const E& e) { return e.run.problem; }},
        {"run.method",
         [](E& e, S k, S v) {
             const std::string m = trim(v);
             if (m != "morbo" && m != "sobol") throw InvalidConfig(k + ": expected morbo or sobol");
             e.method = m;
         },
         [](const E& e) { return e.method; }},
        {"run.seed", [](E& e, S k, S v) { e.run.seed = parse_int<std::uint64_t>(k, v); },
         [](const E& e) { return std::to_string(e.run.seed); }},
        {"run.n0", [](E& e, S k, S v) { e.run.n0 = parse_int<long>(k, v); },
         [](const E& e) { return std::to_string(e.run.n0); }},
        {"run.nf", [](E& e, S k, S v) { e.run.nf = parse_int<long>(k, v); },
         [](const E& e) { return std::to_string(e.run.nf); }},
        {"run.q", [](E& e, S k, S v) { e.run.q = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.q); }},
        {"run.async_workers", [](E& e, S k, S v) { e.run.async_workers = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.async_workers); }},
        {"run.output_dir", [](E& e, S, S v) { e.output_dir = trim(v); },
         [](const E& e) { return e.output_dir; }},

        {"trust_region.n_tr",
         [](E& e, S k, S v) { e.run.tr.num_regions = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.tr.num_regions); }},
        {"trust_region.length_init",
         [](E& e, S k, S v) { e.run.tr.length_init = parse_double(k, v); },
         [](const E& e) { return fmt(e.run.tr.length_init); }},
        {"trust_region.length_max",
         [](E& e, S k, S v) { e.run.tr.length_max = parse_double(k, v); },
         [](const E& e) { return fmt(e.run.tr.length_max); }},
        {"trust_region.length_min",
         [](E& e, S k, S v) { e.run.tr.length_min = parse_double(k, v); },
         [](const E& e) { return fmt(e.run.tr.length_min); }},
        {"trust_region.tau_succ",
         [](E& e, S k, S v) {
             e.run.tr.tau_succ = trim(v) == "inf" ? trust_region::kInfiniteStreak
                                                  : parse_int<int>(k, v);
         },
         [](const E& e) {
             return e.run.tr.tau_succ == trust_region::kInfiniteStreak
                        ? std::string("inf")
                        : std::to_string(e.run.tr.tau_succ);
         }},
        {"trust_region.tau_fail",
         [](E& e, S k, S v) {
             if (is_auto(v)) {
                 e.run.tr.tau_fail.reset();
             } else {
                 e.run.tr.tau_fail = parse_int<int>(k, v);
             }
         },
         [](const E& e) {
             return e.run.tr.tau_fail ? std::to_string(*e.run.tr.tau_fail) : std::string("auto");
         }},

        {"candidates.r",
         [](E& e, S k, S v) { e.run.candidates = is_auto(v) ? 0 : parse_int<std::size_t>(k, v); },
         [](const E& e) { return auto_or(e.run.candidates); }},
        {"candidates.perturb_scale",
         [](E& e, S k, S v) { e.run.perturb_scale = parse_double(k, v); },
         [](const E& e) { return fmt(e.run.perturb_scale); }},
        {"candidates.fresh_per_step",
         [](E& e, S k, S v) { e.run.fresh_candidates_per_step = parse_bool(k, v); },
         [](const E& e) { return std::string(e.run.fresh_candidates_per_step ? "true" : "false"); }},

        {"sampler.kind",
         [](E& e, S k, S v) {
             const std::string s = trim(v);
             if (s == "exact") {
                 e.run.sampler = engine::SamplerKind::exact;
             } else if (s == "rff") {
                 e.run.sampler = engine::SamplerKind::rff;
             } else {
                 throw InvalidConfig(k + ": expected exact or rff");
             }
         },
         [](const E& e) {
             return std::string(e.run.sampler == engine::SamplerKind::rff ? "rff" : "exact");
         }},
        {"sampler.rff_features",
         [](E& e, S k, S v) { e.run.rff_features = parse_int<std::size_t>(k, v); },
         [](const E& e) { return std::to_string(e.run.rff_features); }},

        {"surrogate.restarts", [](E& e, S k, S v) { e.run.fit_restarts = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.fit_restarts); }},
        {"surrogate.restarts_warm",
         [](E& e, S k, S v) { e.run.fit_restarts_warm = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.fit_restarts_warm); }},
        {"surrogate.max_iterations",
         [](E& e, S k, S v) { e.run.fit_max_iterations = parse_int<int>(k, v); },
         [](const E& e) { return std::to_string(e.run.fit_max_iterations); }},
        {"surrogate.warm_start", [](E& e, S k, S v) { e.run.warm_start = parse_bool(k, v); },
         [](const E& e) { return std::string(e.run.warm_start ? "true" : "false"); }},
        {"surrogate.window_min",
         [](E& e, S k, S v) { e.run.window_min = is_auto(v) ? 0 : parse_int<std::size_t>(k, v); },
         [](const E& e) { return auto_or(e.run.window_min); }},
        {"surrogate.window_cap",
         [](E& e, S k, S v) {
             e.run.window_cap = trim(v) == "none" ? 0 : parse_int<std::size_t>(k, v);
         },
         [](const E& e) {
             return e.run.window_cap == 0 ? std::string("none") : std::to_string(e.run.window_cap);
         }},

        {"problem.command", [](E& e, S, S v) { ext(e).command = trim(v); },
         [](const E& e) { return e.external ? e.external->command : std::string(); }},
        {"problem.d",
         [](E& e, S k, S v) { ext(e).spec.d = parse_int<Eigen::Index>(k, v); },
         [](const E& e) { return e.external ? std::to_string(e.external->spec.d) : std::string(); }},
        {"problem.num_objectives",
         [](E& e, S k, S v) { ext(e).spec.num_objectives = parse_int<Eigen::Index>(k, v); },
         [](const E& e) {
             return e.external ? std::to_string(e.external->spec.num_objectives) : std::string();
         }},
        {"problem.num_constraints",
         [](E& e, S k, S v) { ext(e).spec.num_constraints = parse_int<Eigen::Index>(k, v); },
         [](const E& e) {
             return e.external ? std::to_string(e.external->spec.num_constraints) : std::string();
         }},
        {"problem.lower", [](E& e, S k, S v) { ext(e).spec.lower = parse_list(k, v); },
         [](const E& e) { return e.external ? fmt_list(e.external->spec.lower) : std::string(); }},
        {"problem.upper", [](E& e, S k, S v) { ext(e).spec.upper = parse_list(k, v); },
         [](const E& e) { return e.external ? fmt_list(e.external->spec.upper) : std::string(); }},
        {"problem.ref_point", [](E& e, S k, S v) { ext(e).spec.ref_point = parse_list(k, v); },
         [](const E& e) {
             return e.external ? fmt_list(e.external->spec.ref_point) : std::string();
         }},
        {"problem.minimize", [](E& e, S k, S v) { ext(e).minimize = parse_bool(k, v); },
         [](const E& e) {
             return std::string(e.external && e.external->minimize ? "true" : "false");
         }},
    };
    return table;
}

Vector broadcast(const Vector& v, Eigen::Index d) {
    return v.size() == 1 ? Vector::Constant(d, v(0)) : v;
}

// The spec of an external problem in the optimizer's convention.
problems::ProblemSpec resolved_spec(const Experiment& exp) {
    const ExternalProblem& x = *exp.external;
    problems::ProblemSpec spec = x.spec;
    spec.name = exp.run.problem;
    spec.lower = broadcast(x.spec.lower, x.spec.d);
    spec.upper = broadcast(x.spec.upper, x.spec.d);
    spec.ref_point = x.minimize ? Vector(-x.spec.ref_point) : x.spec.ref_point;
    return spec;
}

}  // namespace

std::vector<std::string> known_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

void set_value(Experiment& exp, const std::string& key, const std::string& value) {
    for (const auto& k : keys()) {
        if (k.name == key) {
            k.set(exp, key, value);
            return;
        }
    }
    throw InvalidConfig("unknown config key '" + key + "'");
}

Experiment parse(std::istream& in, const std::string& origin) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidConfig(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    Experiment exp;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw InvalidConfig(origin + ": key '" + section + "' is outside any section");
        }
        const auto all = known_keys();
        if (std::none_of(all.begin(), all.end(),
                         [&](const std::string& k) { return k.rfind(section + ".", 0) == 0; })) {
            throw InvalidConfig(origin + ": unknown section [" + section + "]");
        }
        for (const auto& [name, value] : body) {
            try {
                set_value(exp, section + "." + name, value.data());
            } catch (const InvalidConfig& e) {
                throw InvalidConfig(origin + ": " + e.what());
            }
        }
    }
    return exp;
}

Experiment load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config file " + path);
    return parse(in, path);
}

void validate(const Experiment& exp) {
    if (exp.run.problem.empty()) throw InvalidConfig("missing field run.problem");
    if (exp.external) {
        const ExternalProblem& x = *exp.external;
        if (x.command.empty()) throw InvalidConfig("missing field problem.command");
        if (x.spec.d < 1) throw InvalidConfig("missing field problem.d");
        if (x.spec.num_objectives < 1) throw InvalidConfig("missing field problem.num_objectives");
        if (x.spec.lower.size() == 0) throw InvalidConfig("missing field problem.lower");
        if (x.spec.upper.size() == 0) throw InvalidConfig("missing field problem.upper");
        if (x.spec.ref_point.size() == 0) throw InvalidConfig("missing field problem.ref_point");
        for (const auto* v : {&x.spec.lower, &x.spec.upper}) {
            if (v->size() != 1 && v->size() != x.spec.d) {
                throw InvalidConfig("problem bounds need 1 or d values");
            }
        }
        resolved_spec(exp).validate();
    } else {
        const auto names = problems::builtin_names();
        if (std::find(names.begin(), names.end(), exp.run.problem) == names.end()) {
            throw InvalidConfig("unknown problem '" + exp.run.problem +
                                "' and no problem.command given");
        }
    }
    exp.run.validate();
}

std::string to_ini(const Experiment& exp) {
    std::string out;
    std::string section;
    for (const auto& k : keys()) {
        const auto dot = k.name.find('.');
        const std::string sec = k.name.substr(0, dot);
        if (sec == "problem" && !exp.external) continue;
        const std::string value = k.get(exp);
        if (value.empty()) continue;
        if (sec != section) {
            out += (section.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += k.name.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

std::unique_ptr<problems::Problem> make_problem(const Experiment& exp) {
    validate(exp);
    if (!exp.external) return problems::make_problem(exp.run.problem);
    return std::make_unique<problems::SubprocessProblem>(
        resolved_spec(exp), std::vector<std::string>{"/bin/sh", "-c", exp.external->command},
        exp.external->minimize);
}

}  // namespace morbo::config
