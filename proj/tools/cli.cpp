#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "morbo/config.hpp"

namespace morbo::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Flags shared by run and replicate.
struct Overrides {
    std::string config_path;
    std::string seed, budget, n0, batch, problem, sampler, n_tr, tau_fail, output_dir, method;
    std::vector<std::string> sets;

    void attach(CLI::App& app) {
        app.add_option("config", config_path, "INI config file");
        app.add_option("--seed", seed, "random seed");
        app.add_option("--budget", budget, "total evaluations nf");
        app.add_option("--n0", n0, "initial design size");
        app.add_option("--batch", batch, "batch size q");
        app.add_option("--problem", problem, "problem name");
        app.add_option("--sampler", sampler, "exact or rff");
        app.add_option("--n-tr", n_tr, "number of trust regions");
        app.add_option("--tau-fail", tau_fail, "failure streak tolerance (or auto)");
        app.add_option("--method", method, "morbo or sobol");
        app.add_option("--output-dir", output_dir, "directory for record files");
        app.add_option("--set", sets, "section.key=value, repeatable")->allow_extra_args(false);
    }

    config::Experiment build() const {
        config::Experiment exp;
        if (!config_path.empty()) exp = config::load(config_path);
        const std::pair<const char*, const std::string*> flags[] = {
            {"run.seed", &seed},         {"run.nf", &budget},
            {"run.n0", &n0},             {"run.q", &batch},
            {"run.problem", &problem},   {"sampler.kind", &sampler},
            {"trust_region.n_tr", &n_tr}, {"trust_region.tau_fail", &tau_fail},
            {"run.method", &method},     {"run.output_dir", &output_dir},
        };
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw InvalidConfig("--set expects key=value, got '" + s + "'");
            config::set_value(exp, s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [key, value] : flags) {
            if (!value->empty()) config::set_value(exp, key, *value);
        }
        return exp;
    }
};

std::string output_dir(const config::Experiment& exp) {
    if (!exp.output_dir.empty()) return exp.output_dir;
    if (const char* env = std::getenv("MORBO_OUTPUT_DIR"); env && *env) return env;
    return ".";
}

std::string base_name(const config::Experiment& exp) {
    return exp.run.problem + "." + exp.method + ".seed" + std::to_string(exp.run.seed);
}

long iterations(const engine::RunRecord& rec) {
    long it = 0;
    for (const auto& o : rec.observations) it = std::max(it, o.iteration);
    return it;
}

std::string summary_text(const engine::RunRecord& rec) {
    std::ostringstream s;
    s << "problem\t" << rec.problem.name << '\n'
      << "method\t" << rec.method << '\n'
      << "seed\t" << rec.config.seed << '\n'
      << "status\t" << (rec.complete ? "complete" : "INCOMPLETE") << '\n';
    if (!rec.error.empty()) s << "error\t" << rec.error << '\n';
    s << "evaluations\t" << rec.observations.size() << " / " << rec.config.nf << '\n'
      << "iterations\t" << iterations(rec) << '\n'
      << "final_hypervolume\t" << fmt(rec.final_hypervolume) << '\n'
      << "front_size\t" << rec.front.size() << '\n';
    return s.str();
}

struct Executed {
    engine::RunRecord record;
    std::string base;
};

Executed execute(config::Experiment exp, std::ostream& out) {
    const auto problem = config::make_problem(exp);
    const std::string dir = output_dir(exp);
    fs::create_directories(dir);
    Executed ex;
    ex.base = (fs::path(dir) / base_name(exp)).string();
    ex.record = exp.method == "sobol" ? engine::run_sobol_baseline(exp.run, *problem)
                                      : engine::run(exp.run, *problem);
    engine::write_record(ex.record, ex.base);
    {
        std::ofstream ini(ex.base + ".config.ini");
        ini << config::to_ini(exp);
    }
    const std::string text = summary_text(ex.record);
    std::ofstream(ex.base + ".summary.txt") << text;
    out << text;
    return ex;
}

void write_table(const std::vector<MethodSummary>& table, std::ostream& out) {
    out << "method\tevaluations\tcount\tmedian\tq25\tq75\n";
    for (const auto& m : table) {
        for (const auto& r : m.rows) {
            out << m.method << '\t' << r.evaluations << '\t' << r.count << '\t' << fmt(r.median)
                << '\t' << fmt(r.q25) << '\t' << fmt(r.q75) << '\n';
        }
    }
}

void write_traces(const std::vector<engine::RunRecord>& records, std::ostream& out) {
    out << "method\tseed\tevaluations\thypervolume\n";
    for (const auto& rec : records) {
        for (const auto& t : rec.trace) {
            out << rec.method << '\t' << rec.config.seed << '\t' << t.evaluations << '\t'
                << fmt(t.hypervolume) << '\n';
        }
    }
}

// Writes `text` to `path`, or to `fallback` when the path is empty.
template <class F>
void emit(const std::string& path, std::ostream& fallback, F&& write) {
    if (path.empty()) {
        write(fallback);
        return;
    }
    std::ofstream f(path);
    if (!f) throw InvalidArgument("cannot write " + path);
    write(f);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string spec = text;
    std::replace(spec.begin(), spec.end(), ',', ' ');
    std::istringstream in(spec);
    for (std::string tok; in >> tok;) {
        const auto dots = tok.find("..");
        try {
            if (dots == std::string::npos) {
                seeds.push_back(std::stoull(tok));
            } else {
                const auto lo = std::stoull(tok.substr(0, dots));
                const auto hi = std::stoull(tok.substr(dots + 2));
                if (hi < lo) throw InvalidConfig("empty seed range " + tok);
                for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
            }
        } catch (const std::logic_error&) {
            throw InvalidConfig("bad seed list '" + text + "'");
        }
    }
    if (seeds.empty()) throw InvalidConfig("no seeds given");
    return seeds;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<MethodSummary> aggregate(const std::vector<engine::RunRecord>& records) {
    if (records.empty()) throw InvalidArgument("no records to aggregate");
    for (const auto& r : records) {
        if (r.problem.name != records.front().problem.name) {
            throw InvalidArgument("records mix problems '" + records.front().problem.name +
                                  "' and '" + r.problem.name + "'");
        }
    }
    std::map<std::string, std::map<long, std::vector<double>>> by_method;
    for (const auto& r : records) {
        auto& boundaries = by_method[r.method];
        for (const auto& t : r.trace) boundaries[t.evaluations].push_back(t.hypervolume);
    }
    std::vector<MethodSummary> out;
    for (const auto& [method, boundaries] : by_method) {
        MethodSummary m{method, {}};
        for (const auto& [n, hv] : boundaries) {
            m.rows.push_back({n, hv.size(), quantile(hv, 0.5), quantile(hv, 0.25), quantile(hv, 0.75)});
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::string record_base(const std::string& path) {
    for (const char* suffix : {".summary.json", ".observations.tsv", ".timings.json",
                               ".summary.txt", ".config.ini"}) {
        const std::string s = suffix;
        if (path.size() > s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0) {
            return path.substr(0, path.size() - s.size());
        }
    }
    return path;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-objective trust-region Bayesian optimization"};
    app.require_subcommand(1);

    Overrides run_opts;
    auto* run = app.add_subcommand("run", "run one optimization and write its record");
    run_opts.attach(*run);

    Overrides rep_opts;
    std::string seeds = "1..5";
    auto* rep = app.add_subcommand("replicate", "run over several seeds and aggregate");
    rep_opts.attach(*rep);
    rep->add_option("--seeds", seeds, "seed list, e.g. 1..5 or 1,3,7")->capture_default_str();

    std::vector<std::string> report_paths;
    std::string report_out, report_trace;
    auto* report = app.add_subcommand("report", "median and quartile hypervolume per method");
    report->add_option("records", report_paths, "record bases or files")->required();
    report->add_option("--output", report_out, "aggregate table (default stdout)");
    report->add_option("--trace", report_trace, "per-record trace file");

    std::string export_path, export_out;
    auto* exp_cmd = app.add_subcommand("export-pareto", "write the final Pareto set");
    exp_cmd->add_option("record", export_path, "record base or file")->required();
    exp_cmd->add_option("--output", export_out, "output file (default <base>.pareto.tsv)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        if (*run) {
            const auto ex = execute(run_opts.build(), out);
            if (!ex.record.complete) {
                err << "run aborted: " << ex.record.error << " (partial record at " << ex.base
                    << ")\n";
                return 1;
            }
            return 0;
        }
        if (*rep) {
            const config::Experiment base = rep_opts.build();
            config::validate(base);
            std::vector<engine::RunRecord> records;
            bool complete = true;
            std::string dir;
            for (const auto seed : parse_seeds(seeds)) {
                config::Experiment exp = base;
                exp.run.seed = seed;
                dir = output_dir(exp);
                auto ex = execute(exp, out);
                complete = complete && ex.record.complete;
                records.push_back(std::move(ex.record));
            }
            const auto table = aggregate(records);
            const std::string path =
                (fs::path(dir) / (base.run.problem + "." + base.method + ".replicate.tsv")).string();
            emit(path, out, [&](std::ostream& o) { write_table(table, o); });
            std::vector<double> finals;
            for (const auto& r : records) finals.push_back(r.final_hypervolume);
            out << "median_final_hypervolume\t" << fmt(quantile(finals, 0.5)) << '\n'
                << "table\t" << path << '\n';
            if (!complete) {
                err << "at least one run aborted; partial records are flagged incomplete\n";
                return 1;
            }
            return 0;
        }
        if (*report) {
            std::vector<engine::RunRecord> records;
            for (const auto& p : report_paths) records.push_back(engine::read_record(record_base(p)));
            const auto table = aggregate(records);
            emit(report_out, out, [&](std::ostream& o) { write_table(table, o); });
            if (!report_trace.empty()) {
                emit(report_trace, out, [&](std::ostream& o) { write_traces(records, o); });
            }
            return 0;
        }
        if (*exp_cmd) {
            const std::string base = record_base(export_path);
            const auto rec = engine::read_record(base);
            IndexVector rows = rec.front;
            std::stable_sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) {
                return rec.observations[static_cast<std::size_t>(a)].objectives(0) <
                       rec.observations[static_cast<std::size_t>(b)].objectives(0);
            });
            const std::string path = export_out.empty() ? base + ".pareto.tsv" : export_out;
            emit(path, out, [&](std::ostream& o) {
                std::string header;
                for (Eigen::Index i = 0; i < rec.problem.d; ++i) header += "x" + std::to_string(i) + '\t';
                for (Eigen::Index i = 0; i < rec.problem.num_objectives; ++i) {
                    header += "f" + std::to_string(i) + (i + 1 < rec.problem.num_objectives ? "\t" : "");
                }
                o << header << '\n';
                for (const auto idx : rows) {
                    const auto& obs = rec.observations[static_cast<std::size_t>(idx)];
                    for (Eigen::Index i = 0; i < obs.x.size(); ++i) o << fmt(obs.x(i)) << '\t';
                    for (Eigen::Index i = 0; i < obs.objectives.size(); ++i) {
                        o << fmt(obs.objectives(i)) << (i + 1 < obs.objectives.size() ? "\t" : "");
                    }
                    o << '\n';
                }
            });
            out << "front_size\t" << rows.size() << '\n' << "file\t" << path << '\n';
            return 0;
        }
    } catch (const InvalidConfig& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidData& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace morbo::cli
