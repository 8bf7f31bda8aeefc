#include "morbo/problems.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <sstream>

#include <fcntl.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "morbo/candidates.hpp"

namespace morbo::problems {

void ProblemSpec::validate() const {
    if (d < 1) throw InvalidConfig("problem '" + name + "': dimension must be positive");
    if (num_objectives < 2) throw InvalidConfig("problem '" + name + "': needs >= 2 objectives");
    if (num_constraints < 0) throw InvalidConfig("problem '" + name + "': negative constraint count");
    if (lower.size() != d || upper.size() != d) {
        throw InvalidConfig("problem '" + name + "': bounds do not match the dimension");
    }
    if (!(lower.array() < upper.array()).all()) {
        throw InvalidConfig("problem '" + name + "': lower bound not below upper bound");
    }
    if (ref_point.size() != num_objectives) {
        throw InvalidConfig("problem '" + name + "': reference point length != objectives");
    }
}

Vector ProblemSpec::to_raw(const Vector& unit) const {
    return (lower + unit.cwiseProduct(upper - lower)).cwiseMax(lower).cwiseMin(upper);
}

Vector ProblemSpec::to_unit(const Vector& raw) const {
    return ((raw - lower).cwiseQuotient(upper - lower)).cwiseMax(0.0).cwiseMin(1.0);
}

Problem::Problem(ProblemSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Outcome Problem::evaluate(const Vector& raw) const {
    if (raw.size() != spec_.d) {
        throw InvalidArgument(spec_.name + ": expected " + std::to_string(spec_.d) + " inputs");
    }
    if (!raw.allFinite() || (raw.array() < spec_.lower.array()).any() ||
        (raw.array() > spec_.upper.array()).any()) {
        throw InvalidArgument(spec_.name + ": input outside the bounds");
    }
    return evaluate_raw(raw);
}

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

class Dtlz2 : public Problem {
public:
    explicit Dtlz2(Eigen::Index d)
        : Problem({"dtlz2-" + std::to_string(d), d, 2, 0, Vector::Zero(d), Vector::Ones(d),
                   vec({-6.0, -6.0})}) {}

protected:
    Outcome evaluate_raw(const Vector& x) const override {
        const double g = (x.tail(x.size() - 1).array() - 0.5).square().sum();
        const double angle = 0.5 * std::numbers::pi * x(0);
        return {vec({-(1.0 + g) * std::cos(angle), -(1.0 + g) * std::sin(angle)}), Vector()};
    }
};

class Mw7 : public Problem {
public:
    Mw7() : Problem({"mw7", 10, 2, 2, Vector::Zero(10), Vector::Ones(10), vec({-1.2, -1.2})}) {}

protected:
    Outcome evaluate_raw(const Vector& x) const override {
        const Eigen::Index n = x.size();
        double g = 1.0;
        for (Eigen::Index i = 1; i < n; ++i) {
            const double a = x(i - 1) - 0.5;
            const double t = x(i) + a * a - 1.0;
            g += 2.0 * t * t;
        }
        const double f0 = g * x(0);
        const double f1 = g * std::sqrt(std::max(0.0, 1.0 - x(0) * x(0)));
        const double s = std::sin(4.0 * std::atan2(f1, f0));
        const double r2 = f0 * f0 + f1 * f1;
        const double outer = 1.2 + 0.4 * std::pow(s, 16);
        const double inner = 1.15 - 0.2 * std::pow(s, 8);
        return {vec({-f0, -f1}), vec({r2 - outer * outer, inner * inner - r2})};
    }
};

class WeldedBeam : public Problem {
public:
    WeldedBeam()
        : Problem({"welded-beam", 4, 2, 4, vec({0.125, 0.1, 0.1, 0.125}),
                   vec({5.0, 10.0, 10.0, 5.0}), vec({-40.0, -0.015})}) {}

protected:
    Outcome evaluate_raw(const Vector& x) const override {
        const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3);
        const double f1 = 1.10471 * x1 * x1 * x2 + 0.04811 * x3 * x4 * (14.0 + x2);
        const double f2 = 2.1952 / (x4 * x3 * x3 * x3);

        constexpr double P = 6000.0, L = 14.0, t_max = 13600.0, s_max = 30000.0;
        const double R = std::sqrt(0.25 * (x2 * x2 + (x1 + x3) * (x1 + x3)));
        const double M = P * (L + x2 / 2.0);
        const double J = 2.0 * std::sqrt(0.5) * x1 * x2 *
                         (x2 * x2 / 12.0 + 0.25 * (x1 + x3) * (x1 + x3));
        const double t1 = P / (std::sqrt(2.0) * x1 * x2);
        const double t2 = M * R / J;
        const double t = std::sqrt(t1 * t1 + t1 * t2 * x2 / R + t2 * t2);
        const double s = 6.0 * P * L / (x4 * x3 * x3);
        const double p_c = 64746.022 * (1.0 - 0.0282346 * x3) * x3 * x4 * x4 * x4;
        return {vec({-f1, -f2}), vec({(t - t_max) / t_max, (s - s_max) / s_max,
                                      (x1 - x4) / (5.0 - 0.125), (P - p_c) / P})};
    }
};

class VehicleSafety : public Problem {
public:
    VehicleSafety()
        : Problem({"vehicle-safety", 5, 3, 0, Vector::Ones(5), Vector::Constant(5, 3.0),
                   vec({-1698.55, -11.21, -0.29})}) {}

protected:
    Outcome evaluate_raw(const Vector& x) const override {
        const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3), x5 = x(4);
        const double f1 = 1640.2823 + 2.3573285 * x1 + 2.3220035 * x2 + 4.5688768 * x3 +
                          7.7213633 * x4 + 4.4559504 * x5;
        const double f2 = 6.5856 + 1.15 * x1 - 1.0427 * x2 + 0.9738 * x3 + 0.8364 * x4 -
                          0.3695 * x1 * x4 + 0.0861 * x1 * x5 + 0.3628 * x2 * x4 -
                          0.1106 * x1 * x1 - 0.3437 * x3 * x3 + 0.1764 * x4 * x4;
        const double f3 = -0.0551 + 0.0181 * x1 + 0.1024 * x2 + 0.0421 * x3 - 0.0073 * x1 * x2 +
                          0.024 * x2 * x3 - 0.0118 * x2 * x4 - 0.0204 * x3 * x4 -
                          0.008 * x3 * x5 - 0.0241 * x2 * x2 + 0.0109 * x4 * x4;
        return {vec({-f1, -f2, -f3}), Vector()};
    }
};

}  // namespace

std::unique_ptr<Problem> dtlz2(Eigen::Index d) {
    if (d < 2) throw InvalidConfig("dtlz2: needs at least 2 inputs");
    return std::make_unique<Dtlz2>(d);
}
std::unique_ptr<Problem> mw7() { return std::make_unique<Mw7>(); }
std::unique_ptr<Problem> welded_beam() { return std::make_unique<WeldedBeam>(); }
std::unique_ptr<Problem> vehicle_safety() { return std::make_unique<VehicleSafety>(); }

std::vector<std::string> builtin_names() {
    return {"dtlz2-10", "dtlz2-30", "dtlz2-100", "mw7", "welded-beam", "vehicle-safety"};
}

std::unique_ptr<Problem> make_problem(const std::string& name) {
    if (name == "dtlz2-10") return dtlz2(10);
    if (name == "dtlz2-30") return dtlz2(30);
    if (name == "dtlz2-100") return dtlz2(100);
    if (name == "mw7") return mw7();
    if (name == "welded-beam") return welded_beam();
    if (name == "vehicle-safety") return vehicle_safety();
    throw InvalidConfig("unknown problem '" + name + "'");
}

SubprocessProblem::SubprocessProblem(ProblemSpec spec, std::vector<std::string> argv,
                                     bool minimize)
    : Problem(std::move(spec)), argv_(std::move(argv)), minimize_(minimize) {
    if (argv_.empty()) throw InvalidConfig("subprocess problem: empty command");
    int in_pair[2];
    int out_pipe[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0) {
        throw EvaluationError("subprocess problem: socketpair failed");
    }
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        close(in_pair[0]);
        close(in_pair[1]);
        throw EvaluationError("subprocess problem: pipe failed");
    }
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) throw EvaluationError("subprocess problem: fork failed");
    if (pid == 0) {
        dup2(in_pair[1], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        execvp(args[0], args.data());
        _exit(127);
    }
    close(in_pair[1]);
    close(out_pipe[1]);
    pid_ = pid;
    to_child_ = in_pair[0];
    from_child_ = fdopen(out_pipe[0], "r");
}

SubprocessProblem::~SubprocessProblem() { shutdown(); }

void SubprocessProblem::shutdown() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_) std::fclose(from_child_);
    to_child_ = -1;
    from_child_ = nullptr;
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

Outcome SubprocessProblem::evaluate_raw(const Vector& raw) const {
    std::lock_guard lock(mutex_);
    if (to_child_ < 0 || !from_child_) throw EvaluationError("subprocess problem: child not running");

    std::string line;
    char buf[32];
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", raw(j));
        if (j) line += ' ';
        line += buf;
    }
    line += '\n';
    for (std::size_t sent = 0; sent < line.size();) {
        const ssize_t n = send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) throw EvaluationError("subprocess problem: child closed its input");
        sent += static_cast<std::size_t>(n);
    }

    char* reply = nullptr;
    std::size_t cap = 0;
    const ssize_t got = getline(&reply, &cap, from_child_);
    std::string text = got > 0 ? std::string(reply, static_cast<std::size_t>(got)) : std::string();
    std::free(reply);
    if (got <= 0) throw EvaluationError("subprocess problem: no reply from child");

    const Eigen::Index m = spec().num_objectives;
    const Eigen::Index c = spec().num_constraints;
    std::istringstream in(text);
    std::vector<double> values;
    std::string token;
    while (in >> token) {
        try {
            values.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw EvaluationError("subprocess problem: unparsable value '" + token + "'");
        }
    }
    if (static_cast<Eigen::Index>(values.size()) != m + c) {
        throw EvaluationError("subprocess problem: expected " + std::to_string(m + c) +
                              " values, got " + std::to_string(values.size()));
    }
    Outcome out{Vector(m), Vector(c)};
    for (Eigen::Index k = 0; k < m; ++k) out.objectives(k) = values[static_cast<std::size_t>(k)];
    for (Eigen::Index k = 0; k < c; ++k) out.constraints(k) = values[static_cast<std::size_t>(m + k)];
    if (minimize_) out.objectives = -out.objectives;
    return out;
}

Matrix initial_design(const ProblemSpec& spec, std::size_t n0, std::uint64_t seed) {
    const Matrix unit = candidates::sobol(n0, spec.d, seed);
    Matrix raw(unit.rows(), unit.cols());
    for (Eigen::Index i = 0; i < unit.rows(); ++i) raw.row(i) = spec.to_raw(unit.row(i).transpose()).transpose();
    return raw;
}

}  // namespace morbo::problems
