#include "morbo/surrogate.hpp"

#include <cmath>
#include <numbers>

#include <ceres/ceres.h>

namespace morbo::surrogate {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917366873128;

Matrix scale_rows(const Matrix& x, const Vector& lengthscales) {
    return x.array().rowwise() / lengthscales.transpose().array();
}

// Squared Euclidean distances between rows of already-scaled inputs.
Matrix squared_distances(const Matrix& za, const Matrix& zb) {
    Matrix d2 = -2.0 * za * zb.transpose();
    d2.colwise() += za.rowwise().squaredNorm();
    d2.rowwise() += zb.rowwise().squaredNorm().transpose();
    return d2.cwiseMax(0.0);
}

Matrix matern_from_sqdist(const Matrix& d2, double signal) {
    return d2.unaryExpr([signal](double s) {
        const double r = std::sqrt(s);
        return signal * (1.0 + kSqrt5 * r + (5.0 / 3.0) * s) * std::exp(-kSqrt5 * r);
    });
}

struct Standardized {
    Vector values;
    double mean = 0.0;
    double std = 1.0;
};

Standardized standardize(const Vector& y) {
    Standardized out;
    const auto n = y.size();
    if (n == 0) return out;
    out.mean = y.mean();
    if (n > 1) {
        const double var = (y.array() - out.mean).square().sum() / static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(out.mean))) out.std = sd;
    }
    out.values = (y.array() - out.mean) / out.std;
    return out;
}

void check_training_data(const Matrix& x, const Vector& y) {
    if (x.rows() != y.size()) {
        throw InvalidArgument("training inputs and targets differ in length");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw InvalidData("training data contains non-finite values");
    }
    constexpr double tol = 1e-9;
    if (x.size() > 0 && (x.minCoeff() < -tol || x.maxCoeff() > 1.0 + tol)) {
        throw InvalidData("training inputs must lie in the unit hypercube");
    }
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double logit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

// Unconstrained parameterization: bounded log-values go through a sigmoid,
// the constant mean is used as is. Layout: [lengthscales..., signal, mean].
struct ParamMap {
    Eigen::Index d;
    double ls_lo, ls_hi, sig_lo, sig_hi;

    explicit ParamMap(Eigen::Index dim, const HyperparamBounds& b)
        : d(dim),
          ls_lo(std::log(b.lengthscale_min)),
          ls_hi(std::log(b.lengthscale_max)),
          sig_lo(std::log(b.signal_min)),
          sig_hi(std::log(b.signal_max)) {}

    Eigen::Index size() const { return d + 2; }

    GPHyperparams decode(const double* u, double noise) const {
        GPHyperparams hp;
        hp.lengthscales.resize(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            hp.lengthscales(k) = std::exp(ls_lo + (ls_hi - ls_lo) * sigmoid(u[k]));
        }
        hp.signal_variance = std::exp(sig_lo + (sig_hi - sig_lo) * sigmoid(u[d]));
        hp.noise_variance = noise;
        hp.constant_mean = u[d + 1];
        return hp;
    }

    Vector encode(const GPHyperparams& hp) const {
        Vector u(size());
        for (Eigen::Index k = 0; k < d; ++k) {
            u(k) = logit((std::log(hp.lengthscales(k)) - ls_lo) / (ls_hi - ls_lo));
        }
        u(d) = logit((std::log(hp.signal_variance) - sig_lo) / (sig_hi - sig_lo));
        u(d + 1) = hp.constant_mean;
        return u;
    }

    // d(log value)/du for the sigmoid-mapped entries.
    double ls_slope(double u) const { return (ls_hi - ls_lo) * sigmoid(u) * (1.0 - sigmoid(u)); }
    double sig_slope(double u) const {
        return (sig_hi - sig_lo) * sigmoid(u) * (1.0 - sigmoid(u));
    }
};

// Negative log marginal likelihood in the unconstrained parameterization.
class NegativeMll final : public ceres::FirstOrderFunction {
public:
    NegativeMll(const Matrix& x, const Vector& y, ParamMap map, double noise)
        : x_(x), y_(y), map_(map), noise_(noise) {}

    int NumParameters() const override { return static_cast<int>(map_.size()); }

    bool Evaluate(const double* u, double* cost, double* gradient) const override {
        const GPHyperparams hp = map_.decode(u, noise_);
        const Eigen::Index d = map_.d;
        Vector g;
        double mll = 0.0;
        try {
            mll = log_marginal_likelihood(x_, y_, hp, gradient != nullptr ? &g : nullptr);
        } catch (const NumericalError&) {
            return false;
        }
        if (!std::isfinite(mll)) return false;
        *cost = -mll;
        if (gradient != nullptr) {
            for (Eigen::Index k = 0; k < d; ++k) gradient[k] = -g(k) * map_.ls_slope(u[k]);
            gradient[d] = -g(d) * map_.sig_slope(u[d]);
            gradient[d + 1] = -g(d + 1);
        }
        return true;
    }

private:
    const Matrix& x_;
    const Vector& y_;
    ParamMap map_;
    double noise_;
};

GPHyperparams default_start(Eigen::Index d, double noise, const HyperparamBounds& b) {
    GPHyperparams hp;
    const double ls = std::clamp(0.25 * std::sqrt(static_cast<double>(d)), 0.1, 2.0);
    hp.lengthscales = Vector::Constant(d, std::clamp(ls, b.lengthscale_min, b.lengthscale_max));
    hp.signal_variance = std::clamp(1.0, b.signal_min, b.signal_max);
    hp.noise_variance = noise;
    hp.constant_mean = 0.0;
    return hp;
}

GPHyperparams random_start(Eigen::Index d, double noise, const HyperparamBounds& b,
                           std::mt19937_64& rng) {
    const double lo = std::log(std::max(b.lengthscale_min, 0.05));
    const double hi = std::log(std::min(b.lengthscale_max, 2.0));
    std::uniform_real_distribution<double> ls_dist(lo, hi);
    std::uniform_real_distribution<double> sig_dist(std::log(0.5), std::log(2.0));
    GPHyperparams hp;
    hp.lengthscales.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) hp.lengthscales(k) = std::exp(ls_dist(rng));
    hp.signal_variance = std::clamp(std::exp(sig_dist(rng)), b.signal_min, b.signal_max);
    hp.noise_variance = noise;
    hp.constant_mean = 0.0;
    return hp;
}

}  // namespace

void GPHyperparams::validate(Eigen::Index expected_dim) const {
    if (lengthscales.size() != expected_dim) {
        throw InvalidArgument("lengthscale count does not match input dimension");
    }
    if ((lengthscales.array() <= 0.0).any() || !(signal_variance > 0.0) ||
        !(noise_variance > 0.0)) {
        throw InvalidArgument("kernel hyperparameters must be strictly positive");
    }
}

Matrix matern52(const Matrix& a, const Matrix& b, const GPHyperparams& hp) {
    const Matrix za = scale_rows(a, hp.lengthscales);
    const Matrix zb = scale_rows(b, hp.lengthscales);
    return matern_from_sqdist(squared_distances(za, zb), hp.signal_variance);
}

Matrix cholesky_with_jitter(const Matrix& a, double* jitter_used, bool start_with_none) {
    double jitter = start_with_none ? 0.0 : 1e-8;
    while (true) {
        Matrix m = a;
        m.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() == Eigen::Success) {
            Matrix l = llt.matrixL();
            if (l.allFinite()) {
                if (jitter_used != nullptr) *jitter_used = jitter;
                return l;
            }
        }
        if (jitter >= 1e-4 * (1.0 - 1e-9)) break;
        jitter = (jitter == 0.0) ? 1e-8 : jitter * 10.0;
    }
    throw NumericalError("Cholesky factorization failed after jitter escalation to 1e-4");
}

GPModel::GPModel(Matrix inputs, const Vector& targets, GPHyperparams hp)
    : hp_(std::move(hp)), inputs_(std::move(inputs)) {
    check_training_data(inputs_, targets);
    hp_.validate(inputs_.cols());
    if (inputs_.rows() == 0) {
        throw PreconditionError("GPModel needs at least one training point; use prior()");
    }
    auto s = standardize(targets);
    targets_ = std::move(s.values);
    target_mean_ = s.mean;
    target_std_ = s.std;

    Matrix k = matern52(inputs_, inputs_, hp_);
    k.diagonal().array() += hp_.noise_variance;
    chol_ = cholesky_with_jitter(k, &jitter_);
    const Vector resid = targets_.array() - hp_.constant_mean;
    alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(
        chol_.triangularView<Eigen::Lower>().solve(resid));
}

GPModel GPModel::prior(GPHyperparams hp) {
    if (!(hp.lengthscales.size() > 0)) throw InvalidArgument("prior model needs a dimension");
    hp.validate(hp.lengthscales.size());
    GPModel m;
    m.inputs_ = Matrix(0, hp.lengthscales.size());
    m.targets_ = Vector(0);
    m.hp_ = std::move(hp);
    m.chol_ = Matrix(0, 0);
    m.alpha_ = Vector(0);
    return m;
}

double GPModel::log_marginal_likelihood() const {
    const auto n = static_cast<double>(num_train());
    const Vector resid = targets_.array() - hp_.constant_mean;
    return -0.5 * resid.dot(alpha_) - chol_.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const Matrix& inputs, const Vector& std_targets,
                               const GPHyperparams& hp, Vector* gradient) {
    const Eigen::Index n = inputs.rows();
    const Eigen::Index d = inputs.cols();

    const Matrix z = scale_rows(inputs, hp.lengthscales);
    Matrix d2 = squared_distances(z, z);
    d2.diagonal().setZero();
    const Matrix r = d2.cwiseSqrt();
    const Matrix e = (-kSqrt5 * r).array().exp().matrix();
    const Matrix kc = ((1.0 + kSqrt5 * r.array() + (5.0 / 3.0) * d2.array()) * e.array()).matrix();
    Matrix k = hp.signal_variance * kc;
    k.diagonal().array() += hp.noise_variance;

    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("kernel matrix is not positive definite");
    }
    const Vector resid = std_targets.array() - hp.constant_mean;
    const Vector alpha = llt.solve(resid);
    const double half_logdet = llt.matrixLLT().diagonal().array().log().sum();
    const double mll = -0.5 * resid.dot(alpha) - half_logdet -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    if (gradient != nullptr) {
        // d mll / d theta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta).
        const Matrix kinv = llt.solve(Matrix::Identity(n, n));
        const Matrix w = alpha * alpha.transpose() - kinv;
        gradient->resize(d + 2);

        // dK/dlog l_k = s 5/3 (1 + sqrt5 r) exp(-sqrt5 r) (dx_k / l_k)^2, so the
        // trace splits into a diagonal term and a quadratic form per dimension.
        const Matrix h = (w.array() * (hp.signal_variance * (5.0 / 3.0)) *
                          (1.0 + kSqrt5 * r.array()) * e.array())
                             .matrix();
        const Vector h_rows = h.rowwise().sum();
        const Vector diag_term = z.array().square().matrix().transpose() * h_rows;
        const Vector quad_term =
            ((z.transpose() * h).array() * z.transpose().array()).rowwise().sum().matrix();
        gradient->head(d) = diag_term - quad_term;
        (*gradient)(d) = 0.5 * hp.signal_variance * (w.array() * kc.array()).sum();
        (*gradient)(d + 1) = alpha.sum();
    }
    return mll;
}

GPModel fit_gp(const Matrix& inputs, const Vector& targets, const FitOptions& options,
               FitReport* report) {
    check_training_data(inputs, targets);
    if (inputs.rows() < 1) throw PreconditionError("fit_gp needs at least one observation");
    const Eigen::Index d = inputs.cols();
    const auto std_targets = standardize(targets);
    const ParamMap map(d, options.bounds);

    std::vector<GPHyperparams> starts;
    const int restarts = std::max(1, options.restarts);
    std::mt19937_64 rng(derive_seed(options.seed, {0x6670u}));
    for (int i = 0; i < restarts; ++i) {
        if (i == 0) {
            if (options.warm_start) {
                GPHyperparams warm = *options.warm_start;
                warm.validate(d);
                warm.noise_variance = options.noise_variance;
                starts.push_back(warm);
            } else {
                starts.push_back(default_start(d, options.noise_variance, options.bounds));
            }
        } else {
            starts.push_back(random_start(d, options.noise_variance, options.bounds, rng));
        }
    }

    ceres::GradientProblemSolver::Options solver_opts;
    solver_opts.line_search_direction_type = ceres::LBFGS;
    solver_opts.max_num_iterations = options.max_iterations;
    solver_opts.logging_type = ceres::SILENT;
    solver_opts.minimizer_progress_to_stdout = false;
    solver_opts.function_tolerance = 1e-8;
    solver_opts.gradient_tolerance = 1e-6;
    solver_opts.parameter_tolerance = 1e-9;

    double best_cost = std::numeric_limits<double>::infinity();
    Vector best_u;
    if (report != nullptr) report->initial_mll.clear();

    for (const auto& start : starts) {
        Vector u = map.encode(start);
        const NegativeMll probe(inputs, std_targets.values, map, options.noise_variance);
        double start_cost = std::numeric_limits<double>::infinity();
        if (!probe.Evaluate(u.data(), &start_cost, nullptr)) {
            start_cost = std::numeric_limits<double>::infinity();
        }
        if (report != nullptr) report->initial_mll.push_back(-start_cost);
        if (start_cost < best_cost) {
            best_cost = start_cost;
            best_u = u;
        }
        if (!std::isfinite(start_cost)) continue;

        ceres::GradientProblem problem(
            new NegativeMll(inputs, std_targets.values, map, options.noise_variance));
        ceres::GradientProblemSolver::Summary summary;
        ceres::Solve(solver_opts, problem, u.data(), &summary);
        double end_cost = std::numeric_limits<double>::infinity();
        if (probe.Evaluate(u.data(), &end_cost, nullptr) && end_cost < best_cost) {
            best_cost = end_cost;
            best_u = u;
        }
    }
    if (best_u.size() == 0) {
        // Every start failed to factorize; fall back to the default start and
        // let the jittered factorization decide.
        best_u = map.encode(default_start(d, options.noise_variance, options.bounds));
    }

    GPModel model(inputs, targets, map.decode(best_u.data(), options.noise_variance));
    if (report != nullptr) report->final_mll = model.log_marginal_likelihood();
    return model;
}

Posterior posterior(const GPModel& model, const Matrix& x) {
    if (x.cols() != model.dim()) throw InvalidArgument("posterior: query dimension mismatch");
    const auto& hp = model.hyperparams();
    Posterior out;
    Matrix cov = matern52(x, x, hp);
    Vector mean = Vector::Constant(x.rows(), hp.constant_mean);
    if (model.num_train() > 0) {
        const Matrix ks = matern52(x, model.train_inputs(), hp);
        mean += ks * model.alpha();
        const Matrix v = model.chol().triangularView<Eigen::Lower>().solve(ks.transpose());
        cov.noalias() -= v.transpose() * v;
    }
    const double sd = model.target_std();
    out.mean = (mean.array() * sd + model.target_mean()).matrix();
    out.cov = cov * (sd * sd);
    return out;
}

JointSampler::JointSampler(const GPModel& model, const Matrix& x) {
    const auto post = posterior(model, x);
    const double sd = model.target_std();
    // Factorize in standardized units so the jitter ladder is scale free.
    const Matrix std_cov = post.cov / (sd * sd);
    chol_ = cholesky_with_jitter(0.5 * (std_cov + std_cov.transpose())) * sd;
    mean_ = post.mean;
}

Vector JointSampler::draw(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    Vector z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    return mean_ + chol_.triangularView<Eigen::Lower>() * z;
}

Matrix sample_joint(const GPModel& model, const Matrix& x, std::mt19937_64& rng,
                    std::size_t count) {
    if (x.rows() < 1) throw PreconditionError("sample_joint needs at least one point");
    const JointSampler sampler(model, x);
    Matrix out(static_cast<Eigen::Index>(count), x.rows());
    for (std::size_t s = 0; s < count; ++s) {
        out.row(static_cast<Eigen::Index>(s)) = sampler.draw(rng).transpose();
    }
    return out;
}

RFFSample draw_rff(const GPModel& model, std::size_t num_features, std::mt19937_64& rng) {
    if (num_features < 1) throw InvalidArgument("draw_rff needs at least one feature");
    const auto& hp = model.hyperparams();
    const Eigen::Index d = model.dim();
    const auto nf = static_cast<Eigen::Index>(num_features);

    RFFSample s;
    s.num_features = num_features;
    s.hyperparams = hp;
    s.target_mean = model.target_mean();
    s.target_std = model.target_std();

    std::normal_distribution<double> normal;
    std::gamma_distribution<double> gamma(2.5, 1.0 / 2.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    s.frequencies.resize(nf, d);
    for (Eigen::Index i = 0; i < nf; ++i) {
        const double scale = 1.0 / std::sqrt(gamma(rng));
        for (Eigen::Index k = 0; k < d; ++k) {
            s.frequencies(i, k) = normal(rng) * scale / hp.lengthscales(k);
        }
    }
    s.phases.resize(nf);
    for (Eigen::Index i = 0; i < nf; ++i) s.phases(i) = phase(rng);

    Vector w0(nf);
    for (Eigen::Index i = 0; i < nf; ++i) w0(i) = normal(rng);
    s.weights = w0;

    const Eigen::Index n = model.num_train();
    if (n > 0) {
        // Exact weight-space posterior draw in its n x n dual form.
        const Matrix phi = rff_features(s, model.train_inputs());
        Vector eps(n);
        const double noise_sd = std::sqrt(hp.noise_variance);
        for (Eigen::Index i = 0; i < n; ++i) eps(i) = noise_sd * normal(rng);
        const Vector resid =
            (model.train_targets().array() - hp.constant_mean).matrix() - phi * w0 - eps;
        Matrix gram = phi * phi.transpose();
        gram.diagonal().array() += hp.noise_variance;
        const Matrix l = cholesky_with_jitter(gram);
        const Vector sol = l.transpose().triangularView<Eigen::Upper>().solve(
            l.triangularView<Eigen::Lower>().solve(resid));
        s.weights = w0 + phi.transpose() * sol;
    }
    return s;
}

Matrix rff_features(const RFFSample& sample, const Matrix& x) {
    if (x.cols() != sample.frequencies.cols()) {
        throw InvalidArgument("rff: query dimension mismatch");
    }
    const double amp = std::sqrt(2.0 * sample.hyperparams.signal_variance /
                                 static_cast<double>(sample.num_features));
    Matrix proj = x * sample.frequencies.transpose();
    proj.rowwise() += sample.phases.transpose();
    return amp * proj.array().cos().matrix();
}

Vector eval_rff(const RFFSample& sample, const Matrix& x) {
    if (x.rows() == 0) return Vector(0);
    const Vector f = (rff_features(sample, x) * sample.weights).array() +
                     sample.hyperparams.constant_mean;
    return (f.array() * sample.target_std + sample.target_mean).matrix();
}

}  // namespace morbo::surrogate
