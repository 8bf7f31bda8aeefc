#pragma once

#include <optional>
#include <random>

#include "morbo/types.hpp"

namespace morbo::surrogate {

/// Matérn-5/2 ARD kernel parameters. All values live in the standardized
/// target space of the model that owns them.
struct GPHyperparams {
    Vector lengthscales;
    double signal_variance = 1.0;
    double noise_variance = 1e-6;
    double constant_mean = 0.0;

    Eigen::Index dim() const { return lengthscales.size(); }
    void validate(Eigen::Index expected_dim) const;
};

/// Box constraints on the fitted hyperparameters.
struct HyperparamBounds {
    double lengthscale_min = 0.005;
    double lengthscale_max = 4.0;
    double signal_min = 0.05;
    double signal_max = 20.0;
};

struct FitOptions {
    int restarts = 5;
    int max_iterations = 100;
    double noise_variance = 1e-6;
    std::uint64_t seed = 0;
    HyperparamBounds bounds;
    /// Replaces the first restart's starting point when set.
    std::optional<GPHyperparams> warm_start;
};

/// k(a, b) = s (1 + sqrt5 r + 5/3 r^2) exp(-sqrt5 r), r the lengthscale-scaled distance.
Matrix matern52(const Matrix& a, const Matrix& b, const GPHyperparams& hp);

/// Lower Cholesky factor of `a`, adding diagonal jitter 1e-8, 1e-7, ... 1e-4
/// until the factorization succeeds. Throws NumericalError otherwise.
/// `start_with_none` tries the undamped matrix first.
Matrix cholesky_with_jitter(const Matrix& a, double* jitter_used = nullptr,
                            bool start_with_none = true);

/// Exact GP conditioned on a standardized training window. Immutable once
/// built, so concurrent reads are safe.
class GPModel {
public:
    /// Conditions on (inputs, targets) with fixed hyperparameters.
    GPModel(Matrix inputs, const Vector& targets, GPHyperparams hp);

    /// Model with no data; predictions are the prior.
    static GPModel prior(GPHyperparams hp);

    const GPHyperparams& hyperparams() const { return hp_; }
    const Matrix& train_inputs() const { return inputs_; }
    const Vector& train_targets() const { return targets_; }  // standardized
    double target_mean() const { return target_mean_; }
    double target_std() const { return target_std_; }
    const Matrix& chol() const { return chol_; }
    const Vector& alpha() const { return alpha_; }
    double jitter() const { return jitter_; }
    Eigen::Index dim() const { return hp_.dim(); }
    Eigen::Index num_train() const { return inputs_.rows(); }

    /// Log marginal likelihood of the standardized targets.
    double log_marginal_likelihood() const;

private:
    GPModel() = default;

    GPHyperparams hp_;
    Matrix inputs_;
    Vector targets_;
    double target_mean_ = 0.0;
    double target_std_ = 1.0;
    Matrix chol_;
    Vector alpha_;
    double jitter_ = 0.0;
};

/// Log marginal likelihood of already-standardized targets under `hp`, with
/// no jitter. When `gradient` is given it receives the derivative with
/// respect to [log lengthscales..., log signal variance, constant mean].
/// Throws NumericalError if the kernel matrix does not factorize.
double log_marginal_likelihood(const Matrix& inputs, const Vector& std_targets,
                               const GPHyperparams& hp, Vector* gradient = nullptr);

struct FitReport {
    std::vector<double> initial_mll;  // one per restart, at its starting point
    double final_mll = 0.0;
};

/// Fits hyperparameters by multi-start LBFGS on the log marginal likelihood
/// (log-lengthscales, log-signal and the constant mean; noise fixed).
/// Targets are standardized first; constant targets use std = 1.
GPModel fit_gp(const Matrix& inputs, const Vector& targets, const FitOptions& options = {},
               FitReport* report = nullptr);

struct Posterior {
    Vector mean;
    Matrix cov;
};

/// Latent-function posterior at the rows of `x`, in the original target units.
Posterior posterior(const GPModel& model, const Matrix& x);

/// Cached joint posterior over a fixed point set; each draw is one exact
/// joint sample of the latent function at those points.
class JointSampler {
public:
    JointSampler(const GPModel& model, const Matrix& x);

    Vector draw(std::mt19937_64& rng) const;
    const Vector& mean() const { return mean_; }
    Eigen::Index size() const { return mean_.size(); }

private:
    Vector mean_;
    Matrix chol_;  // scaled to original units
};

/// `count` joint draws at the rows of `x`, one per output row.
Matrix sample_joint(const GPModel& model, const Matrix& x, std::mt19937_64& rng,
                    std::size_t count);

/// Deterministic random-Fourier-feature approximation of one posterior draw.
struct RFFSample {
    std::size_t num_features = 0;
    Matrix frequencies;  // num_features x d, already divided by lengthscales
    Vector phases;
    Vector weights;
    GPHyperparams hyperparams;
    double target_mean = 0.0;
    double target_std = 1.0;
};

/// Frequencies come from the Matérn-5/2 spectral density (multivariate
/// Student-t, 5 degrees of freedom); weights are an exact draw from the
/// Bayesian linear model on those features conditioned on the training data.
RFFSample draw_rff(const GPModel& model, std::size_t num_features, std::mt19937_64& rng);

/// Feature matrix (rows of `x` by num_features) of a drawn sample.
Matrix rff_features(const RFFSample& sample, const Matrix& x);

/// Values of the drawn function at the rows of `x`, original target units.
Vector eval_rff(const RFFSample& sample, const Matrix& x);

}  // namespace morbo::surrogate
