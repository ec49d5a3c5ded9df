#pragma once

#include <optional>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"

namespace safetune {

/// Hyperparameters of the additive kernel
///   k((x, c), (x', c')) = matern_variance * Matern52(|x - x'| / lengthscales) + linear_variance * <c, c'>
/// noise_variance is the observation noise added to the Gram diagonal.
struct KernelParams {
    Eigen::VectorXd lengthscales;
    double matern_variance = 1.0;
    double linear_variance = 0.1;
    double noise_variance = 1e-2;

    static KernelParams defaults(int dims);
};

/// Box constraints for hyperparameter search.
struct KernelBounds {
    double lengthscale_lo = 1e-2, lengthscale_hi = 10.0;
    double variance_lo = 1e-3, variance_hi = 10.0;
    double noise_lo = 1e-6, noise_hi = 1.0;
};

double matern52(double r);

/// Kernel between two (point, context) inputs. Throws InvalidInput on dimension mismatch.
double kernel(const Point& xa, const Context& ca, const Point& xb, const Context& cb, const KernelParams& params);

struct PosteriorEstimate {
    double mean = 0.0;
    double std = 0.0;
};

struct ConfidenceBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Row-major training data: one row per observation.
struct TrainingSet {
    Eigen::MatrixXd points;   // n x m, normalized configurations
    Eigen::MatrixXd contexts; // n x d
    Eigen::VectorXd targets;  // n, original units

    Eigen::Index size() const { return targets.size(); }
};

struct FitOptions {
    int starts = 3;
    int sweeps = 2;
    /// Replaces the first start when present.
    std::optional<KernelParams> warm_start;
    KernelBounds bounds;
};

/// Log marginal likelihood of standardized targets under the given parameters.
/// Returns -infinity when the Gram matrix cannot be factored.
double log_marginal_likelihood(const TrainingSet& data, const Eigen::VectorXd& standardized_targets,
                               const KernelParams& params);

/// The fixed starting points of the multi-start search (before any warm start replacement).
std::vector<KernelParams> initial_params(int dims, const FitOptions& options);

/// Contextual GP over (configuration, context). Immutable once built.
class GpModel {
public:
    /// Optimizes hyperparameters by multi-start coordinate search on log-parameters, then factors.
    static GpModel fit(TrainingSet data, const FitOptions& options = {});
    /// Factors with the given hyperparameters, no search.
    static GpModel with_params(TrainingSet data, KernelParams params);

    PosteriorEstimate posterior(const Point& point, const Context& context) const;
    /// Posterior for many configurations under one context. Rows of `points` are configurations.
    void posterior_batch(const Eigen::MatrixXd& points, const Context& context, Eigen::VectorXd& mean,
                         Eigen::VectorXd& std) const;
    ConfidenceBounds bounds(const Point& point, const Context& context, double beta) const;

    const KernelParams& params() const { return params_; }
    const TrainingSet& data() const { return data_; }
    const Eigen::VectorXd& standardized_targets() const { return y_std_; }
    double target_mean() const { return target_mean_; }
    double target_std() const { return target_std_; }
    /// Lower Cholesky factor of K + (noise + jitter) I.
    const Eigen::MatrixXd& chol() const { return chol_; }
    double jitter() const { return jitter_; }
    double log_marginal_likelihood() const { return lml_; }
    int dims() const { return static_cast<int>(data_.points.cols()); }

private:
    GpModel() = default;
    void factor();

    TrainingSet data_;
    KernelParams params_;
    Eigen::VectorXd y_std_;
    double target_mean_ = 0.0;
    double target_std_ = 1.0;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
    double lml_ = 0.0;
};

/// Gram matrix K (without noise) over the training inputs.
Eigen::MatrixXd gram_matrix(const TrainingSet& data, const KernelParams& params);

} // namespace safetune
