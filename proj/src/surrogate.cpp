#include "safetune/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace safetune {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Jitter ladder applied on top of the noise variance: 0, then 1e-10 up to 1e-4.
constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

std::pair<double, double> standardize(const Eigen::VectorXd& y, Eigen::VectorXd& out) {
    const double n = static_cast<double>(y.size());
    double mean = y.mean();
    double var = (y.array() - mean).square().sum() / n;
    double sd = std::sqrt(var);
    if (!(sd > 1e-12)) {
        sd = 1.0;
    }
    out = (y.array() - mean) / sd;
    return {mean, sd};
}

/// Caches per-dimension squared differences so repeated likelihood evaluations only rescale.
class GramCache {
public:
    explicit GramCache(const TrainingSet& data)
        : n_(data.size()), sq_(static_cast<std::size_t>(data.points.cols())), linear_(data.contexts * data.contexts.transpose()) {
        for (Eigen::Index d = 0; d < data.points.cols(); ++d) {
            Eigen::MatrixXd& m = sq_[static_cast<std::size_t>(d)];
            m.resize(n_, n_);
            for (Eigen::Index j = 0; j < n_; ++j) {
                for (Eigen::Index i = 0; i < n_; ++i) {
                    double diff = data.points(i, d) - data.points(j, d);
                    m(i, j) = diff * diff;
                }
            }
        }
    }

    Eigen::MatrixXd gram(const KernelParams& p) const {
        Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(n_, n_);
        for (std::size_t d = 0; d < sq_.size(); ++d) {
            double l = p.lengthscales[static_cast<Eigen::Index>(d)];
            r2.noalias() += sq_[d] * (1.0 / (l * l));
        }
        Eigen::MatrixXd k(n_, n_);
        for (Eigen::Index j = 0; j < n_; ++j) {
            for (Eigen::Index i = 0; i < n_; ++i) {
                k(i, j) = matern52(std::sqrt(r2(i, j)));
            }
        }
        return p.matern_variance * k + p.linear_variance * linear_;
    }

private:
    Eigen::Index n_;
    std::vector<Eigen::MatrixXd> sq_;
    Eigen::MatrixXd linear_;
};

/// Factors K + (noise + jitter) I, escalating jitter. Returns false when every rung fails.
bool factor_with_jitter(const Eigen::MatrixXd& k, double noise, Eigen::MatrixXd& chol, double& jitter_used) {
    const Eigen::Index n = k.rows();
    for (double jitter : kJitterLadder) {
        Eigen::MatrixXd a = k;
        a.diagonal().array() += noise + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            chol = llt.matrixL();
            bool finite = chol.allFinite() && (chol.diagonal().array() > 0.0).all();
            if (finite) {
                jitter_used = jitter;
                return true;
            }
        }
    }
    (void)n;
    return false;
}

double lml_from_factor(const Eigen::MatrixXd& chol, const Eigen::VectorXd& y) {
    Eigen::VectorXd v = chol.triangularView<Eigen::Lower>().solve(y);
    const double n = static_cast<double>(y.size());
    return -0.5 * v.squaredNorm() - chol.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double lml_cached(const GramCache& cache, const Eigen::VectorXd& y, const KernelParams& p) {
    Eigen::MatrixXd chol;
    double jitter = 0.0;
    if (!factor_with_jitter(cache.gram(p), p.noise_variance, chol, jitter)) {
        return kNegInf;
    }
    return lml_from_factor(chol, y);
}

// Log-space parameter vector: [log l_1..l_m, log matern_var, log linear_var, log noise].
Eigen::VectorXd to_log(const KernelParams& p) {
    const Eigen::Index m = p.lengthscales.size();
    Eigen::VectorXd v(m + 3);
    v.head(m) = p.lengthscales.array().log();
    v[m] = std::log(p.matern_variance);
    v[m + 1] = std::log(p.linear_variance);
    v[m + 2] = std::log(p.noise_variance);
    return v;
}

KernelParams from_log(const Eigen::VectorXd& v, Eigen::Index m) {
    KernelParams p;
    p.lengthscales = v.head(m).array().exp();
    p.matern_variance = std::exp(v[m]);
    p.linear_variance = std::exp(v[m + 1]);
    p.noise_variance = std::exp(v[m + 2]);
    return p;
}

KernelParams clamp_params(KernelParams p, const KernelBounds& b) {
    p.lengthscales = p.lengthscales.cwiseMax(b.lengthscale_lo).cwiseMin(b.lengthscale_hi);
    p.matern_variance = std::clamp(p.matern_variance, b.variance_lo, b.variance_hi);
    p.linear_variance = std::clamp(p.linear_variance, b.variance_lo, b.variance_hi);
    p.noise_variance = std::clamp(p.noise_variance, b.noise_lo, b.noise_hi);
    return p;
}

} // namespace

KernelParams KernelParams::defaults(int dims) {
    KernelParams p;
    p.lengthscales = Eigen::VectorXd::Constant(dims, 0.5);
    return p;
}

double matern52(double r) {
    const double s = kSqrt5 * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double kernel(const Point& xa, const Context& ca, const Point& xb, const Context& cb, const KernelParams& params) {
    if (xa.size() != xb.size() || xa.size() != params.lengthscales.size()) {
        throw InvalidInput("kernel: configuration dimension mismatch");
    }
    if (ca.size() != cb.size()) {
        throw InvalidInput("kernel: context dimension mismatch");
    }
    double r = ((xa - xb).array() / params.lengthscales.array()).matrix().norm();
    return params.matern_variance * matern52(r) + params.linear_variance * ca.dot(cb);
}

Eigen::MatrixXd gram_matrix(const TrainingSet& data, const KernelParams& params) {
    return GramCache(data).gram(params);
}

double log_marginal_likelihood(const TrainingSet& data, const Eigen::VectorXd& standardized_targets,
                               const KernelParams& params) {
    return lml_cached(GramCache(data), standardized_targets, params);
}

std::vector<KernelParams> initial_params(int dims, const FitOptions& options) {
    struct Start {
        double l, sf, sl, sn;
    };
    static constexpr Start kStarts[] = {
        {0.5, 1.0, 0.1, 1e-2},
        {0.2, 1.0, 1.0, 1e-1},
        {1.5, 0.5, 1e-2, 1e-3},
    };
    std::vector<KernelParams> out;
    const int count = std::max(1, options.starts);
    for (int s = 0; s < count; ++s) {
        const Start& st = kStarts[s % 3];
        KernelParams p;
        p.lengthscales = Eigen::VectorXd::Constant(dims, st.l * (1.0 + 0.5 * (s / 3)));
        p.matern_variance = st.sf;
        p.linear_variance = st.sl;
        p.noise_variance = st.sn;
        out.push_back(clamp_params(std::move(p), options.bounds));
    }
    if (options.warm_start) {
        if (options.warm_start->lengthscales.size() != dims) {
            throw InvalidInput("warm start has the wrong number of lengthscales");
        }
        out.front() = clamp_params(*options.warm_start, options.bounds);
    }
    return out;
}

GpModel GpModel::fit(TrainingSet data, const FitOptions& options) {
    if (data.size() < 1) {
        throw InvalidInput("cannot fit a GP without observations");
    }
    if (data.points.rows() != data.size() || data.contexts.rows() != data.size()) {
        throw InvalidInput("training set rows are misaligned");
    }
    const Eigen::Index m = data.points.cols();
    Eigen::VectorXd y;
    standardize(data.targets, y);

    const KernelBounds& b = options.bounds;
    Eigen::VectorXd lo(m + 3), hi(m + 3);
    lo.head(m).setConstant(std::log(b.lengthscale_lo));
    hi.head(m).setConstant(std::log(b.lengthscale_hi));
    lo[m] = lo[m + 1] = std::log(b.variance_lo);
    hi[m] = hi[m + 1] = std::log(b.variance_hi);
    lo[m + 2] = std::log(b.noise_lo);
    hi[m + 2] = std::log(b.noise_hi);

    GramCache cache(data);
    KernelParams best_params;
    double best = kNegInf;
    for (const KernelParams& start : initial_params(static_cast<int>(m), options)) {
        Eigen::VectorXd x = to_log(start);
        double fx = lml_cached(cache, y, from_log(x, m));
        double step = std::log(2.0);
        for (int sweep = 0; sweep < options.sweeps; ++sweep, step *= 0.5) {
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                for (double dir : {1.0, -1.0}) {
                    bool moved = false;
                    for (int tries = 0; tries < 4; ++tries) {
                        Eigen::VectorXd cand = x;
                        cand[i] = std::clamp(x[i] + dir * step, lo[i], hi[i]);
                        if (cand[i] == x[i]) {
                            break;
                        }
                        double fc = lml_cached(cache, y, from_log(cand, m));
                        if (!(fc > fx)) {
                            break;
                        }
                        x = cand;
                        fx = fc;
                        moved = true;
                    }
                    if (moved) {
                        break;
                    }
                }
            }
        }
        if (fx > best || best_params.lengthscales.size() == 0) {
            best = fx;
            best_params = from_log(x, m);
        }
    }
    return with_params(std::move(data), std::move(best_params));
}

GpModel GpModel::with_params(TrainingSet data, KernelParams params) {
    if (data.size() < 1) {
        throw InvalidInput("cannot build a GP without observations");
    }
    if (params.lengthscales.size() != data.points.cols()) {
        throw InvalidInput("lengthscale count does not match configuration dimension");
    }
    GpModel model;
    model.data_ = std::move(data);
    model.params_ = std::move(params);
    auto [mean, sd] = standardize(model.data_.targets, model.y_std_);
    model.target_mean_ = mean;
    model.target_std_ = sd;
    model.factor();
    return model;
}

void GpModel::factor() {
    Eigen::MatrixXd k = GramCache(data_).gram(params_);
    if (!factor_with_jitter(k, params_.noise_variance, chol_, jitter_)) {
        throw NumericalError("Gram matrix is not positive definite after jitter escalation");
    }
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_std_);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    lml_ = lml_from_factor(chol_, y_std_);
}

void GpModel::posterior_batch(const Eigen::MatrixXd& points, const Context& context, Eigen::VectorXd& mean,
                              Eigen::VectorXd& std) const {
    const Eigen::Index n = data_.size();
    const Eigen::Index q = points.rows();
    if (points.cols() != data_.points.cols()) {
        throw InvalidInput("posterior: configuration dimension mismatch");
    }
    if (context.size() != data_.contexts.cols()) {
        throw InvalidInput("posterior: context dimension mismatch");
    }
    const Eigen::ArrayXd inv_l = params_.lengthscales.array().inverse();
    const Eigen::VectorXd lin = data_.contexts * context;
    Eigen::MatrixXd ks(n, q);
    for (Eigen::Index j = 0; j < q; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = ((data_.points.row(i) - points.row(j)).array() * inv_l.transpose()).matrix().norm();
            ks(i, j) = params_.matern_variance * matern52(r) + params_.linear_variance * lin[i];
        }
    }
    const double prior = params_.matern_variance + params_.linear_variance * context.squaredNorm();
    Eigen::VectorXd mu = ks.transpose() * alpha_;
    chol_.triangularView<Eigen::Lower>().solveInPlace(ks);
    Eigen::VectorXd var = (prior - ks.colwise().squaredNorm().transpose().array()).max(0.0);
    mean = mu.array() * target_std_ + target_mean_;
    std = var.array().sqrt() * target_std_;
}

PosteriorEstimate GpModel::posterior(const Point& point, const Context& context) const {
    Eigen::VectorXd mean, sd;
    posterior_batch(point.transpose(), context, mean, sd);
    return {mean[0], sd[0]};
}

ConfidenceBounds GpModel::bounds(const Point& point, const Context& context, double beta) const {
    if (beta < 0.0) {
        throw InvalidInput("beta must be nonnegative");
    }
    PosteriorEstimate p = posterior(point, context);
    return {p.mean - beta * p.std, p.mean + beta * p.std};
}

} // namespace safetune
