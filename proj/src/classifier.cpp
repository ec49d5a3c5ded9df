#include "safetune/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "safetune/knobspace.hpp"

namespace safetune {

LinearOvrClassifier::LinearOvrClassifier(Eigen::VectorXd mean, Eigen::VectorXd scale, Eigen::MatrixXd weights)
    : mean_(std::move(mean)), scale_(std::move(scale)), weights_(std::move(weights)),
      classes_(static_cast<int>(weights_.rows())) {
    if (mean_.size() != scale_.size() || weights_.cols() != mean_.size() + 1) {
        throw InvalidInput("classifier weights do not match feature dimension");
    }
}

LinearOvrClassifier LinearOvrClassifier::train(const std::vector<Eigen::VectorXd>& features,
                                               const std::vector<int>& labels, const SvmOptions& options) {
    if (features.empty() || features.size() != labels.size()) {
        throw InvalidInput("classifier: features and labels must be non-empty and aligned");
    }
    const Eigen::Index d = features.front().size();
    const std::size_t n = features.size();
    int k = 0;
    for (int l : labels) {
        if (l < 0) {
            throw InvalidInput("classifier: noise labels must be resolved before training");
        }
        k = std::max(k, l + 1);
    }

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& f : features) {
        mean += f;
    }
    mean /= static_cast<double>(n);
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(d);
    for (const auto& f : features) {
        scale += (f - mean).cwiseAbs2();
    }
    scale = (scale / static_cast<double>(n)).cwiseSqrt();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(scale[j] > 1e-12)) {
            scale[j] = 1.0;
        }
    }

    // Standardized design matrix with a trailing bias column.
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d + 1);
    for (std::size_t i = 0; i < n; ++i) {
        x.row(static_cast<Eigen::Index>(i)).head(d) = ((features[i] - mean).array() / scale.array()).matrix().transpose();
        x(static_cast<Eigen::Index>(i), d) = 1.0;
    }

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(k, d + 1);
    if (k > 1) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int c = 0; c < k; ++c) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
            for (int t = 1; t <= options.epochs; ++t) {
                const double eta = 1.0 / (options.lambda * t);
                Eigen::VectorXd grad = options.lambda * w;
                for (std::size_t i = 0; i < n; ++i) {
                    const double y = labels[i] == c ? 1.0 : -1.0;
                    const auto row = x.row(static_cast<Eigen::Index>(i));
                    if (y * row.dot(w) < 1.0) {
                        grad -= (y * inv_n) * row.transpose();
                    }
                }
                w -= eta * grad;
            }
            weights.row(c) = w.transpose();
        }
    }
    return LinearOvrClassifier(std::move(mean), std::move(scale), std::move(weights));
}

Eigen::VectorXd LinearOvrClassifier::margins(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size()) {
        throw InvalidInput("classifier: feature dimension mismatch");
    }
    Eigen::VectorXd z(x.size() + 1);
    z.head(x.size()) = (x - mean_).array() / scale_.array();
    z[x.size()] = 1.0;
    return weights_ * z;
}

int LinearOvrClassifier::predict(const Eigen::VectorXd& x) const {
    if (classes_ <= 1) {
        return 0;
    }
    Eigen::VectorXd m = margins(x);
    int best = 0;
    for (int c = 1; c < classes_; ++c) {
        if (m[c] > m[best]) {
            best = c;
        }
    }
    return best;
}

} // namespace safetune
