#pragma once

#include <vector>

#include <Eigen/Core>

namespace safetune {

struct SvmOptions {
    double lambda = 1e-2;
    int epochs = 300;
};

/// One-vs-rest linear SVM over standardized features with an appended bias feature.
/// predict() returns the class with the largest margin; ties go to the lowest class id.
class LinearOvrClassifier {
public:
    LinearOvrClassifier() = default;
    /// Rows of `weights` are per-class [w, b] over standardized features.
    LinearOvrClassifier(Eigen::VectorXd mean, Eigen::VectorXd scale, Eigen::MatrixXd weights);

    /// Trains on noise-free labels 0..k-1. Full-batch Pegasos-style subgradient descent.
    static LinearOvrClassifier train(const std::vector<Eigen::VectorXd>& features, const std::vector<int>& labels,
                                     const SvmOptions& options = {});

    int predict(const Eigen::VectorXd& x) const;
    Eigen::VectorXd margins(const Eigen::VectorXd& x) const;
    int classes() const { return classes_; }

private:
    Eigen::VectorXd mean_;
    Eigen::VectorXd scale_;
    Eigen::MatrixXd weights_;
    int classes_ = 1;
};

} // namespace safetune
