#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace safetune {

/// Unscrambled Sobol sequence in Gray-code order with Joe-Kuo direction numbers.
/// The first point is the origin.
class SobolSequence {
public:
    static constexpr int kMaxDims = 64;

    explicit SobolSequence(int dims);

    Eigen::VectorXd next();
    int dims() const { return dims_; }

private:
    int dims_;
    std::uint64_t index_ = 0;
    std::vector<std::uint32_t> state_;
    std::vector<std::vector<std::uint32_t>> directions_; // [dim][bit]
};

/// Acklam's rational approximation refined by one Halley step.
double inverse_normal_cdf(double p);

} // namespace safetune
