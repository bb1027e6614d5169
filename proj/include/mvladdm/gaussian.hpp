#pragma once

#include <vector>

#include "mvladdm/errors.hpp"

namespace mvladdm {

// Diagonal Gaussian over a d-dimensional latent. `variance` holds the
// per-coordinate diagonal entries.
struct DiagonalGaussian {
    std::vector<double> mean;
    std::vector<double> variance;

    std::size_t dim() const { return mean.size(); }
    void validate() const;
};

// Result of fusing a subset of view experts: still diagonal Gaussian, with
// mean `gamma` and variance diagonal `lambda`.
struct FusedPosterior {
    std::vector<double> gamma;
    std::vector<double> lambda;
    std::vector<int> members;  // view indices that were fused

    std::size_t dim() const { return gamma.size(); }
};

inline constexpr double kPrecisionFloor = 1e-8;

// Product of the experts divided by (V-1) copies of the standard-normal
// prior. Throws NonPositivePrecision when the precision subtraction lands at
// or below the floor; nets parameterized with precision > 1 per view can
// never trigger this.
FusedPosterior poe_fuse(const std::vector<DiagonalGaussian>& experts,
                        std::vector<int> members = {});

// KL( N(gamma, diag(lambda)) || N(0, I) ).
double kl_to_standard(const FusedPosterior& post);

// gamma + sqrt(lambda) * noise elementwise.
std::vector<double> reparam_sample(const FusedPosterior& post, const std::vector<double>& noise);

double gaussian_log_density(const std::vector<double>& x, const DiagonalGaussian& g);

}  // namespace mvladdm
