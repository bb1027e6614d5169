#pragma once

#include <cstdint>
#include <vector>

#include "mvladdm/errors.hpp"
#include "mvladdm/rng.hpp"

namespace mvladdm {

// Diagonal-covariance mixture: weights, per-component mean and std vectors.
struct GmmModel {
    std::vector<double> weights;                 // K, sums to 1
    std::vector<std::vector<double>> means;      // K x D
    std::vector<std::vector<double>> stds;       // K x D
    int components() const { return static_cast<int>(weights.size()); }
    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
};

// EM with k-means++ seeding; variances floored at 1e-6. Returns the model and
// appends the data log-likelihood after each iteration to `ll_trace` when
// non-null (nondecreasing up to 1e-9 slack).
GmmModel gmm_fit(const std::vector<std::vector<double>>& points, int k, int max_iters,
                 std::uint64_t seed, std::vector<double>* ll_trace = nullptr);

// Posterior responsibilities gamma(k) of x under the mixture; sums to 1.
std::vector<double> soft_assign(const std::vector<double>& x, const GmmModel& gmm);

struct FisherVector {
    std::vector<double> values;  // 2*K*D: mean half then std half
    bool power_normalized = false;
    bool l2_normalized = false;
};

// Gradient encoding of a point set under the mixture, power-normalized then
// L2-normalized per half. Empty windows encode to the zero vector. Pass
// normalize = false to read the raw gradient statistics.
FisherVector fisher_encode(const std::vector<std::vector<double>>& points, const GmmModel& gmm,
                           bool normalize = true);

struct PcaResult {
    std::vector<std::vector<double>> basis;      // keep x D, orthonormal rows
    std::vector<double> mean;                    // D
    std::vector<std::vector<double>> projected;  // N x keep
    std::vector<double> variances;               // keep, descending
    bool rank_deficient = false;
};

PcaResult pca_fit_transform(const std::vector<std::vector<double>>& points, int keep,
                            std::uint64_t seed);

}  // namespace mvladdm
