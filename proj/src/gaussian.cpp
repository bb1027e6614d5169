#include "mvladdm/gaussian.hpp"

#include <cmath>
#include <numeric>

namespace mvladdm {

void DiagonalGaussian::validate() const {
    if (mean.size() != variance.size())
        throw ShapeMismatch("DiagonalGaussian: mean and variance lengths differ");
    for (double v : variance) {
        if (!(v > 0.0)) throw NonPositivePrecision("DiagonalGaussian: variance must be positive");
    }
}

FusedPosterior poe_fuse(const std::vector<DiagonalGaussian>& experts, std::vector<int> members) {
    if (experts.empty()) throw ShapeMismatch("poe_fuse: need at least one expert");
    const std::size_t d = experts[0].dim();
    for (const DiagonalGaussian& e : experts) {
        e.validate();
        if (e.dim() != d) throw ShapeMismatch("poe_fuse: expert dimensions differ");
    }
    if (members.empty()) {
        members.resize(experts.size());
        std::iota(members.begin(), members.end(), 0);
    }

    FusedPosterior post;
    post.members = std::move(members);

    // Single expert: nothing to fuse, V-1 = 0 prior copies cancel.
    if (experts.size() == 1) {
        post.gamma = experts[0].mean;
        post.lambda = experts[0].variance;
        return post;
    }

    const double excess = static_cast<double>(experts.size()) - 1.0;
    post.gamma.resize(d);
    post.lambda.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        double precision_sum = 0.0;
        double weighted_mean = 0.0;
        for (const DiagonalGaussian& e : experts) {
            double p = 1.0 / e.variance[i];
            precision_sum += p;
            weighted_mean += p * e.mean[i];
        }
        double residual = precision_sum - excess;
        if (!(residual > kPrecisionFloor))
            throw NonPositivePrecision("poe_fuse: prior subtraction left non-positive precision");
        post.lambda[i] = 1.0 / residual;
        post.gamma[i] = post.lambda[i] * weighted_mean;
    }
    return post;
}

double kl_to_standard(const FusedPosterior& post) {
    if (post.gamma.size() != post.lambda.size())
        throw ShapeMismatch("kl_to_standard: gamma and lambda lengths differ");
    // 0.5 * (tr(Lambda) + Gamma^T Gamma - d - log det(Lambda)), accumulated
    // per coordinate in index order. The training graph composes the same
    // expression from elementwise primitives; keeping the association order
    // identical makes the two routes bit-equal.
    double acc = 0.0;
    for (std::size_t i = 0; i < post.lambda.size(); ++i) {
        double lam = post.lambda[i];
        double g = post.gamma[i];
        if (!(lam > 0.0)) throw NonPositivePrecision("kl_to_standard: lambda must be positive");
        acc += 0.5 * (((lam + g * g) - 1.0) - std::log(lam));
    }
    return acc;
}

std::vector<double> reparam_sample(const FusedPosterior& post, const std::vector<double>& noise) {
    if (noise.size() != post.dim())
        throw ShapeMismatch("reparam_sample: noise length does not match posterior dimension");
    std::vector<double> z(post.dim());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = post.gamma[i] + std::sqrt(post.lambda[i]) * noise[i];
    return z;
}

double gaussian_log_density(const std::vector<double>& x, const DiagonalGaussian& g) {
    g.validate();
    if (x.size() != g.dim())
        throw ShapeMismatch("gaussian_log_density: point dimension does not match");
    constexpr double kLog2Pi = 1.8378770664093454835606594728112;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = x[i] - g.mean[i];
        acc += -0.5 * (kLog2Pi + std::log(g.variance[i]) + r * r / g.variance[i]);
    }
    return acc;
}

}  // namespace mvladdm
