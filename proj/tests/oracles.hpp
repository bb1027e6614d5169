#pragma once

#include <cmath>
#include <vector>

#include "mvladdm/gaussian.hpp"
#include "mvladdm/rng.hpp"

namespace mvladdm::testsupport {

// Per-dimension grid integration oracle for the product-of-experts fusion.
// Multiplies the expert densities, divides by the standard-normal density
// (V-1) times, normalizes on the grid, and reads off mean and variance.
// Everything is diagonal, so each dimension integrates independently.
struct GridMoments {
    std::vector<double> mean;
    std::vector<double> variance;
};

inline GridMoments poe_grid_oracle(const std::vector<DiagonalGaussian>& experts,
                                   double half_width = 20.0, int points = 8001) {
    const std::size_t d = experts[0].dim();
    const double step = 2.0 * half_width / (points - 1);
    GridMoments out;
    out.mean.resize(d);
    out.variance.resize(d);
    for (std::size_t dim = 0; dim < d; ++dim) {
        double z = 0.0, m1 = 0.0;
        std::vector<double> weights(points);
        for (int i = 0; i < points; ++i) {
            double x = -half_width + i * step;
            double logw = 0.0;
            for (const DiagonalGaussian& e : experts) {
                double r = x - e.mean[dim];
                logw += -0.5 * (std::log(2.0 * M_PI * e.variance[dim]) + r * r / e.variance[dim]);
            }
            logw -= (static_cast<double>(experts.size()) - 1.0) *
                    (-0.5 * (std::log(2.0 * M_PI) + x * x));
            double w = std::exp(logw);
            weights[i] = w;
            z += w;
            m1 += w * x;
        }
        double mean = m1 / z;
        double m2 = 0.0;
        for (int i = 0; i < points; ++i) {
            double x = -half_width + i * step;
            m2 += weights[i] * (x - mean) * (x - mean);
        }
        out.mean[dim] = mean;
        out.variance[dim] = m2 / z;
    }
    return out;
}

// Monte-Carlo estimate of KL(N(gamma, lambda) || N(0, I)).
inline double kl_monte_carlo(const FusedPosterior& post, long samples, Rng& rng) {
    const std::size_t d = post.dim();
    double acc = 0.0;
    for (long s = 0; s < samples; ++s) {
        double term = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double eps = rng.gaussian();
            double z = post.gamma[i] + std::sqrt(post.lambda[i]) * eps;
            double logq = -0.5 * (std::log(2.0 * M_PI * post.lambda[i]) + eps * eps);
            double logp = -0.5 * (std::log(2.0 * M_PI) + z * z);
            term += logq - logp;
        }
        acc += term;
    }
    return acc / static_cast<double>(samples);
}

// Log density against a quadrature-normalized unnormalized Gaussian.
inline double quadrature_log_density(const std::vector<double>& x, const DiagonalGaussian& g,
                                     double half_width = 20.0, int points = 8001) {
    double out = 0.0;
    const double step = 2.0 * half_width / (points - 1);
    for (std::size_t dim = 0; dim < x.size(); ++dim) {
        double z = 0.0;
        for (int i = 0; i < points; ++i) {
            double u = -half_width + i * step;
            double r = u - g.mean[dim];
            z += std::exp(-0.5 * r * r / g.variance[dim]);
        }
        z *= step;
        double r = x[dim] - g.mean[dim];
        out += -0.5 * r * r / g.variance[dim] - std::log(z);
    }
    return out;
}

inline DiagonalGaussian random_expert(std::size_t d, Rng& rng) {
    DiagonalGaussian g;
    for (std::size_t i = 0; i < d; ++i) {
        g.mean.push_back(rng.uniform(-2.0, 2.0));
        // precision in [1, 3]: matches what the inference nets can emit and
        // keeps every subset fusion valid
        g.variance.push_back(1.0 / rng.uniform(1.0, 3.0));
    }
    return g;
}

}  // namespace mvladdm::testsupport
