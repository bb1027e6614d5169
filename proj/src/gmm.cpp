#include "mvladdm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvladdm {

namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_component_density(const std::vector<double>& x, const GmmModel& gmm, int k) {
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        double sd = gmm.stds[k][d];
        double r = (x[d] - gmm.means[k][d]) / sd;
        acc += -0.5 * (kLog2Pi + r * r) - std::log(sd);
    }
    return acc;
}

double point_log_likelihood(const std::vector<double>& x, const GmmModel& gmm,
                            std::vector<double>* log_joint) {
    int k = gmm.components();
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
        double lj = std::log(gmm.weights[j]) + log_component_density(x, gmm, j);
        if (log_joint) (*log_joint)[j] = lj;
        best = std::max(best, lj);
    }
    double acc = 0.0;
    for (int j = 0; j < k; ++j)
        acc += std::exp((log_joint ? (*log_joint)[j] : std::log(gmm.weights[j]) +
                                                           log_component_density(x, gmm, j)) -
                        best);
    return best + std::log(acc);
}

std::vector<std::vector<double>> kmeanspp_centers(const std::vector<std::vector<double>>& points,
                                                  int k, Rng& rng) {
    const int n = static_cast<int>(points.size());
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    centers.push_back(points[rng.below(n)]);
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d2 = 0.0;
            const auto& c = centers.back();
            for (std::size_t j = 0; j < c.size(); ++j) {
                double r = points[i][j] - c[j];
                d2 += r * r;
            }
            dist2[i] = std::min(dist2[i], d2);
            total += dist2[i];
        }
        if (total <= 0.0) {
            // All points coincide with the chosen centers; any point works.
            centers.push_back(points[rng.below(n)]);
            continue;
        }
        double u = rng.uniform() * total;
        double acc = 0.0;
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += dist2[i];
            if (u < acc) {
                chosen = i;
                break;
            }
        }
        centers.push_back(points[chosen]);
    }
    return centers;
}

}  // namespace

GmmModel gmm_fit(const std::vector<std::vector<double>>& points, int k, int max_iters,
                 std::uint64_t seed, std::vector<double>* ll_trace) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw InsufficientData("gmm_fit: k must be >= 1");
    if (n < k) throw InsufficientData("gmm_fit: need at least k points");
    const int dim = static_cast<int>(points[0].size());
    if (dim < 1) throw InsufficientData("gmm_fit: points must have dimension >= 1");
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != dim) throw DimMismatch("gmm_fit: ragged point dimensions");

    Rng rng(seed);
    GmmModel gmm;
    gmm.weights.assign(k, 1.0 / k);
    gmm.means = kmeanspp_centers(points, k, rng);

    // Global per-dimension spread as the starting std for every component.
    std::vector<double> global_mean(dim, 0.0);
    for (const auto& p : points)
        for (int d = 0; d < dim; ++d) global_mean[d] += p[d];
    for (int d = 0; d < dim; ++d) global_mean[d] /= n;
    std::vector<double> global_var(dim, 0.0);
    for (const auto& p : points)
        for (int d = 0; d < dim; ++d) {
            double r = p[d] - global_mean[d];
            global_var[d] += r * r;
        }
    for (int d = 0; d < dim; ++d) global_var[d] = std::max(global_var[d] / n, kVarianceFloor);
    gmm.stds.assign(k, std::vector<double>(dim));
    for (int j = 0; j < k; ++j)
        for (int d = 0; d < dim; ++d) gmm.stds[j][d] = std::sqrt(global_var[d]);

    std::vector<std::vector<double>> resp(n, std::vector<double>(k));
    std::vector<double> log_joint(k);
    for (int iter = 0; iter < max_iters; ++iter) {
        // E-step; also the log-likelihood under the current parameters.
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            double lse = point_log_likelihood(points[i], gmm, &log_joint);
            ll += lse;
            for (int j = 0; j < k; ++j) resp[i][j] = std::exp(log_joint[j] - lse);
        }
        if (ll_trace) ll_trace->push_back(ll);

        // M-step, two-pass variance.
        for (int j = 0; j < k; ++j) {
            double mass = 0.0;
            for (int i = 0; i < n; ++i) mass += resp[i][j];
            if (mass <= 1e-12) continue;  // dead component keeps its parameters
            std::vector<double> mu(dim, 0.0);
            for (int i = 0; i < n; ++i)
                for (int d = 0; d < dim; ++d) mu[d] += resp[i][j] * points[i][d];
            for (int d = 0; d < dim; ++d) mu[d] /= mass;
            std::vector<double> var(dim, 0.0);
            for (int i = 0; i < n; ++i)
                for (int d = 0; d < dim; ++d) {
                    double r = points[i][d] - mu[d];
                    var[d] += resp[i][j] * (r * r);
                }
            for (int d = 0; d < dim; ++d) {
                var[d] /= mass;
                if (var[d] < kVarianceFloor) var[d] = kVarianceFloor;
                gmm.stds[j][d] = std::sqrt(var[d]);
            }
            gmm.means[j] = std::move(mu);
            gmm.weights[j] = mass / n;
        }
        // Keep weights a distribution after any dead-component skips.
        double wsum = 0.0;
        for (double w : gmm.weights) wsum += w;
        for (double& w : gmm.weights) w /= wsum;
    }
    return gmm;
}

std::vector<double> soft_assign(const std::vector<double>& x, const GmmModel& gmm) {
    if (static_cast<int>(x.size()) != gmm.dim())
        throw DimMismatch("soft_assign: point dimension does not match mixture");
    const int k = gmm.components();
    std::vector<double> log_joint(k);
    double lse = point_log_likelihood(x, gmm, &log_joint);
    std::vector<double> gamma(k);
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
        gamma[j] = std::exp(log_joint[j] - lse);
        total += gamma[j];
    }
    for (double& g : gamma) g /= total;
    return gamma;
}

FisherVector fisher_encode(const std::vector<std::vector<double>>& points, const GmmModel& gmm,
                           bool normalize) {
    const int k = gmm.components();
    const int dim = gmm.dim();
    FisherVector fv;
    fv.values.assign(2 * k * dim, 0.0);
    const int n = static_cast<int>(points.size());
    if (n > 0) {
        for (const auto& x : points) {
            if (static_cast<int>(x.size()) != dim)
                throw DimMismatch("fisher_encode: point dimension does not match mixture");
            std::vector<double> gamma = soft_assign(x, gmm);
            for (int j = 0; j < k; ++j) {
                double g = gamma[j];
                if (g == 0.0) continue;
                for (int d = 0; d < dim; ++d) {
                    double sd = gmm.stds[j][d];
                    double u = (x[d] - gmm.means[j][d]) / sd;
                    fv.values[j * dim + d] += g * u;
                    fv.values[k * dim + j * dim + d] += g * (u * u - 1.0);
                }
            }
        }
        for (int j = 0; j < k; ++j) {
            double scale = 1.0 / (n * std::sqrt(gmm.weights[j]));
            for (int d = 0; d < dim; ++d) {
                fv.values[j * dim + d] *= scale;
                fv.values[k * dim + j * dim + d] *= scale;
            }
        }
    }

    if (!normalize) return fv;

    // Power normalization sign(x)*sqrt(|x|), then L2 per half; all-zero
    // halves stay zero.
    for (double& v : fv.values) v = (v < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(v));
    fv.power_normalized = true;
    for (int half = 0; half < 2; ++half) {
        double norm2 = 0.0;
        for (int i = 0; i < k * dim; ++i) {
            double v = fv.values[half * k * dim + i];
            norm2 += v * v;
        }
        if (norm2 > 0.0) {
            double inv = 1.0 / std::sqrt(norm2);
            for (int i = 0; i < k * dim; ++i) fv.values[half * k * dim + i] *= inv;
        }
    }
    fv.l2_normalized = true;
    return fv;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvectors come
// back orthonormal even for zero eigenvalues, which provides the completion
// when the data is rank deficient.
void jacobi_eigen(std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& vecs) {
    const int n = static_cast<int>(a.size());
    vecs.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) vecs[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = vecs[i][p], viq = vecs[i][q];
                    vecs[i][p] = c * vip - s * viq;
                    vecs[i][q] = s * vip + c * viq;
                }
            }
    }
}

}  // namespace

PcaResult pca_fit_transform(const std::vector<std::vector<double>>& points, int keep,
                            std::uint64_t seed) {
    (void)seed;  // deterministic eigensolver; kept for interface stability
    const int n = static_cast<int>(points.size());
    if (n < 1) throw InsufficientData("pca_fit_transform: no points");
    const int dim = static_cast<int>(points[0].size());
    if (keep < 1 || keep > std::min(n, dim))
        throw InsufficientData("pca_fit_transform: keep must be in [1, min(N, D)]");

    PcaResult out;
    out.mean.assign(dim, 0.0);
    for (const auto& p : points) {
        if (static_cast<int>(p.size()) != dim) throw DimMismatch("pca_fit_transform: ragged points");
        for (int d = 0; d < dim; ++d) out.mean[d] += p[d];
    }
    for (int d = 0; d < dim; ++d) out.mean[d] /= n;

    std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
    const double denom = (n > 1) ? (n - 1.0) : 1.0;
    for (const auto& p : points)
        for (int i = 0; i < dim; ++i) {
            double ri = p[i] - out.mean[i];
            for (int j = i; j < dim; ++j) cov[i][j] += ri * (p[j] - out.mean[j]);
        }
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }

    std::vector<std::vector<double>> vecs;
    double trace = 0.0;
    for (int i = 0; i < dim; ++i) trace += cov[i][i];
    jacobi_eigen(cov, vecs);

    std::vector<std::pair<double, int>> order(dim);
    for (int i = 0; i < dim; ++i) order[i] = {cov[i][i], i};
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    double tol = 1e-12 * std::max(trace, 1.0);
    int nonzero = 0;
    for (const auto& [val, idx] : order)
        if (val > tol) ++nonzero;
    out.rank_deficient = nonzero < keep;

    out.basis.assign(keep, std::vector<double>(dim));
    out.variances.resize(keep);
    for (int c = 0; c < keep; ++c) {
        int col = order[c].second;
        out.variances[c] = std::max(order[c].first, 0.0);
        // Deterministic sign: largest-magnitude entry positive.
        int arg = 0;
        for (int d = 1; d < dim; ++d)
            if (std::abs(vecs[d][col]) > std::abs(vecs[arg][col])) arg = d;
        double sign = vecs[arg][col] < 0.0 ? -1.0 : 1.0;
        for (int d = 0; d < dim; ++d) out.basis[c][d] = sign * vecs[d][col];
    }

    out.projected.assign(n, std::vector<double>(keep, 0.0));
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < keep; ++c) {
            double acc = 0.0;
            for (int d = 0; d < dim; ++d) acc += (points[i][d] - out.mean[d]) * out.basis[c][d];
            out.projected[i][c] = acc;
        }
    return out;
}

}  // namespace mvladdm
