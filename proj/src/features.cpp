#include "mvladdm/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvladdm {

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

double Volume::at_clamped(int x, int y, int t) const {
    return at(clampi(x, 0, width - 1), clampi(y, 0, height - 1), clampi(t, 0, frames - 1));
}

double Image::at_clamped(int x, int y) const {
    return at(clampi(x, 0, width - 1), clampi(y, 0, height - 1));
}

namespace {

struct Kernel1D {
    std::vector<double> taps;  // centered, length 2r+1
    int radius() const { return (static_cast<int>(taps.size()) - 1) / 2; }
};

// Normalized Gaussian and its second derivative sharing the same
// normalization constant, both zero-mean so constants produce no response.
Kernel1D gaussian_kernel(double sigma) {
    int r = static_cast<int>(std::ceil(3.0 * sigma));
    Kernel1D k;
    k.taps.resize(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        double g = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k.taps[i + r] = g;
        sum += g;
    }
    for (double& t : k.taps) t /= sum;
    return k;
}

Kernel1D gaussian_second_derivative_kernel(double sigma) {
    int r = static_cast<int>(std::ceil(3.0 * sigma));
    Kernel1D k;
    k.taps.resize(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += std::exp(-0.5 * (i * i) / (sigma * sigma));
    for (int i = -r; i <= r; ++i) {
        double g = std::exp(-0.5 * (i * i) / (sigma * sigma)) / sum;
        double s2 = sigma * sigma;
        k.taps[i + r] = ((i * i) / (s2 * s2) - 1.0 / s2) * g;
    }
    double mean = 0.0;
    for (double t : k.taps) mean += t;
    mean /= static_cast<double>(k.taps.size());
    for (double& t : k.taps) t -= mean;
    return k;
}

// Gabor quadrature pair at omega cycles/frame; envelope sigma is one half
// period so the support stays small. Even tap made zero-mean; odd taps are
// antisymmetric by construction.
std::pair<Kernel1D, Kernel1D> gabor_pair(double omega) {
    double tau = 1.0 / (2.0 * omega);
    int r = static_cast<int>(std::ceil(3.0 * tau));
    Kernel1D even, odd;
    even.taps.resize(2 * r + 1);
    odd.taps.resize(2 * r + 1);
    for (int i = 0; i <= r; ++i) {
        double env = std::exp(-0.5 * (i * i) / (tau * tau));
        double ce = std::cos(2.0 * M_PI * omega * i) * env;
        double so = std::sin(2.0 * M_PI * omega * i) * env;
        even.taps[r + i] = ce;
        even.taps[r - i] = ce;
        odd.taps[r + i] = so;
        odd.taps[r - i] = -so;
    }
    double mean = 0.0;
    for (double t : even.taps) mean += t;
    mean /= static_cast<double>(even.taps.size());
    for (double& t : even.taps) t -= mean;
    return {even, odd};
}

enum class Axis { X, Y, T };

// Zero-padded correlation along one axis.
Volume correlate_axis(const Volume& v, const Kernel1D& k, Axis axis) {
    Volume out;
    out.height = v.height;
    out.width = v.width;
    out.frames = v.frames;
    out.data.assign(v.data.size(), 0.0);
    int r = k.radius();
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    int xx = x, yy = y, tt = t;
                    switch (axis) {
                        case Axis::X: xx = x + i; break;
                        case Axis::Y: yy = y + i; break;
                        case Axis::T: tt = t + i; break;
                    }
                    if (xx < 0 || xx >= v.width || yy < 0 || yy >= v.height || tt < 0 ||
                        tt >= v.frames)
                        continue;
                    acc += k.taps[i + r] * v.at(xx, yy, tt);
                }
                out.at(x, y, t) = acc;
            }
    return out;
}

}  // namespace

DetectorKernels detector_kernels(double sigma_spatial, double omega_temporal) {
    auto [even, odd] = gabor_pair(omega_temporal);
    return {gaussian_kernel(sigma_spatial).taps, gaussian_second_derivative_kernel(sigma_spatial).taps,
            even.taps, odd.taps};
}

Volume interest_point_response(const Volume& v, double sigma_spatial, double omega_temporal) {
    if (!(sigma_spatial > 0.0)) throw ShapeMismatch("interest points: sigma_spatial must be > 0");
    if (!(omega_temporal > 0.0 && omega_temporal < 0.5))
        throw ShapeMismatch("interest points: omega_temporal must be in (0, 0.5)");
    Kernel1D g = gaussian_kernel(sigma_spatial);
    Kernel1D gxx = gaussian_second_derivative_kernel(sigma_spatial);
    auto [geven, godd] = gabor_pair(omega_temporal);
    int spatial_support = 2 * g.radius() + 1;
    int temporal_support = 2 * geven.radius() + 1;
    if (v.width < spatial_support || v.height < spatial_support || v.frames < temporal_support)
        throw VolumeTooSmall("interest points: volume smaller than filter support");

    // LoG = d2/dx2 (G) + d2/dy2 (G), applied separably.
    Volume log_xx = correlate_axis(correlate_axis(v, gxx, Axis::X), g, Axis::Y);
    Volume log_yy = correlate_axis(correlate_axis(v, g, Axis::X), gxx, Axis::Y);
    Volume spatial = std::move(log_xx);
    for (std::size_t i = 0; i < spatial.data.size(); ++i) spatial.data[i] += log_yy.data[i];

    Volume even = correlate_axis(spatial, geven, Axis::T);
    Volume odd = correlate_axis(spatial, godd, Axis::T);
    Volume energy = std::move(even);
    for (std::size_t i = 0; i < energy.data.size(); ++i) {
        double e = energy.data[i];
        double o = odd.data[i];
        energy.data[i] = e * e + o * o;
    }
    return energy;
}

std::vector<InterestPoint> detect_interest_points(const Volume& v, double sigma_spatial,
                                                  double omega_temporal, double threshold) {
    if (threshold < 0.0) throw ShapeMismatch("interest points: threshold must be >= 0");
    Volume energy = interest_point_response(v, sigma_spatial, omega_temporal);
    std::vector<InterestPoint> points;
    for (int t = 1; t + 1 < v.frames; ++t)
        for (int y = 1; y + 1 < v.height; ++y)
            for (int x = 1; x + 1 < v.width; ++x) {
                double center = energy.at(x, y, t);
                if (!(center > threshold)) continue;
                bool is_max = true;
                for (int dt = -1; dt <= 1 && is_max; ++dt)
                    for (int dy = -1; dy <= 1 && is_max; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (dx == 0 && dy == 0 && dt == 0) continue;
                            if (!(center > energy.at(x + dx, y + dy, t + dt))) {
                                is_max = false;
                                break;
                            }
                        }
                if (is_max) points.push_back({x, y, t, center});
            }
    std::stable_sort(points.begin(), points.end(),
                     [](const InterestPoint& a, const InterestPoint& b) {
                         return a.response > b.response;
                     });
    return points;
}

std::vector<double> cuboid_gradients(const Volume& v, const InterestPoint& p, int hx, int hy,
                                     int ht) {
    const int nx = 2 * hx + 1, ny = 2 * hy + 1, nt = 2 * ht + 1;
    std::vector<double> desc;
    desc.reserve(3 * static_cast<std::size_t>(nx) * ny * nt);
    // Gx block, then Gy, then Gz; each in (t, y, x) raster order.
    for (int comp = 0; comp < 3; ++comp)
        for (int dt = -ht; dt <= ht; ++dt)
            for (int dy = -hy; dy <= hy; ++dy)
                for (int dx = -hx; dx <= hx; ++dx) {
                    int x = p.x + dx, y = p.y + dy, t = p.t + dt;
                    double g = 0.0;
                    switch (comp) {
                        case 0:
                            g = 0.5 * (v.at_clamped(x + 1, y, t) - v.at_clamped(x - 1, y, t));
                            break;
                        case 1:
                            g = 0.5 * (v.at_clamped(x, y + 1, t) - v.at_clamped(x, y - 1, t));
                            break;
                        case 2:
                            g = 0.5 * (v.at_clamped(x, y, t + 1) - v.at_clamped(x, y, t - 1));
                            break;
                    }
                    desc.push_back(g);
                }
    return desc;
}

std::vector<double> contextual_feature(std::pair<double, double> center,
                                       std::pair<double, double> query) {
    std::vector<double> f = {query.first - center.first, query.second - center.second,
                             query.first, query.second};
    double norm2 = 0.0;
    for (double x : f) norm2 += x * x;
    if (norm2 == 0.0)
        throw DegenerateInput("contextual_feature: zero vector has no direction");
    double inv = 1.0 / std::sqrt(norm2);
    for (double& x : f) x *= inv;
    return f;
}

namespace {

// 3x3 Sobel with replicated borders, 1/8 normalization.
void sobel_gradients(const Image& frame, Image& ix, Image& iy) {
    ix.height = iy.height = frame.height;
    ix.width = iy.width = frame.width;
    ix.data.assign(frame.data.size(), 0.0);
    iy.data.assign(frame.data.size(), 0.0);
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            double tl = frame.at_clamped(x - 1, y - 1), tc = frame.at_clamped(x, y - 1),
                   tr = frame.at_clamped(x + 1, y - 1);
            double ml = frame.at_clamped(x - 1, y), mr = frame.at_clamped(x + 1, y);
            double bl = frame.at_clamped(x - 1, y + 1), bc = frame.at_clamped(x, y + 1),
                   br = frame.at_clamped(x + 1, y + 1);
            ix.at(x, y) = ((tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl)) / 8.0;
            iy.at(x, y) = ((bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr)) / 8.0;
        }
}

}  // namespace

std::vector<std::pair<int, int>> dense_sample(const Image& frame, int step, double eig_threshold) {
    if (step < 1) throw ShapeMismatch("dense_sample: step must be >= 1");
    Image ix, iy;
    sobel_gradients(frame, ix, iy);
    std::vector<std::pair<int, int>> kept;
    for (int y = 0; y < frame.height; y += step)
        for (int x = 0; x < frame.width; x += step) {
            // 3x3 box aggregation of the structure tensor.
            double a = 0.0, b = 0.0, c = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    double gx = ix.at_clamped(x + dx, y + dy);
                    double gy = iy.at_clamped(x + dx, y + dy);
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            double half_trace = 0.5 * (a + c);
            double half_diff = 0.5 * (a - c);
            double lambda_min = half_trace - std::sqrt(half_diff * half_diff + b * b);
            if (lambda_min > eig_threshold) kept.push_back({x, y});
        }
    return kept;
}

namespace {

double median9(double values[9]) {
    std::sort(values, values + 9);
    return values[4];
}

}  // namespace

Trajectory track_trajectory(std::pair<double, double> start, const std::vector<FlowField>& flows,
                            int length, int start_frame) {
    if (length < 1) throw ShapeMismatch("track_trajectory: length must be >= 1");
    if (static_cast<int>(flows.size()) < length)
        throw ShapeMismatch("track_trajectory: flow fields must cover the trajectory length");
    const Image& first = flows[0].dx;
    if (start.first < 0.0 || start.first > first.width - 1 || start.second < 0.0 ||
        start.second > first.height - 1)
        throw OutOfBoundsStart("track_trajectory: start position outside the image");

    Trajectory traj;
    traj.start_frame = start_frame;
    traj.points.push_back(start);
    double cx = start.first, cy = start.second;
    for (int i = 0; i < length; ++i) {
        const FlowField& flow = flows[i];
        int px = static_cast<int>(std::lround(cx));
        int py = static_cast<int>(std::lround(cy));
        double wx[9], wy[9];
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                wx[k] = flow.dx.at_clamped(px + dx, py + dy);
                wy[k] = flow.dy.at_clamped(px + dx, py + dy);
                ++k;
            }
        double mx = median9(wx);
        double my = median9(wy);
        if (std::sqrt(mx * mx + my * my) > kMaxTrackDisplacement) break;  // tracking failure
        double nx = cx + mx, ny = cy + my;
        if (nx < 0.0 || nx > flow.dx.width - 1 || ny < 0.0 || ny > flow.dx.height - 1)
            break;  // leaves the image
        traj.points.push_back({nx, ny});
        cx = nx;
        cy = ny;
    }
    return traj;
}

namespace {

double bilinear(const DescriptorMap& map, double x, double y, int c) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int x1 = std::min(x0 + 1, map.width - 1);
    int y1 = std::min(y0 + 1, map.height - 1);
    double fx = x - x0;
    double fy = y - y0;
    double v00 = map.at(x0, y0, c), v10 = map.at(x1, y0, c);
    double v01 = map.at(x0, y1, c), v11 = map.at(x1, y1, c);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

}  // namespace

std::vector<double> trajectory_pool(const Trajectory& traj, const std::vector<DescriptorMap>& maps,
                                    double map_scale) {
    if (traj.points.empty()) throw ShapeMismatch("trajectory_pool: empty trajectory");
    if (maps.empty()) throw ScaleMismatch("trajectory_pool: no descriptor maps");
    const int channels = maps[0].channels;
    std::vector<double> pooled(channels, 0.0);
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        int frame = traj.start_frame + static_cast<int>(i);
        if (frame < 0 || frame >= static_cast<int>(maps.size()))
            throw ScaleMismatch("trajectory_pool: trajectory extends past the map sequence");
        const DescriptorMap& map = maps[frame];
        if (map.channels != channels)
            throw ScaleMismatch("trajectory_pool: inconsistent channel counts");
        double x = traj.points[i].first * map_scale;
        double y = traj.points[i].second * map_scale;
        if (x < 0.0 || x > map.width - 1 || y < 0.0 || y > map.height - 1)
            throw ScaleMismatch("trajectory_pool: scaled coordinate outside the map");
        for (int c = 0; c < channels; ++c) pooled[c] += bilinear(map, x, y, c);
    }
    double inv = 1.0 / static_cast<double>(traj.points.size());
    for (double& p : pooled) p *= inv;
    return pooled;
}

MultiViewSequence assemble_window_features(const std::vector<RawViewFeatures>& views,
                                           int total_frames, int window_len) {
    if (window_len < 1) throw ShapeMismatch("assemble_window_features: window_len must be >= 1");
    if (total_frames < 1) throw ShapeMismatch("assemble_window_features: need at least one frame");
    for (const RawViewFeatures& view : views)
        for (const FeatureChannel& channel : view.channels)
            for (const TimedDescriptor& d : channel.descriptors)
                if (d.t < 0 || d.t >= total_frames)
                    throw ViewLengthMismatch(
                        "assemble_window_features: descriptor frame index " + std::to_string(d.t) +
                        " outside [0, " + std::to_string(total_frames) + ")");

    const int half_lo = (window_len - 1) / 2;
    const int half_hi = window_len / 2;
    MultiViewSequence seq;
    seq.id = "encoded";
    seq.labels.assign(total_frames, 0);
    seq.views.resize(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        const RawViewFeatures& view = views[v];
        seq.views[v].resize(total_frames);
        for (int f = 0; f < total_frames; ++f) {
            int lo = std::max(0, f - half_lo);
            int hi = std::min(total_frames - 1, f + half_hi);
            std::vector<double> row;
            for (const FeatureChannel& channel : view.channels) {
                std::vector<std::vector<double>> window_points;
                for (const TimedDescriptor& d : channel.descriptors)
                    if (d.t >= lo && d.t <= hi) window_points.push_back(d.values);
                FisherVector fv = fisher_encode(window_points, channel.gmm);
                row.insert(row.end(), fv.values.begin(), fv.values.end());
            }
            seq.views[v][f] = std::move(row);
        }
    }
    return seq;
}

}  // namespace mvladdm
