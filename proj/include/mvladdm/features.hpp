#pragma once

#include <utility>
#include <vector>

#include "mvladdm/dataset.hpp"
#include "mvladdm/errors.hpp"
#include "mvladdm/gmm.hpp"

namespace mvladdm {

// Grayscale video volume, frame-major storage.
struct Volume {
    int height = 0;
    int width = 0;
    int frames = 0;
    std::vector<double> data;

    double at(int x, int y, int t) const {
        return data[(static_cast<std::size_t>(t) * height + y) * width + x];
    }
    double& at(int x, int y, int t) {
        return data[(static_cast<std::size_t>(t) * height + y) * width + x];
    }
    // Clamped access (edge replication).
    double at_clamped(int x, int y, int t) const;
};

// Single grayscale frame or one flow component.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at_clamped(int x, int y) const;
};

struct FlowField {
    Image dx;
    Image dy;
};

// Per-frame C-channel map, channel-innermost storage.
struct DescriptorMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

struct InterestPoint {
    int x = 0;
    int y = 0;
    int t = 0;
    double response = 0.0;
};

struct Trajectory {
    std::vector<std::pair<double, double>> points;  // (x, y), one per frame
    int start_frame = 0;
    int scale = 0;
};

// Spatial LoG + temporal Gabor quadrature energy; strict 3x3x3 local maxima
// above threshold, sorted by descending response.
std::vector<InterestPoint> detect_interest_points(const Volume& v, double sigma_spatial,
                                                  double omega_temporal, double threshold);

// The full energy volume behind detect_interest_points (zero-padded
// convolutions); exposed so tests can compare against a dense 3-D oracle.
Volume interest_point_response(const Volume& v, double sigma_spatial, double omega_temporal);

// Centered filter taps used by the detector, for building dense reference
// kernels.
struct DetectorKernels {
    std::vector<double> gaussian;
    std::vector<double> gaussian_second;
    std::vector<double> gabor_even;
    std::vector<double> gabor_odd;
};
DetectorKernels detector_kernels(double sigma_spatial, double omega_temporal);

// Concatenated central-difference gradients [Gx | Gy | Gz] over the cuboid
// centered at p, replicated at volume edges.
std::vector<double> cuboid_gradients(const Volume& v, const InterestPoint& p, int hx, int hy,
                                     int ht);

// [Xq-Xc, Yq-Yc, Xq, Yq] normalized to unit L2.
std::vector<double> contextual_feature(std::pair<double, double> center,
                                       std::pair<double, double> query);

// Grid points whose structure-tensor smaller eigenvalue exceeds the
// threshold (3x3 Sobel gradients, 3x3 box aggregation).
std::vector<std::pair<int, int>> dense_sample(const Image& frame, int step, double eig_threshold);

// Median-filtered flow following from `start` for up to L steps; truncated at
// the image boundary or when one step exceeds the displacement cutoff.
Trajectory track_trajectory(std::pair<double, double> start, const std::vector<FlowField>& flows,
                            int length, int start_frame = 0);

inline constexpr double kMaxTrackDisplacement = 8.0;

// Mean of bilinearly sampled map values along the trajectory, per channel.
std::vector<double> trajectory_pool(const Trajectory& traj, const std::vector<DescriptorMap>& maps,
                                    double map_scale);

// One descriptor stream feeding a fitted mixture.
struct TimedDescriptor {
    int t = 0;
    std::vector<double> values;
};

struct FeatureChannel {
    GmmModel gmm;
    std::vector<TimedDescriptor> descriptors;
};

struct RawViewFeatures {
    std::vector<FeatureChannel> channels;
};

// Per frame and view, Fisher-encodes every channel over the window centered
// at that frame and concatenates the channel encodings. Labels are zeroed;
// callers attach ground truth separately when they have it.
MultiViewSequence assemble_window_features(const std::vector<RawViewFeatures>& views,
                                           int total_frames, int window_len);

}  // namespace mvladdm
