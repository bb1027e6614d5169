#include <doctest.h>

#include <cmath>

#include "mvladdm/features.hpp"
#include "mvladdm/rng.hpp"

using namespace mvladdm;

namespace {

Volume make_volume(int w, int h, int t) {
    Volume v;
    v.width = w;
    v.height = h;
    v.frames = t;
    v.data.assign(static_cast<std::size_t>(w) * h * t, 0.0);
    return v;
}

Volume random_volume(int w, int h, int t, Rng& rng) {
    Volume v = make_volume(w, h, t);
    for (double& x : v.data) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Dense 3-D correlation oracle: kernel(x, y, t) applied literally.
Volume dense_correlate(const Volume& v, const std::vector<std::vector<std::vector<double>>>& ker,
                       int rx, int ry, int rt) {
    Volume out = v;
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
                double acc = 0.0;
                for (int dt = -rt; dt <= rt; ++dt)
                    for (int dy = -ry; dy <= ry; ++dy)
                        for (int dx = -rx; dx <= rx; ++dx) {
                            int xx = x + dx, yy = y + dy, tt = t + dt;
                            if (xx < 0 || xx >= v.width || yy < 0 || yy >= v.height || tt < 0 ||
                                tt >= v.frames)
                                continue;
                            acc += ker[dt + rt][dy + ry][dx + rx] * v.at(xx, yy, tt);
                        }
                out.at(x, y, t) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("constant volume has no interest points or gradients") {
    Volume v = make_volume(16, 16, 16);
    for (double& x : v.data) x = 3.7;
    CHECK(detect_interest_points(v, 1.2, 0.25, 0.0).empty());

    auto desc = cuboid_gradients(v, {8, 8, 8, 0.0}, 2, 2, 1);
    for (double g : desc) CHECK(g == 0.0);
}

TEST_CASE("volume smaller than the filter support is rejected") {
    Volume v = make_volume(4, 4, 4);
    CHECK_THROWS_AS(detect_interest_points(v, 1.2, 0.25, 0.0), VolumeTooSmall);
}

TEST_CASE("a flashing blob is detected at its center") {
    const double omega = 0.25;
    Volume v = make_volume(16, 16, 24);
    const double cx = 8, cy = 8, ct = 12;
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
                double spatial =
                    std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * 1.5 * 1.5));
                double burst = std::exp(-(t - ct) * (t - ct) / (2.0 * 3.0 * 3.0)) *
                               std::cos(2.0 * M_PI * omega * (t - ct));
                v.at(x, y, t) = spatial * burst;
            }
    auto all = detect_interest_points(v, 1.5, omega, 0.0);
    REQUIRE_FALSE(all.empty());
    double top = all[0].response;
    auto points = detect_interest_points(v, 1.5, omega, 0.5 * top);
    REQUIRE(points.size() == 1);
    CHECK(std::abs(points[0].x - cx) <= 1);
    CHECK(std::abs(points[0].y - cy) <= 1);
    CHECK(std::abs(points[0].t - ct) <= 1);
}

TEST_CASE("separable response equals dense 3-D convolution") {
    Rng rng(14);
    Volume v = random_volume(16, 16, 16, rng);
    const double sigma = 1.2, omega = 0.3;
    Volume fast = interest_point_response(v, sigma, omega);

    DetectorKernels k = detector_kernels(sigma, omega);
    int rs = (static_cast<int>(k.gaussian.size()) - 1) / 2;
    int rt = (static_cast<int>(k.gabor_even.size()) - 1) / 2;

    auto build = [&](const std::vector<double>& temporal) {
        std::vector<std::vector<std::vector<double>>> ker(
            2 * rt + 1, std::vector<std::vector<double>>(2 * rs + 1,
                                                         std::vector<double>(2 * rs + 1, 0.0)));
        for (int dt = 0; dt <= 2 * rt; ++dt)
            for (int dy = 0; dy <= 2 * rs; ++dy)
                for (int dx = 0; dx <= 2 * rs; ++dx)
                    ker[dt][dy][dx] = temporal[dt] * (k.gaussian_second[dx] * k.gaussian[dy] +
                                                      k.gaussian[dx] * k.gaussian_second[dy]);
        return ker;
    };
    Volume even = dense_correlate(v, build(k.gabor_even), rs, rs, rt);
    Volume odd = dense_correlate(v, build(k.gabor_odd), rs, rs, rt);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        double want = even.data[i] * even.data[i] + odd.data[i] * odd.data[i];
        CHECK(fast.data[i] == doctest::Approx(want).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("detections shift with the volume") {
    const double omega = 0.25, sigma = 1.5;
    auto blob_volume = [&](double cx, double cy, double ct) {
        Volume v = make_volume(24, 24, 30);
        for (int t = 0; t < v.frames; ++t)
            for (int y = 0; y < v.height; ++y)
                for (int x = 0; x < v.width; ++x) {
                    double spatial =
                        std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * 1.5 * 1.5));
                    double burst = std::exp(-(t - ct) * (t - ct) / (2.0 * 3.0 * 3.0)) *
                                   std::cos(2.0 * M_PI * omega * (t - ct));
                    v.at(x, y, t) = spatial * burst;
                }
        return v;
    };
    auto a = detect_interest_points(blob_volume(10, 11, 13), sigma, omega, 1e-6);
    auto b = detect_interest_points(blob_volume(13, 12, 16), sigma, omega, 1e-6);
    REQUIRE_FALSE(a.empty());
    REQUIRE_FALSE(b.empty());
    CHECK(b[0].x - a[0].x == 3);
    CHECK(b[0].y - a[0].y == 1);
    CHECK(b[0].t - a[0].t == 3);
}

TEST_CASE("cuboid gradients of a linear ramp") {
    Volume v = make_volume(12, 12, 8);
    const double slope = 0.75;
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) v.at(x, y, t) = slope * x;
    // Interior cuboid: Gx = slope, Gy = Gz = 0 everywhere inside.
    auto desc = cuboid_gradients(v, {6, 6, 4, 0.0}, 2, 2, 1);
    const int block = 5 * 5 * 3;
    for (int i = 0; i < block; ++i) CHECK(desc[i] == doctest::Approx(slope).epsilon(1e-15));
    for (int i = block; i < 3 * block; ++i) CHECK(desc[i] == 0.0);
}

TEST_CASE("cuboid gradients match a direct-indexing oracle") {
    Rng rng(40);
    Volume v = random_volume(10, 9, 8, rng);
    InterestPoint p{4, 5, 3, 0.0};
    const int hx = 2, hy = 1, ht = 2;
    auto desc = cuboid_gradients(v, p, hx, hy, ht);
    auto clamp = [](int a, int hi) { return a < 0 ? 0 : (a > hi ? hi : a); };
    std::size_t idx = 0;
    for (int comp = 0; comp < 3; ++comp)
        for (int dt = -ht; dt <= ht; ++dt)
            for (int dy = -hy; dy <= hy; ++dy)
                for (int dx = -hx; dx <= hx; ++dx) {
                    int x = p.x + dx, y = p.y + dy, t = p.t + dt;
                    double want = 0.0;
                    if (comp == 0)
                        want = 0.5 * (v.at(clamp(x + 1, 9), y, t) - v.at(clamp(x - 1, 9), y, t));
                    if (comp == 1)
                        want = 0.5 * (v.at(x, clamp(y + 1, 8), t) - v.at(x, clamp(y - 1, 8), t));
                    if (comp == 2)
                        want = 0.5 * (v.at(x, y, clamp(t + 1, 7)) - v.at(x, y, clamp(t - 1, 7)));
                    CHECK(desc[idx++] == want);
                }
}

TEST_CASE("contextual feature directions") {
    auto f = contextual_feature({0.0, 0.0}, {3.0, 4.0});
    double norm = std::sqrt(50.0);
    CHECK(f[0] == doctest::Approx(3.0 / norm));
    CHECK(f[1] == doctest::Approx(4.0 / norm));
    CHECK(f[2] == doctest::Approx(3.0 / norm));
    CHECK(f[3] == doctest::Approx(4.0 / norm));

    auto self = contextual_feature({2.0, 0.0}, {2.0, 0.0});
    CHECK(self == std::vector<double>{0.0, 0.0, 1.0, 0.0});

    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = contextual_feature({rng.uniform(-5, 5), rng.uniform(-5, 5)},
                                    {rng.uniform(-5, 5), rng.uniform(-5, 5)});
        double n = 0.0;
        for (double x : g) n += x * x;
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(contextual_feature({0.0, 0.0}, {0.0, 0.0}), DegenerateInput);
}

TEST_CASE("dense sampling keeps textured points and drops flat ones") {
    Image flat;
    flat.width = 20;
    flat.height = 20;
    flat.data.assign(400, 5.0);
    CHECK(dense_sample(flat, 5, 0.0).empty());

    // 2x2 checkerboard: every 3x3 window straddles block corners.
    Image checker;
    checker.width = 20;
    checker.height = 20;
    checker.data.resize(400);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x)
            checker.at(x, y) = ((x / 2 + y / 2) % 2 == 0) ? 1.0 : -1.0;

    auto kept = dense_sample(checker, 2, 1e-9);
    CHECK(kept.size() == 100);  // all grid points survive

    // Independent closed-form eigen oracle on the same structure tensor.
    auto ix = [&](int x, int y) {
        auto c = [&](int a, int b) { return checker.at_clamped(a, b); };
        return ((c(x + 1, y - 1) + 2 * c(x + 1, y) + c(x + 1, y + 1)) -
                (c(x - 1, y - 1) + 2 * c(x - 1, y) + c(x - 1, y + 1))) /
               8.0;
    };
    auto iy = [&](int x, int y) {
        auto c = [&](int a, int b) { return checker.at_clamped(a, b); };
        return ((c(x - 1, y + 1) + 2 * c(x, y + 1) + c(x + 1, y + 1)) -
                (c(x - 1, y - 1) + 2 * c(x, y - 1) + c(x + 1, y - 1))) /
               8.0;
    };
    for (auto [x, y] : kept) {
        double a = 0, b = 0, c2 = 0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int px = std::min(std::max(x + dx, 0), 19);
                int py = std::min(std::max(y + dy, 0), 19);
                double gx = ix(px, py), gy = iy(px, py);
                a += gx * gx;
                b += gx * gy;
                c2 += gy * gy;
            }
        double lam_min = 0.5 * (a + c2) - std::sqrt(0.25 * (a - c2) * (a - c2) + b * b);
        CHECK(lam_min > 1e-9);
    }

    auto sparse = dense_sample(checker, 20, 1e-9);
    CHECK(sparse.size() <= 1);
}

namespace {

std::vector<FlowField> constant_flow(int w, int h, int frames, double fx, double fy) {
    std::vector<FlowField> flows(frames);
    for (auto& f : flows) {
        f.dx.width = f.dy.width = w;
        f.dx.height = f.dy.height = h;
        f.dx.data.assign(static_cast<std::size_t>(w) * h, fx);
        f.dy.data.assign(static_cast<std::size_t>(w) * h, fy);
    }
    return flows;
}

}  // namespace

TEST_CASE("tracking follows the flow") {
    auto flows = constant_flow(12, 12, 3, 2.0, 0.0);
    Trajectory traj = track_trajectory({0.0, 0.0}, flows, 3);
    REQUIRE(traj.points.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(traj.points[i].first == doctest::Approx(2.0 * i));
        CHECK(traj.points[i].second == 0.0);
    }

    auto still = track_trajectory({5.0, 5.0}, constant_flow(12, 12, 5, 0.0, 0.0), 5);
    for (auto [x, y] : still.points) {
        CHECK(x == 5.0);
        CHECK(y == 5.0);
    }

    CHECK_THROWS_AS(track_trajectory({-1.0, 0.0}, flows, 3), OutOfBoundsStart);
}

TEST_CASE("median filtering rejects salt noise in the flow") {
    auto flows = constant_flow(12, 12, 1, 1.5, -0.5);
    flows[0].dx.at(5, 5) = 50.0;  // corrupted pixel right at the start
    flows[0].dy.at(5, 5) = -50.0;
    Trajectory traj = track_trajectory({5.0, 5.0}, flows, 1);
    REQUIRE(traj.points.size() == 2);
    CHECK(traj.points[1].first == doctest::Approx(6.5));
    CHECK(traj.points[1].second == doctest::Approx(4.5));
}

TEST_CASE("trajectories truncate at the boundary and on large jumps") {
    auto flows = constant_flow(10, 10, 8, 3.0, 0.0);
    Trajectory traj = track_trajectory({0.0, 4.0}, flows, 8);
    CHECK(traj.points.size() == 4);  // 0, 3, 6, 9; next would leave the image

    auto wild = constant_flow(10, 10, 4, 9.0, 0.0);
    Trajectory cut = track_trajectory({0.0, 4.0}, wild, 4);
    CHECK(cut.points.size() == 1);  // displacement beyond the failure cutoff
}

TEST_CASE("time-reversed tracking returns to the start") {
    // Mildly varying field; reversing the flow retraces the path within a
    // pixel of rounding slack.
    int w = 40, h = 40;
    std::vector<FlowField> forward(6), backward(6);
    for (int t = 0; t < 6; ++t) {
        forward[t].dx.width = backward[t].dx.width = w;
        forward[t].dx.height = backward[t].dx.height = h;
        forward[t].dy = forward[t].dx;
        backward[t].dy = backward[t].dx;
        forward[t].dx.data.resize(static_cast<std::size_t>(w) * h);
        forward[t].dy.data.resize(forward[t].dx.data.size());
        backward[t].dx.data.resize(forward[t].dx.data.size());
        backward[t].dy.data.resize(forward[t].dx.data.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double fx = 1.2 + 0.01 * x;
                double fy = 0.8 - 0.01 * y;
                forward[t].dx.at(x, y) = fx;
                forward[t].dy.at(x, y) = fy;
                backward[t].dx.at(x, y) = -fx;
                backward[t].dy.at(x, y) = -fy;
            }
    }
    Trajectory out = track_trajectory({10.0, 20.0}, forward, 6);
    REQUIRE(out.points.size() == 7);
    std::vector<FlowField> rev(backward.rbegin(), backward.rend());
    Trajectory back = track_trajectory(out.points.back(), rev, 6);
    REQUIRE(back.points.size() == 7);
    CHECK(std::abs(back.points.back().first - 10.0) <= 1.0);
    CHECK(std::abs(back.points.back().second - 20.0) <= 1.0);
}

TEST_CASE("trajectory pooling") {
    DescriptorMap m;
    m.width = 8;
    m.height = 8;
    m.channels = 3;
    m.data.assign(8 * 8 * 3, 0.0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) m.at(x, y, c) = c + 1.0;
    std::vector<DescriptorMap> maps(5, m);

    Trajectory traj;
    traj.points = {{1.0, 1.0}, {2.5, 3.5}, {4.0, 2.0}};
    auto pooled = trajectory_pool(traj, maps, 1.0);
    CHECK(pooled == std::vector<double>{1.0, 2.0, 3.0});

    Trajectory single;
    single.points = {{3.0, 5.0}};
    DescriptorMap varied = m;
    varied.at(3, 5, 0) = 9.5;
    auto one = trajectory_pool(single, {varied}, 1.0);
    CHECK(one[0] == 9.5);

    Trajectory outside;
    outside.points = {{7.9, 7.9}};
    CHECK_THROWS_AS(trajectory_pool(outside, maps, 2.0), ScaleMismatch);
}

TEST_CASE("pooling matches a direct bilinear oracle") {
    Rng rng(33);
    DescriptorMap m;
    m.width = 10;
    m.height = 7;
    m.channels = 2;
    m.data.resize(10 * 7 * 2);
    for (double& x : m.data) x = rng.uniform(-1, 1);
    std::vector<DescriptorMap> maps(4, m);

    Trajectory traj;
    for (int i = 0; i < 4; ++i) traj.points.push_back({rng.uniform(0.0, 8.9), rng.uniform(0.0, 5.9)});

    auto pooled = trajectory_pool(traj, maps, 1.0);
    for (int c = 0; c < 2; ++c) {
        double acc = 0.0;
        for (auto [x, y] : traj.points) {
            int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
            double fx = x - x0, fy = y - y0;
            acc += (1 - fy) * ((1 - fx) * m.at(x0, y0, c) + fx * m.at(x0 + 1, y0, c)) +
                   fy * ((1 - fx) * m.at(x0, y0 + 1, c) + fx * m.at(x0 + 1, y0 + 1, c));
        }
        CHECK(pooled[c] == doctest::Approx(acc / 4.0).epsilon(1e-12));
    }
}

TEST_CASE("window assembly") {
    GmmModel gmm;
    gmm.weights = {1.0};
    gmm.means = {{0.0}};
    gmm.stds = {{1.0}};

    RawViewFeatures view;
    FeatureChannel channel;
    channel.gmm = gmm;
    for (int t = 0; t < 6; ++t) channel.descriptors.push_back({t, {0.5}});
    view.channels.push_back(channel);

    // window_len = 1: each frame sees only itself.
    MultiViewSequence seq1 = assemble_window_features({view}, 6, 1);
    CHECK(seq1.frames() == 6);
    CHECK(seq1.views[0][0].size() == 2);  // 2 * K * D

    // identical frames: identical windows regardless of clipping.
    MultiViewSequence seq5 = assemble_window_features({view}, 6, 5);
    for (int t = 1; t < 6; ++t) CHECK(seq5.views[0][t] == seq5.views[0][0]);

    // concatenation length over channels: sum of 2 K D.
    FeatureChannel wide;
    wide.gmm.weights = {0.5, 0.5};
    wide.gmm.means = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
    wide.gmm.stds = {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}};
    for (int t = 0; t < 6; ++t) wide.descriptors.push_back({t, {0.1, 0.2, 0.3}});
    RawViewFeatures both;
    both.channels = {channel, wide};
    MultiViewSequence seq = assemble_window_features({both}, 6, 3);
    CHECK(seq.views[0][2].size() == 2 * 1 * 1 + 2 * 2 * 3);

    FeatureChannel stray = channel;
    stray.descriptors.push_back({99, {1.0}});
    RawViewFeatures bad;
    bad.channels = {stray};
    CHECK_THROWS_AS(assemble_window_features({bad}, 6, 3), ViewLengthMismatch);
}
