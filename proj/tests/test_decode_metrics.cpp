#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mvladdm/decode.hpp"
#include "mvladdm/model.hpp"
#include "mvladdm/rng.hpp"

using namespace mvladdm;

namespace {

std::string temp_path(const std::string& name) {
    std::filesystem::create_directories(MVLADDM_TEST_TMP);
    return std::string(MVLADDM_TEST_TMP) + "/" + name;
}

std::vector<std::vector<double>> random_unaries(int frames, int n, Rng& rng) {
    std::vector<std::vector<double>> u(frames, std::vector<double>(n));
    for (auto& row : u)
        for (double& x : row) x = rng.uniform(-2.0, 2.0);
    return u;
}

std::vector<std::vector<double>> random_transition(int n, Rng& rng) {
    std::vector<std::vector<double>> b(n, std::vector<double>(n));
    for (auto& row : b)
        for (double& x : row) x = rng.uniform(-1.0, 1.0);
    return b;
}

// Exhaustive maximum over all N^T paths; ties resolved the same way the
// dynamic program resolves them (later labels minimized first).
std::vector<int> brute_force_best_path(const std::vector<std::vector<double>>& unaries,
                                       const std::vector<std::vector<double>>& transition) {
    const int frames = static_cast<int>(unaries.size());
    const int n = static_cast<int>(unaries[0].size());
    std::vector<int> current(frames, 0), best;
    double best_score = -1e300;
    auto reverse_less = [&](const std::vector<int>& a, const std::vector<int>& b) {
        for (int t = frames - 1; t >= 0; --t) {
            if (a[t] != b[t]) return a[t] < b[t];
        }
        return false;
    };
    while (true) {
        double score = path_score(unaries, transition, current);
        if (score > best_score || (score == best_score && (best.empty() || reverse_less(current, best)))) {
            best_score = score;
            best = current;
        }
        int pos = frames - 1;
        while (pos >= 0 && current[pos] == n - 1) current[pos--] = 0;
        if (pos < 0) break;
        ++current[pos];
    }
    return best;
}

double brute_force_log_likelihood(const std::vector<std::vector<double>>& unaries,
                                  const std::vector<std::vector<double>>& transition,
                                  const std::vector<int>& labels) {
    const int frames = static_cast<int>(unaries.size());
    const int n = static_cast<int>(unaries[0].size());
    std::vector<int> current(frames, 0);
    std::vector<double> scores;
    while (true) {
        scores.push_back(path_score(unaries, transition, current));
        int pos = frames - 1;
        while (pos >= 0 && current[pos] == n - 1) current[pos--] = 0;
        if (pos < 0) break;
        ++current[pos];
    }
    double top = *std::max_element(scores.begin(), scores.end());
    double acc = 0.0;
    for (double s : scores) acc += std::exp(s - top);
    double log_z = top + std::log(acc);
    return path_score(unaries, transition, labels) - log_z;
}

}  // namespace

TEST_CASE("zero transitions decode to the per-frame argmax") {
    Rng rng(2);
    auto unaries = random_unaries(7, 4, rng);
    std::vector<std::vector<double>> zero(4, std::vector<double>(4, 0.0));
    Ethogram e = viterbi_decode(unaries, zero);
    for (int t = 0; t < 7; ++t) {
        int arg = 0;
        for (int j = 1; j < 4; ++j)
            if (unaries[t][j] > unaries[t][arg]) arg = j;
        CHECK(e.labels[t] == arg);
    }
}

TEST_CASE("uniform scores with self-transition bonus give all-zeros by tie-break") {
    std::vector<std::vector<double>> unaries(5, std::vector<double>(3, 0.25));
    std::vector<std::vector<double>> self(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 3; ++i) self[i][i] = 1.0;
    Ethogram e = viterbi_decode(unaries, self);
    for (int label : e.labels) CHECK(label == 0);
}

TEST_CASE("viterbi matches exhaustive enumeration") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        int frames = 2 + static_cast<int>(rng.below(7));
        int n = 2 + static_cast<int>(rng.below(3));
        auto unaries = random_unaries(frames, n, rng);
        auto transition = random_transition(n, rng);
        Ethogram e = viterbi_decode(unaries, transition);
        auto want = brute_force_best_path(unaries, transition);
        CHECK(e.labels == want);
    }
}

TEST_CASE("decoded path beats random paths and survives unary shifts") {
    Rng rng(77);
    auto unaries = random_unaries(10, 3, rng);
    auto transition = random_transition(3, rng);
    Ethogram e = viterbi_decode(unaries, transition);
    double decoded = path_score(unaries, transition, e.labels);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> random_path(10);
        for (int& y : random_path) y = static_cast<int>(rng.below(3));
        CHECK(decoded >= path_score(unaries, transition, random_path));
    }

    auto shifted = unaries;
    for (auto& row : shifted)
        for (double& x : row) x += 13.5;
    CHECK(viterbi_decode(shifted, transition).labels == e.labels);
}

TEST_CASE("sequence log likelihood closed forms") {
    // T = 1: log-softmax of the single frame.
    std::vector<std::vector<double>> u1 = {{0.4, -0.6, 1.2}};
    std::vector<std::vector<double>> b(3, std::vector<double>(3, 0.0));
    double lse = std::log(std::exp(0.4) + std::exp(-0.6) + std::exp(1.2));
    CHECK(sequence_log_likelihood(u1, b, {2}) == doctest::Approx(1.2 - lse).epsilon(1e-12));

    // B = 0: independent per-frame log-softmax terms.
    Rng rng(5);
    auto u = random_unaries(6, 3, rng);
    std::vector<int> labels = {0, 2, 1, 1, 0, 2};
    double want = 0.0;
    for (int t = 0; t < 6; ++t) {
        double m = std::max({u[t][0], u[t][1], u[t][2]});
        double z = std::log(std::exp(u[t][0] - m) + std::exp(u[t][1] - m) + std::exp(u[t][2] - m)) + m;
        want += u[t][labels[t]] - z;
    }
    CHECK(sequence_log_likelihood(u, b, labels) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("forward algorithm matches exhaustive enumeration") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Rng rng(seed + 100);
        int frames = 2 + static_cast<int>(rng.below(5));
        int n = 2 + static_cast<int>(rng.below(3));
        auto unaries = random_unaries(frames, n, rng);
        auto transition = random_transition(n, rng);
        std::vector<int> labels(frames);
        for (int& y : labels) y = static_cast<int>(rng.below(n));
        double got = sequence_log_likelihood(unaries, transition, labels);
        double want = brute_force_log_likelihood(unaries, transition, labels);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
        CHECK(got <= 0.0);
    }
}

TEST_CASE("exponentiated scores normalize to one") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 50);
        int frames = 2 + static_cast<int>(rng.below(5));
        int n = 2 + static_cast<int>(rng.below(2));
        auto unaries = random_unaries(frames, n, rng);
        auto transition = random_transition(n, rng);
        std::vector<int> labels(frames, 0);
        double total = 0.0;
        while (true) {
            total += std::exp(sequence_log_likelihood(unaries, transition, labels));
            int pos = frames - 1;
            while (pos >= 0 && labels[pos] == n - 1) labels[pos--] = 0;
            if (pos < 0) break;
            ++labels[pos];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("per-class accuracy") {
    PerClassAccuracy perfect = per_class_accuracy({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    CHECK(perfect.average == 1.0);
    for (int c = 0; c < 3; ++c) CHECK(perfect.per_class[c] == 1.0);

    PerClassAccuracy mixed = per_class_accuracy({1, 1, 0, 0}, {1, 0, 0, 0}, 2);
    CHECK(mixed.per_class[0] == 1.0);
    CHECK(mixed.per_class[1] == 0.5);
    CHECK(mixed.average == doctest::Approx(0.75));

    // Absent class is excluded from the average.
    PerClassAccuracy absent = per_class_accuracy({0, 0, 1}, {0, 0, 1}, 3);
    CHECK(std::isnan(absent.per_class[2]));
    CHECK(absent.average == 1.0);

    CHECK_THROWS_AS(per_class_accuracy({0, 1}, {0}, 2), LengthMismatch);
}

TEST_CASE("confusion matrix totals match the sequence length") {
    Rng rng(9);
    std::vector<int> truth(137), pred(137);
    for (int i = 0; i < 137; ++i) {
        truth[i] = static_cast<int>(rng.below(4));
        pred[i] = static_cast<int>(rng.below(4));
    }
    ConfusionMatrix cm = confusion_matrix(truth, pred, 4);
    CHECK(cm.total() == 137);
    for (int c = 0; c < 4; ++c) {
        long row = 0;
        for (long x : cm.counts[c]) row += x;
        long support = 0;
        for (int t : truth) support += t == c ? 1 : 0;
        CHECK(row == support);
    }
}

TEST_CASE("roc and auc") {
    RocCurve perfect = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(perfect.auc == 1.0);

    RocCurve chance = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
    CHECK(chance.auc == 0.5);

    RocCurve ranked = roc_auc({0.9, 0.4, 0.6, 0.1}, {1, 0, 1, 0});
    CHECK(ranked.auc == 1.0);

    CHECK_THROWS_AS(roc_auc({0.4, 0.6}, {1, 1}), DegenerateLabels);

    // Invariance under strictly monotone transforms.
    Rng rng(3);
    std::vector<double> scores(60);
    std::vector<int> truth(60);
    for (int i = 0; i < 60; ++i) {
        truth[i] = static_cast<int>(rng.below(2));
        scores[i] = rng.uniform(-2.0, 2.0) + truth[i];
    }
    double base = roc_auc(scores, truth).auc;
    std::vector<double> warped(60);
    for (int i = 0; i < 60; ++i) warped[i] = std::exp(3.0 * scores[i]) + 7.0;
    CHECK(roc_auc(warped, truth).auc == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ethogram segments and export") {
    Ethogram single = ethogram_from_labels({2, 2, 2, 2});
    REQUIRE(single.segments.size() == 1);
    CHECK(single.segments[0].label == 2);
    CHECK(single.segments[0].start == 0);
    CHECK(single.segments[0].end == 4);

    Ethogram alternating = ethogram_from_labels({0, 1, 0, 1, 0});
    CHECK(alternating.segments.size() == 5);

    std::string csv = temp_path("ethogram.csv");
    Ethogram e = ethogram_from_labels({0, 0, 1, 2, 2, 2, 0});
    export_ethogram_csv(e, csv);
    CHECK(parse_ethogram_csv(csv) == e.labels);

    std::string svg = temp_path("ethogram.svg");
    export_ethogram_svg(e, 3, svg);
    std::ifstream in(svg);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("<svg") != std::string::npos);
    CHECK(text.find("rect") != std::string::npos);

    // Past the width cap, runs are pooled into pixels.
    std::vector<int> long_labels(10000, 0);
    for (int i = 5000; i < 10000; ++i) long_labels[i] = 1;
    std::string svg_long = temp_path("ethogram_long.svg");
    export_ethogram_svg(ethogram_from_labels(long_labels), 2, svg_long);
    std::ifstream in2(svg_long);
    std::string text2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    std::size_t at = text2.find("width=\"");
    REQUIRE(at != std::string::npos);
    int svg_width = std::stoi(text2.substr(at + 7));
    CHECK(svg_width <= 4096);
    CHECK(svg_width > 0);
}
