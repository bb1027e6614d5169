#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvladdm/dataset.hpp"
#include "mvladdm/synth.hpp"

using namespace mvladdm;

namespace {

std::string temp_path(const std::string& name) {
    std::filesystem::create_directories(MVLADDM_TEST_TMP);
    return std::string(MVLADDM_TEST_TMP) + "/" + name;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("identity transition keeps every sequence on one label") {
    GeneratorSpec spec = GeneratorSpec::default_spec(3);
    spec.transition = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    auto seqs = generate(spec, 5);
    for (const auto& seq : seqs)
        for (int label : seq.labels) CHECK(label == seq.labels[0]);
}

TEST_CASE("symmetric two-class chain hits uniform bigram frequencies") {
    GeneratorSpec spec;
    spec.views = 1;
    spec.classes = 2;
    spec.frames = 1000;
    spec.feature_dims = {2};
    spec.transition = {{0.5, 0.5}, {0.5, 0.5}};
    spec.imbalance = {0.5, 0.5};
    spec.emission_mean = {{{1.0, 0.0}}, {{0.0, 1.0}}};
    spec.visibility = {{true}, {true}};
    spec.seed = 17;
    auto seqs = generate(spec, 100);  // 1e5 frames total

    long counts[2][2] = {{0, 0}, {0, 0}};
    long total = 0;
    for (const auto& seq : seqs)
        for (std::size_t t = 1; t < seq.labels.size(); ++t) {
            ++counts[seq.labels[t - 1]][seq.labels[t]];
            ++total;
        }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double frac = static_cast<double>(counts[i][j]) / total;
            CHECK(std::abs(frac - 0.25) < 0.02);
        }
}

TEST_CASE("a view carries no information about classes it cannot see") {
    // Classes 0 and 1 are both private to view 1, class 2 is shared, so in
    // view 0 the two private classes collapse onto the same background.
    GeneratorSpec spec;
    spec.views = 2;
    spec.classes = 3;
    spec.frames = 400;
    spec.feature_dims = {6, 6};
    spec.transition = {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}};
    spec.imbalance = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    spec.emission_std = 1.0;
    spec.visibility = {{false, true}, {false, true}, {true, true}};
    spec.emission_mean.assign(3, std::vector<std::vector<double>>(2, std::vector<double>(6, 0.0)));
    spec.emission_mean[0][1][0] = 4.0;
    spec.emission_mean[1][1][1] = 4.0;
    spec.emission_mean[2][0][2] = 4.0;
    spec.emission_mean[2][1][2] = 4.0;
    spec.seed = 5;

    auto train_seqs = generate(spec, 10);
    spec.seed = 6;
    auto test_seqs = generate(spec, 10);

    // Reference classifier: nearest empirical class centroid in one view.
    auto evaluate_view = [&](int view, int probe_class) {
        std::vector<std::vector<double>> centroid(3, std::vector<double>(6, 0.0));
        std::vector<long> count(3, 0);
        for (const auto& seq : train_seqs)
            for (int t = 0; t < seq.frames(); ++t) {
                int c = seq.labels[t];
                ++count[c];
                for (int j = 0; j < 6; ++j) centroid[c][j] += seq.views[view][t][j];
            }
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 6; ++j) centroid[c][j] /= count[c];
        long hit = 0, support = 0;
        for (const auto& seq : test_seqs)
            for (int t = 0; t < seq.frames(); ++t) {
                if (seq.labels[t] != probe_class) continue;
                ++support;
                int best = 0;
                double best_d = 1e300;
                for (int c = 0; c < 3; ++c) {
                    double d2 = 0.0;
                    for (int j = 0; j < 6; ++j) {
                        double r = seq.views[view][t][j] - centroid[c][j];
                        d2 += r * r;
                    }
                    if (d2 < best_d) {
                        best_d = d2;
                        best = c;
                    }
                }
                if (best == probe_class) ++hit;
            }
        return static_cast<double>(hit) / support;
    };

    CHECK(evaluate_view(1, 0) > 0.9);   // the seeing view separates it easily
    CHECK(evaluate_view(0, 0) < 0.65);  // the blind view is near chance
}

TEST_CASE("forbidden transitions never appear") {
    GeneratorSpec spec = GeneratorSpec::default_spec(11);
    auto seqs = generate(spec, 50);
    for (const auto& seq : seqs)
        for (std::size_t t = 1; t < seq.labels.size(); ++t) {
            bool forbidden = (seq.labels[t - 1] == 2 && seq.labels[t] == 3) ||
                             (seq.labels[t - 1] == 3 && seq.labels[t] == 2);
            CHECK_FALSE(forbidden);
        }
}

TEST_CASE("generation is reproducible byte for byte") {
    GeneratorSpec spec = GeneratorSpec::default_spec(99);
    std::string a = temp_path("synth_a.jsonl");
    std::string b = temp_path("synth_b.jsonl");
    save_dataset(generate(spec, 4), a);
    save_dataset(generate(spec, 4), b);
    CHECK(file_bytes(a) == file_bytes(b));
    CHECK_FALSE(file_bytes(a).empty());
}

TEST_CASE("declared feature dimensions hold for every frame") {
    GeneratorSpec spec = GeneratorSpec::default_spec(2);
    spec.feature_dims = {8, 5};
    for (int c = 0; c < spec.classes; ++c) {
        spec.emission_mean[c][1].resize(5);
        for (int j = 0; j < 5; ++j)
            spec.emission_mean[c][1][j] = (spec.visibility[c][1] && c < 5 && j == c) ? 4.0 : 0.0;
    }
    auto seqs = generate(spec, 3);
    for (const auto& seq : seqs) {
        REQUIRE(seq.view_count() == 2);
        for (int t = 0; t < seq.frames(); ++t) {
            CHECK(seq.views[0][t].size() == 8);
            CHECK(seq.views[1][t].size() == 5);
        }
    }
}

TEST_CASE("invalid specs are rejected") {
    GeneratorSpec spec = GeneratorSpec::default_spec(1);
    spec.transition[0][0] += 0.1;
    CHECK_THROWS_AS(generate(spec, 1), InvalidSpec);

    spec = GeneratorSpec::default_spec(1);
    spec.visibility[2] = {false, false};
    CHECK_THROWS_AS(generate(spec, 1), InvalidSpec);

    spec = GeneratorSpec::default_spec(1);
    CHECK_THROWS_AS(generate(spec, 0), InvalidSpec);
}

TEST_CASE("dataset round trip is exact") {
    GeneratorSpec spec = GeneratorSpec::default_spec(23);
    spec.frames = 40;
    auto seqs = generate(spec, 3);
    std::string path = temp_path("roundtrip.jsonl");
    save_dataset(seqs, path);
    auto loaded = load_dataset(path);
    REQUIRE(loaded.size() == seqs.size());
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        CHECK(loaded[s].id == seqs[s].id);
        CHECK(loaded[s].labels == seqs[s].labels);
        REQUIRE(loaded[s].views.size() == seqs[s].views.size());
        for (std::size_t v = 0; v < seqs[s].views.size(); ++v)
            CHECK(loaded[s].views[v] == seqs[s].views[v]);
    }
}

TEST_CASE("empty dataset round trips to an empty list") {
    std::string path = temp_path("empty.jsonl");
    save_dataset({}, path);
    CHECK(load_dataset(path).empty());
}

TEST_CASE("truncated line reports its line number") {
    GeneratorSpec spec = GeneratorSpec::default_spec(7);
    spec.frames = 10;
    auto seqs = generate(spec, 3);
    std::string path = temp_path("trunc.jsonl");
    save_dataset(seqs, path);
    std::string bytes = file_bytes(path);

    // Chop the second record in half.
    std::size_t first_nl = bytes.find('\n');
    std::size_t second_nl = bytes.find('\n', first_nl + 1);
    std::string corrupted = bytes.substr(0, first_nl + 1 + (second_nl - first_nl) / 2) + "\n" +
                            bytes.substr(second_nl + 1);
    std::ofstream(path, std::ios::binary) << corrupted;

    try {
        load_dataset(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
    }
}

TEST_CASE("class frequencies") {
    MultiViewSequence seq;
    seq.id = "x";
    seq.labels = {1, 1, 1, 1};
    seq.views = {{{0.0}, {0.0}, {0.0}, {0.0}}};
    auto freq = class_frequencies({seq}, 3);
    CHECK(freq == std::vector<double>{0.0, 1.0, 0.0});

    MultiViewSequence ratio;
    ratio.id = "y";
    ratio.labels = {0, 0, 0, 1};
    ratio.views = {{{0.0}, {0.0}, {0.0}, {0.0}}};
    auto f2 = class_frequencies({ratio}, 2);
    CHECK(f2[0] == 0.75);
    CHECK(f2[1] == 0.25);

    CHECK_THROWS_AS(class_frequencies({}, 2), EmptyDataset);
}

TEST_CASE("empirical frequencies approach the chain's stationary distribution") {
    GeneratorSpec spec = GeneratorSpec::default_spec(31);
    auto seqs = generate(spec, 500);  // 1e5 frames
    auto freq = class_frequencies(seqs, spec.classes);
    auto pi = spec.stationary();
    for (int c = 0; c < spec.classes; ++c) CHECK(std::abs(freq[c] - pi[c]) < 0.02);
}
