#include "mvladdm/synth.hpp"

#include <cmath>
#include <string>

#include "mvladdm/rng.hpp"

namespace mvladdm {

void GeneratorSpec::validate() const {
    if (views < 1 || classes < 1 || frames < 1) throw InvalidSpec("spec: views, classes, frames must be >= 1");
    if (static_cast<int>(feature_dims.size()) != views)
        throw InvalidSpec("spec: feature_dims must list one dimension per view");
    for (int d : feature_dims)
        if (d < 1) throw InvalidSpec("spec: feature dimensions must be >= 1");
    if (static_cast<int>(transition.size()) != classes)
        throw InvalidSpec("spec: transition must be N x N");
    for (const auto& row : transition) {
        if (static_cast<int>(row.size()) != classes) throw InvalidSpec("spec: transition must be N x N");
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0) throw InvalidSpec("spec: transition entries must be nonnegative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InvalidSpec("spec: transition rows must sum to 1");
    }
    if (static_cast<int>(imbalance.size()) != classes)
        throw InvalidSpec("spec: imbalance must have one weight per class");
    double wsum = 0.0;
    for (double w : imbalance) {
        if (w < 0.0) throw InvalidSpec("spec: imbalance weights must be nonnegative");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw InvalidSpec("spec: imbalance weights must sum to 1");
    if (!(emission_std > 0.0)) throw InvalidSpec("spec: emission std must be positive");
    if (static_cast<int>(visibility.size()) != classes)
        throw InvalidSpec("spec: visibility must be [class][view]");
    for (int c = 0; c < classes; ++c) {
        if (static_cast<int>(visibility[c].size()) != views)
            throw InvalidSpec("spec: visibility must be [class][view]");
        bool anywhere = false;
        for (bool vis : visibility[c]) anywhere = anywhere || vis;
        if (!anywhere) throw InvalidSpec("spec: every class must be visible in at least one view");
    }
    if (static_cast<int>(emission_mean.size()) != classes)
        throw InvalidSpec("spec: emission_mean must be [class][view][dim]");
    for (int c = 0; c < classes; ++c) {
        if (static_cast<int>(emission_mean[c].size()) != views)
            throw InvalidSpec("spec: emission_mean must be [class][view][dim]");
        for (int v = 0; v < views; ++v)
            if (static_cast<int>(emission_mean[c][v].size()) != feature_dims[v])
                throw InvalidSpec("spec: emission mean dimension mismatch in class " +
                                  std::to_string(c) + ", view " + std::to_string(v));
    }
}

std::vector<double> GeneratorSpec::stationary() const {
    std::vector<double> pi(classes, 1.0 / classes);
    std::vector<double> next(classes);
    for (int iter = 0; iter < 2000; ++iter) {
        for (int j = 0; j < classes; ++j) {
            double acc = 0.0;
            for (int i = 0; i < classes; ++i) acc += pi[i] * transition[i][j];
            next[j] = acc;
        }
        double diff = 0.0;
        for (int j = 0; j < classes; ++j) diff += std::abs(next[j] - pi[j]);
        pi.swap(next);
        if (diff < 1e-14) break;
    }
    return pi;
}

GeneratorSpec GeneratorSpec::default_spec(std::uint64_t seed) {
    GeneratorSpec spec;
    spec.views = 2;
    spec.classes = 4;
    spec.frames = 200;
    spec.feature_dims = {8, 8};
    spec.imbalance = {0.55, 0.25, 0.15, 0.05};
    spec.emission_std = 1.0;
    spec.seed = seed;

    // Self-transition 0.9 plus weight-proportional switching; transitions
    // 2->3 and 3->2 forbidden, rows renormalized.
    spec.transition.assign(4, std::vector<double>(4, 0.0));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            spec.transition[i][j] = (i == j ? 0.9 : 0.0) + 0.1 * spec.imbalance[j];
    spec.transition[2][3] = 0.0;
    spec.transition[3][2] = 0.0;
    for (int i : {2, 3}) {
        double sum = 0.0;
        for (double p : spec.transition[i]) sum += p;
        for (double& p : spec.transition[i]) p /= sum;
    }

    // Class 0 private to view 0, class 1 private to view 1, classes 2 and 3
    // visible in both views.
    spec.visibility = {{true, false}, {false, true}, {true, true}, {true, true}};

    // Separation of 4 stds along a class-indexed axis.
    const double separation = 4.0;
    spec.emission_mean.assign(4, std::vector<std::vector<double>>(2));
    for (int c = 0; c < 4; ++c)
        for (int v = 0; v < 2; ++v) {
            spec.emission_mean[c][v].assign(spec.feature_dims[v], 0.0);
            if (spec.visibility[c][v]) spec.emission_mean[c][v][c] = separation;
        }
    return spec;
}

namespace {

int draw_categorical(const std::vector<double>& weights, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace

std::vector<MultiViewSequence> generate(const GeneratorSpec& spec, int count) {
    spec.validate();
    if (count < 1) throw InvalidSpec("generate: count must be >= 1");

    Rng rng(spec.seed);
    std::vector<MultiViewSequence> seqs;
    seqs.reserve(count);
    for (int s = 0; s < count; ++s) {
        MultiViewSequence seq;
        seq.id = "seq-" + std::to_string(s);
        seq.labels.resize(spec.frames);
        seq.labels[0] = draw_categorical(spec.imbalance, rng);
        for (int t = 1; t < spec.frames; ++t)
            seq.labels[t] = draw_categorical(spec.transition[seq.labels[t - 1]], rng);

        seq.views.resize(spec.views);
        for (int v = 0; v < spec.views; ++v)
            seq.views[v].assign(spec.frames, std::vector<double>(spec.feature_dims[v]));
        for (int t = 0; t < spec.frames; ++t) {
            int label = seq.labels[t];
            for (int v = 0; v < spec.views; ++v) {
                auto& row = seq.views[v][t];
                bool visible = spec.visibility[label][v];
                for (int j = 0; j < spec.feature_dims[v]; ++j) {
                    double mean = visible ? spec.emission_mean[label][v][j] : 0.0;
                    row[j] = mean + spec.emission_std * rng.gaussian();
                }
            }
        }
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

}  // namespace mvladdm
