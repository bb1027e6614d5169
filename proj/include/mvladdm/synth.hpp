#pragma once

#include <cstdint>
#include <vector>

#include "mvladdm/dataset.hpp"

namespace mvladdm {

// Controls the synthetic multi-view generator. Labels evolve as a Markov
// chain; per frame, each view emits from the (class, view) Gaussian when the
// class is visible in that view, and from the class-agnostic background
// N(0, std^2 I) otherwise, so a view carries no information about classes it
// cannot see.
struct GeneratorSpec {
    int views = 2;
    int classes = 4;
    int frames = 200;
    std::vector<int> feature_dims;                    // per view
    std::vector<std::vector<double>> transition;      // N x N, rows sum to 1
    std::vector<double> imbalance;                    // stationary class weights
    std::vector<std::vector<std::vector<double>>> emission_mean;  // [class][view][dim]
    double emission_std = 1.0;
    std::vector<std::vector<bool>> visibility;        // [class][view]
    std::uint64_t seed = 0;

    void validate() const;

    // Stationary distribution of `transition` by power iteration.
    std::vector<double> stationary() const;

    // The default desk-scale study: V=2, N=4, T=200, D_v=8, separation
    // 4 stds, one class private to each view, two zero transitions, strong
    // self-transitions, skewed class weights.
    static GeneratorSpec default_spec(std::uint64_t seed);
};

std::vector<MultiViewSequence> generate(const GeneratorSpec& spec, int count);

}  // namespace mvladdm
