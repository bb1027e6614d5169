#pragma once

#include <string>
#include <vector>

#include "mvladdm/errors.hpp"

namespace mvladdm {

// One labeled multi-view sequence: per-view feature matrices of a shared
// length T, plus one label per frame.
struct MultiViewSequence {
    std::string id;
    // views[v] is T x D_v, row per frame.
    std::vector<std::vector<std::vector<double>>> views;
    std::vector<int> labels;

    int frames() const { return static_cast<int>(labels.size()); }
    int view_count() const { return static_cast<int>(views.size()); }
    int view_dim(int v) const {
        return views[v].empty() ? 0 : static_cast<int>(views[v][0].size());
    }
    void validate() const;
};

// Line-delimited JSON, one sequence per line. Floats are emitted with
// shortest round-trip precision, so load(save(x)) == x.
void save_dataset(const std::vector<MultiViewSequence>& seqs, const std::string& path);
std::vector<MultiViewSequence> load_dataset(const std::string& path);

// Frame-level empirical label distribution; sums to 1.
std::vector<double> class_frequencies(const std::vector<MultiViewSequence>& seqs, int num_classes);

}  // namespace mvladdm
