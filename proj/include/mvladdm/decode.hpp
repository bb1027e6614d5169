#pragma once

#include <string>
#include <vector>

#include "mvladdm/errors.hpp"

namespace mvladdm {

struct Segment {
    int label = 0;
    int start = 0;  // inclusive frame
    int end = 0;    // exclusive frame
};

// Decoded label timeline with its per-frame scores retained.
struct Ethogram {
    std::vector<int> labels;
    std::vector<Segment> segments;             // partition of [0, T)
    std::vector<std::vector<double>> scores;   // T x N unaries
};

struct ConfusionMatrix {
    std::vector<std::vector<long>> counts;  // row = truth, col = prediction
    long total() const;
};

// Max-score path under per-frame unaries plus pairwise transition scores;
// ties broken toward the lower label index.
Ethogram viterbi_decode(const std::vector<std::vector<double>>& unaries,
                        const std::vector<std::vector<double>>& transition);

// Path score of a fixed label sequence under the same objective.
double path_score(const std::vector<std::vector<double>>& unaries,
                  const std::vector<std::vector<double>>& transition,
                  const std::vector<int>& labels);

Ethogram ethogram_from_labels(std::vector<int> labels,
                              std::vector<std::vector<double>> scores = {});

struct PerClassAccuracy {
    std::vector<double> per_class;  // NaN for classes with zero support
    std::vector<long> support;
    double average = 0.0;           // over classes with support only
};

PerClassAccuracy per_class_accuracy(const std::vector<int>& truth, const std::vector<int>& pred,
                                    int num_classes);

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int num_classes);

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), threshold descending
    double auc = 0.0;
};

// One-vs-rest ROC; AUC via the rank statistic (ties count half).
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth);

// CSV of segments plus an SVG strip chart.
void export_ethogram_csv(const Ethogram& e, const std::string& path);
void export_ethogram_svg(const Ethogram& e, int num_classes, const std::string& path);
std::vector<int> parse_ethogram_csv(const std::string& path);

}  // namespace mvladdm
