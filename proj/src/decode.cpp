#include "mvladdm/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mvladdm {

long ConfusionMatrix::total() const {
    long acc = 0;
    for (const auto& row : counts)
        for (long c : row) acc += c;
    return acc;
}

Ethogram ethogram_from_labels(std::vector<int> labels, std::vector<std::vector<double>> scores) {
    Ethogram e;
    e.labels = std::move(labels);
    e.scores = std::move(scores);
    int t = 0;
    const int total = static_cast<int>(e.labels.size());
    while (t < total) {
        int start = t;
        int label = e.labels[t];
        while (t < total && e.labels[t] == label) ++t;
        e.segments.push_back({label, start, t});
    }
    return e;
}

Ethogram viterbi_decode(const std::vector<std::vector<double>>& unaries,
                        const std::vector<std::vector<double>>& transition) {
    const int frames = static_cast<int>(unaries.size());
    if (frames < 1) throw ShapeMismatch("viterbi_decode: need at least one frame");
    const int n = static_cast<int>(unaries[0].size());
    for (const auto& row : unaries)
        if (static_cast<int>(row.size()) != n) throw ShapeMismatch("viterbi_decode: ragged unaries");
    if (static_cast<int>(transition.size()) != n)
        throw ShapeMismatch("viterbi_decode: transition matrix must be N x N");

    std::vector<std::vector<double>> best(frames, std::vector<double>(n));
    std::vector<std::vector<int>> back(frames, std::vector<int>(n, 0));
    best[0] = unaries[0];
    for (int t = 1; t < frames; ++t)
        for (int j = 0; j < n; ++j) {
            int arg = 0;
            double top = best[t - 1][0] + transition[0][j];
            for (int i = 1; i < n; ++i) {
                double cand = best[t - 1][i] + transition[i][j];
                if (cand > top) {  // strict: ties keep the lower index
                    top = cand;
                    arg = i;
                }
            }
            best[t][j] = top + unaries[t][j];
            back[t][j] = arg;
        }

    std::vector<int> labels(frames);
    int arg = 0;
    for (int j = 1; j < n; ++j)
        if (best[frames - 1][j] > best[frames - 1][arg]) arg = j;
    labels[frames - 1] = arg;
    for (int t = frames - 1; t > 0; --t) labels[t - 1] = back[t][labels[t]];
    return ethogram_from_labels(std::move(labels), unaries);
}

double path_score(const std::vector<std::vector<double>>& unaries,
                  const std::vector<std::vector<double>>& transition,
                  const std::vector<int>& labels) {
    if (labels.size() != unaries.size()) throw LengthMismatch("path_score: label count mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        acc += unaries[t][labels[t]];
        if (t > 0) acc += transition[labels[t - 1]][labels[t]];
    }
    return acc;
}

PerClassAccuracy per_class_accuracy(const std::vector<int>& truth, const std::vector<int>& pred,
                                    int num_classes) {
    if (truth.size() != pred.size())
        throw LengthMismatch("per_class_accuracy: truth and prediction lengths differ");
    PerClassAccuracy out;
    out.support.assign(num_classes, 0);
    std::vector<long> correct(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        int t = truth[i];
        if (t < 0 || t >= num_classes) throw LabelOutOfRange("per_class_accuracy: truth label");
        ++out.support[t];
        if (pred[i] == t) ++correct[t];
    }
    out.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int supported = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (out.support[c] == 0) continue;  // absent classes are excluded from the average
        out.per_class[c] = static_cast<double>(correct[c]) / out.support[c];
        sum += out.per_class[c];
        ++supported;
    }
    out.average = supported > 0 ? sum / supported : 0.0;
    return out;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int num_classes) {
    if (truth.size() != pred.size())
        throw LengthMismatch("confusion_matrix: truth and prediction lengths differ");
    ConfusionMatrix cm;
    cm.counts.assign(num_classes, std::vector<long>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
            throw LabelOutOfRange("confusion_matrix: label outside [0, N)");
        ++cm.counts[truth[i]][pred[i]];
    }
    return cm;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size()) throw LengthMismatch("roc_auc: score/label lengths differ");
    long positives = 0, negatives = 0;
    for (int t : truth) {
        if (t != 0 && t != 1) throw DegenerateLabels("roc_auc: truth must be binary 0/1");
        (t == 1 ? positives : negatives) += 1;
    }
    if (positives == 0 || negatives == 0)
        throw DegenerateLabels("roc_auc: need both positive and negative examples");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    long tp = 0, fp = 0;
    double pair_wins = 0.0;  // positive-over-negative pairs, ties half
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        long tp_tie = 0, fp_tie = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (truth[order[j]] == 1 ? tp_tie : fp_tie) += 1;
            ++j;
        }
        // Positives in this tie group beat every negative seen later and tie
        // the group's own negatives.
        pair_wins += static_cast<double>(tp_tie) * (negatives - fp) -
                     0.5 * static_cast<double>(tp_tie) * fp_tie;
        tp += tp_tie;
        fp += fp_tie;
        curve.points.push_back({static_cast<double>(fp) / negatives,
                                static_cast<double>(tp) / positives});
        i = j;
    }
    curve.auc = pair_wins / (static_cast<double>(positives) * static_cast<double>(negatives));
    return curve;
}

void export_ethogram_csv(const Ethogram& e, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("export_ethogram_csv: cannot open '" + path + "'");
    out << "label,start_frame,end_frame\n";
    for (const Segment& s : e.segments)
        out << s.label << ',' << s.start << ',' << s.end << '\n';
    if (!out) throw IoFailure("export_ethogram_csv: write failed");
}

std::vector<int> parse_ethogram_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("parse_ethogram_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "label,start_frame,end_frame")
        throw ParseError("parse_ethogram_csv: bad header", 1);
    std::vector<int> labels;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int label, start, end;
        char c1, c2;
        if (!(ls >> label >> c1 >> start >> c2 >> end) || c1 != ',' || c2 != ',')
            throw ParseError("parse_ethogram_csv: bad row at line " + std::to_string(line_no),
                             line_no);
        if (start != static_cast<int>(labels.size()) || end <= start)
            throw ParseError("parse_ethogram_csv: segments must partition [0, T)", line_no);
        labels.insert(labels.end(), end - start, label);
    }
    return labels;
}

namespace {

// Fixed palette, cycled when N exceeds it.
const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

}  // namespace

void export_ethogram_svg(const Ethogram& e, int num_classes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("export_ethogram_svg: cannot open '" + path + "'");
    const int total = static_cast<int>(e.labels.size());
    const int band_height = 10;
    const int max_width = 4096;

    // Beyond the width cap, each pixel covers a block of frames and takes
    // the label covering most of that block (max-pooling of label runs).
    std::vector<int> pixel_labels;
    if (total <= max_width) {
        pixel_labels = e.labels;
    } else {
        int block = (total + max_width - 1) / max_width;
        for (int start = 0; start < total; start += block) {
            int end = std::min(start + block, total);
            std::vector<int> counts(num_classes, 0);
            for (int t = start; t < end; ++t) ++counts[e.labels[t]];
            int arg = 0;
            for (int c = 1; c < num_classes; ++c)
                if (counts[c] > counts[arg]) arg = c;
            pixel_labels.push_back(arg);
        }
    }

    const int width = static_cast<int>(pixel_labels.size());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << band_height << "\">\n";
    int x = 0;
    while (x < width) {
        int start = x;
        int label = pixel_labels[x];
        while (x < width && pixel_labels[x] == label) ++x;
        const char* color = kPalette[label % (sizeof(kPalette) / sizeof(kPalette[0]))];
        out << "  <rect x=\"" << start << "\" y=\"0\" width=\"" << (x - start) << "\" height=\""
            << band_height << "\" fill=\"" << color << "\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoFailure("export_ethogram_svg: write failed");
}

}  // namespace mvladdm
