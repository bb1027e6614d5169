#include "mvladdm/dataset.hpp"

#include <fstream>

#include <json.hpp>

namespace mvladdm {

using nlohmann::json;

void MultiViewSequence::validate() const {
    for (const auto& view : views) {
        if (static_cast<int>(view.size()) != frames())
            throw ViewLengthMismatch("sequence '" + id + "': view length differs from label count");
        if (!view.empty()) {
            std::size_t d = view[0].size();
            for (const auto& row : view)
                if (row.size() != d)
                    throw DimMismatch("sequence '" + id + "': ragged feature rows within a view");
        }
    }
}

void save_dataset(const std::vector<MultiViewSequence>& seqs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("save_dataset: cannot open '" + path + "' for writing");
    for (const MultiViewSequence& seq : seqs) {
        seq.validate();
        json views = json::array();
        for (std::size_t v = 0; v < seq.views.size(); ++v) {
            const auto& view = seq.views[v];
            int t = static_cast<int>(view.size());
            int d = t > 0 ? static_cast<int>(view[0].size()) : 0;
            json flat = json::array();
            for (const auto& row : view)
                for (double x : row) flat.push_back(x);
            views.push_back(json{{"dims", {t, d}}, {"data", std::move(flat)}});
        }
        json rec{{"id", seq.id}, {"labels", seq.labels}, {"views", std::move(views)}};
        out << rec.dump() << '\n';
    }
    if (!out) throw IoFailure("save_dataset: write to '" + path + "' failed");
}

std::vector<MultiViewSequence> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("load_dataset: cannot open '" + path + "'");
    std::vector<MultiViewSequence> seqs;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
            throw ParseError("load_dataset: malformed JSON at line " + std::to_string(line_no), line_no);
        MultiViewSequence seq;
        try {
            seq.id = rec.at("id").get<std::string>();
            seq.labels = rec.at("labels").get<std::vector<int>>();
            for (const json& view : rec.at("views")) {
                const json& dims = view.at("dims");
                int t = dims.at(0).get<int>();
                int d = dims.at(1).get<int>();
                const json& data = view.at("data");
                if (static_cast<int>(data.size()) != t * d)
                    throw DimMismatch("view data length does not match dims");
                std::vector<std::vector<double>> rows(t, std::vector<double>(d));
                std::size_t k = 0;
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < d; ++j) rows[i][j] = data.at(k++).get<double>();
                seq.views.push_back(std::move(rows));
            }
        } catch (const json::exception& e) {
            throw ParseError("load_dataset: line " + std::to_string(line_no) + ": " + e.what(),
                             line_no);
        }
        seq.validate();
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

std::vector<double> class_frequencies(const std::vector<MultiViewSequence>& seqs, int num_classes) {
    if (seqs.empty()) throw EmptyDataset("class_frequencies: no sequences");
    std::vector<double> counts(num_classes, 0.0);
    double total = 0.0;
    for (const MultiViewSequence& seq : seqs)
        for (int label : seq.labels) {
            if (label < 0 || label >= num_classes)
                throw LabelOutOfRange("class_frequencies: label outside [0, N)");
            counts[label] += 1.0;
            total += 1.0;
        }
    if (total == 0.0) throw EmptyDataset("class_frequencies: sequences contain no frames");
    for (double& c : counts) c /= total;
    return counts;
}

}  // namespace mvladdm
