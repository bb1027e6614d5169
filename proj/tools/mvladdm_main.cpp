#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvladdm/config.hpp"
#include "mvladdm/dataset.hpp"
#include "mvladdm/decode.hpp"
#include "mvladdm/features.hpp"
#include "mvladdm/model.hpp"
#include "mvladdm/rng.hpp"
#include "mvladdm/synth.hpp"
#include "mvladdm/volume_io.hpp"

namespace {

using namespace mvladdm;

constexpr int kExitConfig = 2;
constexpr int kExitBadBinary = 3;
constexpr int kExitDimMismatch = 4;
constexpr int kExitCheckpoint = 5;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool has_seed = false;
};

std::string join_out(const std::string& out_dir, const std::string& path) {
    if (!path.empty() && path.front() == '/') return path;
    return out_dir + "/" + path;
}

int run_synth(const CommonArgs& args) {
    ConfigFile cfg = ConfigFile::parse_file(args.config_path);
    GeneratorSpec spec = generator_spec_from_config(cfg, args.seed, args.has_seed);
    int count = static_cast<int>(cfg.get_int("generator", "sequences", 10));
    std::string train_name = cfg.get_or("generator", "train_output", "train.jsonl");
    std::string test_name = cfg.get_or("generator", "test_output", "test.jsonl");
    cfg.reject_unknown();

    std::vector<MultiViewSequence> seqs = generate(spec, count);

    // 80/20 split by sequence after a seeded shuffle.
    Rng shuffle_rng = Rng(spec.seed).fork(17);
    std::vector<int> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    std::size_t train_count = seqs.size() * 4 / 5;
    std::vector<MultiViewSequence> train_set, test_set;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? train_set : test_set).push_back(seqs[order[i]]);

    std::filesystem::create_directories(args.out_dir);
    std::string train_path = join_out(args.out_dir, train_name);
    std::string test_path = join_out(args.out_dir, test_name);
    save_dataset(train_set, train_path);
    save_dataset(test_set, test_path);
    std::cout << train_path << "\n" << test_path << "\n";
    return 0;
}

int run_train(const CommonArgs& args) {
    ConfigFile cfg = ConfigFile::parse_file(args.config_path);
    ModelConfig mc = model_config_from_config(cfg, args.seed, args.has_seed);
    std::string dataset_path = join_out(args.out_dir, cfg.get_or("train", "dataset", "train.jsonl"));
    std::string ckpt_name = cfg.get_or("train", "checkpoint_output", "checkpoint.bin");
    std::string trace_name = cfg.get_or("train", "trace_output", "loss_trace.csv");
    cfg.reject_unknown();

    std::vector<MultiViewSequence> dataset = load_dataset(dataset_path);
    TrainResult result = train(dataset, mc);

    std::filesystem::create_directories(args.out_dir);
    std::string ckpt_path = join_out(args.out_dir, ckpt_name);
    std::string trace_path = join_out(args.out_dir, trace_name);
    save_checkpoint(result.params, ckpt_path);
    save_loss_trace(result.trace, trace_path);
    std::cout << ckpt_path << "\n" << trace_path << "\n";

    // Training-set fit, decoded with the learned transitions.
    std::vector<int> truth, pred;
    std::vector<std::vector<double>> transition(mc.num_labels,
                                                std::vector<double>(mc.num_labels, 0.0));
    for (int i = 0; i < mc.num_labels; ++i)
        for (int j = 0; j < mc.num_labels; ++j) transition[i][j] = result.params.transitions(i, j);
    for (const MultiViewSequence& seq : dataset) {
        if (seq.frames() == 0) continue;
        auto unaries = predict_unaries(seq, result.params);
        Ethogram e = viterbi_decode(unaries, transition);
        truth.insert(truth.end(), seq.labels.begin(), seq.labels.end());
        pred.insert(pred.end(), e.labels.begin(), e.labels.end());
    }
    PerClassAccuracy acc = per_class_accuracy(truth, pred, mc.num_labels);
    std::printf("train_per_class_accuracy %.6f\n", acc.average);
    return 0;
}

int run_eval(const CommonArgs& args, bool no_transitions, bool no_attention, bool shared_only) {
    ConfigFile cfg = ConfigFile::parse_file(args.config_path);
    std::string dataset_path = join_out(args.out_dir, cfg.get_or("eval", "dataset", "test.jsonl"));
    std::string ckpt_path = join_out(args.out_dir, cfg.get_or("eval", "checkpoint", "checkpoint.bin"));
    std::string metrics_name = cfg.get_or("eval", "metrics_output", "metrics.json");
    cfg.reject_unknown();

    std::vector<MultiViewSequence> dataset = load_dataset(dataset_path);
    ModelParams params = load_checkpoint(ckpt_path);
    const int n = params.config.num_labels;

    AttentionMode mode = AttentionMode::Full;
    if (no_attention) mode = AttentionMode::Uniform;
    if (shared_only) mode = AttentionMode::SharedOnly;

    std::vector<std::vector<double>> transition(n, std::vector<double>(n, 0.0));
    if (!no_transitions)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) transition[i][j] = params.transitions(i, j);

    std::filesystem::create_directories(args.out_dir);
    std::vector<int> truth_all, pred_all;
    std::vector<std::vector<double>> scores_all;
    for (const MultiViewSequence& seq : dataset) {
        if (seq.frames() == 0) continue;
        auto unaries = predict_unaries(seq, params, mode);
        Ethogram pred = viterbi_decode(unaries, transition);
        Ethogram truth = ethogram_from_labels(seq.labels);
        export_ethogram_csv(pred, join_out(args.out_dir, "ethogram_" + seq.id + "_pred.csv"));
        export_ethogram_svg(pred, n, join_out(args.out_dir, "ethogram_" + seq.id + "_pred.svg"));
        export_ethogram_csv(truth, join_out(args.out_dir, "ethogram_" + seq.id + "_truth.csv"));
        export_ethogram_svg(truth, n, join_out(args.out_dir, "ethogram_" + seq.id + "_truth.svg"));
        truth_all.insert(truth_all.end(), seq.labels.begin(), seq.labels.end());
        pred_all.insert(pred_all.end(), pred.labels.begin(), pred.labels.end());
        scores_all.insert(scores_all.end(), unaries.begin(), unaries.end());
    }
    if (truth_all.empty()) throw EmptyDataset("eval: dataset has no frames");

    PerClassAccuracy acc = per_class_accuracy(truth_all, pred_all, n);
    ConfusionMatrix cm = confusion_matrix(truth_all, pred_all, n);

    nlohmann::json metrics;
    for (int c = 0; c < n; ++c)
        if (acc.support[c] > 0) metrics["per_class"][std::to_string(c)] = acc.per_class[c];
    metrics["average"] = acc.average;
    metrics["confusion"] = cm.counts;
    metrics["auc"] = nlohmann::json::object();
    for (int c = 0; c < n; ++c) {
        std::vector<double> class_scores(truth_all.size());
        std::vector<int> binary(truth_all.size());
        for (std::size_t i = 0; i < truth_all.size(); ++i) {
            class_scores[i] = scores_all[i][c];
            binary[i] = truth_all[i] == c ? 1 : 0;
        }
        try {
            metrics["auc"][std::to_string(c)] = roc_auc(class_scores, binary).auc;
        } catch (const DegenerateLabels&) {
            // class absent from this split; no curve
        }
    }

    std::string metrics_path = join_out(args.out_dir, metrics_name);
    std::ofstream out(metrics_path, std::ios::binary);
    if (!out) throw IoFailure("eval: cannot open '" + metrics_path + "'");
    out << metrics.dump(2) << '\n';
    std::cout << metrics_path << "\n";
    std::printf("average_per_class_accuracy %.6f\n", acc.average);
    return 0;
}

// Feature extraction over ingested volumes / flows / maps, one view at a
// time, Fisher-encoded in sliding windows.
int run_encode(const CommonArgs& args) {
    ConfigFile cfg = ConfigFile::parse_file(args.config_path);
    const std::string S = "encode";
    int views = static_cast<int>(cfg.get_int(S, "views", 1));
    int window = static_cast<int>(cfg.get_int(S, "window", 40));
    double sigma_spatial = cfg.get_double(S, "sigma_spatial", 1.5);
    double omega_temporal = cfg.get_double(S, "omega_temporal", 0.25);
    double threshold = cfg.get_double(S, "threshold", 1e-12);
    std::vector<int> cuboid = cfg.has(S, "cuboid") ? cfg.get_ints(S, "cuboid")
                                                   : std::vector<int>{2, 2, 1};
    int gmm_k = static_cast<int>(cfg.get_int(S, "gmm_k", 5));
    int gmm_iters = static_cast<int>(cfg.get_int(S, "gmm_iters", 10));
    int traj_len = static_cast<int>(cfg.get_int(S, "traj_len", 15));
    int sample_step = static_cast<int>(cfg.get_int(S, "sample_step", 5));
    double eig_threshold = cfg.get_double(S, "eig_threshold", 1e-9);
    double map_scale = cfg.get_double(S, "map_scale", 1.0);
    int pca_keep = static_cast<int>(cfg.get_int(S, "pca_keep", 0));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int(S, "seed", 0));
    if (args.has_seed) seed = args.seed;
    std::string output = cfg.get_or(S, "output", "encoded.jsonl");
    std::string labels_path = cfg.get_or(S, "labels", "");
    if (cuboid.size() != 3) throw ConfigError("[encode] cuboid must be hx,hy,ht");

    std::vector<RawViewFeatures> raw(views);
    int total_frames = -1;
    for (int v = 0; v < views; ++v) {
        std::string base = "view" + std::to_string(v);
        Volume volume = read_volume(join_out(args.out_dir, cfg.get(S, base + ".volume")));
        if (total_frames < 0) total_frames = volume.frames;
        if (volume.frames != total_frames)
            throw ViewLengthMismatch("encode: view volumes disagree on frame count");

        // Spatio-temporal channel: cuboid gradients at interest points.
        FeatureChannel visual;
        FeatureChannel contextual;
        std::vector<InterestPoint> points =
            detect_interest_points(volume, sigma_spatial, omega_temporal, threshold);
        std::vector<std::vector<InterestPoint>> by_frame(total_frames);
        for (const InterestPoint& p : points) by_frame[p.t].push_back(p);
        for (int t = 0; t < total_frames; ++t) {
            if (by_frame[t].empty()) continue;
            double cx = 0.0, cy = 0.0;
            for (const InterestPoint& p : by_frame[t]) {
                cx += p.x;
                cy += p.y;
            }
            cx /= by_frame[t].size();
            cy /= by_frame[t].size();
            for (const InterestPoint& p : by_frame[t]) {
                visual.descriptors.push_back(
                    {t, cuboid_gradients(volume, p, cuboid[0], cuboid[1], cuboid[2])});
                try {
                    contextual.descriptors.push_back(
                        {t, contextual_feature({cx, cy},
                                               {static_cast<double>(p.x),
                                                static_cast<double>(p.y)})});
                } catch (const DegenerateInput&) {
                    // a lone point at the origin has no direction; skip it
                }
            }
        }

        // Trajectory channel: dense samples tracked through the flow field,
        // pooled over the descriptor maps.
        FeatureChannel pooled;
        bool has_flows = cfg.has(S, base + ".flows");
        bool has_maps = cfg.has(S, base + ".maps");
        if (has_flows && has_maps) {
            std::vector<FlowField> flows = read_flows(join_out(args.out_dir, cfg.get(S, base + ".flows")));
            std::vector<DescriptorMap> maps = read_maps(join_out(args.out_dir, cfg.get(S, base + ".maps")));
            for (int t = 0; t + traj_len < total_frames; ++t) {
                Image frame;
                frame.height = volume.height;
                frame.width = volume.width;
                frame.data.assign(volume.data.begin() +
                                      static_cast<std::size_t>(t) * volume.height * volume.width,
                                  volume.data.begin() +
                                      static_cast<std::size_t>(t + 1) * volume.height * volume.width);
                for (auto [x, y] : dense_sample(frame, sample_step, eig_threshold)) {
                    std::vector<FlowField> slice(flows.begin() + t, flows.begin() + t + traj_len);
                    Trajectory traj = track_trajectory({static_cast<double>(x),
                                                        static_cast<double>(y)},
                                                       slice, traj_len, t);
                    pooled.descriptors.push_back({t, trajectory_pool(traj, maps, map_scale)});
                }
            }
            if (pca_keep > 0 && static_cast<int>(pooled.descriptors.size()) > pca_keep) {
                std::vector<std::vector<double>> stacked;
                for (const TimedDescriptor& d : pooled.descriptors) stacked.push_back(d.values);
                int keep = std::min<int>(pca_keep, static_cast<int>(stacked[0].size()));
                PcaResult pca = pca_fit_transform(stacked, keep, seed);
                for (std::size_t i = 0; i < pooled.descriptors.size(); ++i)
                    pooled.descriptors[i].values = pca.projected[i];
            }
        } else if (has_flows != has_maps) {
            throw ConfigError("[encode] " + base + " needs both .flows and .maps (or neither)");
        }

        auto fit_channel = [&](FeatureChannel& ch, int dim, std::uint64_t stream) {
            if (static_cast<int>(ch.descriptors.size()) >= gmm_k) {
                std::vector<std::vector<double>> pts;
                for (const TimedDescriptor& d : ch.descriptors) pts.push_back(d.values);
                ch.gmm = gmm_fit(pts, gmm_k, gmm_iters, Rng(seed).fork(stream).raw());
            } else {
                // Too few descriptors to fit: placeholder mixture encodes
                // every window to zeros of the right width.
                ch.gmm.weights.assign(gmm_k, 1.0 / gmm_k);
                ch.gmm.means.assign(gmm_k, std::vector<double>(dim, 0.0));
                ch.gmm.stds.assign(gmm_k, std::vector<double>(dim, 1.0));
                ch.descriptors.clear();
            }
        };
        int cuboid_dim = 3 * (2 * cuboid[0] + 1) * (2 * cuboid[1] + 1) * (2 * cuboid[2] + 1);
        fit_channel(visual, cuboid_dim, 100 + v);
        fit_channel(contextual, 4, 200 + v);
        raw[v].channels.push_back(std::move(visual));
        raw[v].channels.push_back(std::move(contextual));
        if (has_flows && has_maps) {
            int dim = pooled.descriptors.empty()
                          ? 1
                          : static_cast<int>(pooled.descriptors[0].values.size());
            fit_channel(pooled, dim, 300 + v);
            raw[v].channels.push_back(std::move(pooled));
        }
    }
    cfg.reject_unknown();

    MultiViewSequence seq = assemble_window_features(raw, total_frames, window);
    if (!labels_path.empty()) {
        std::ifstream in(join_out(args.out_dir, labels_path));
        if (!in) throw IoFailure("encode: cannot open labels file");
        std::vector<int> labels;
        int value;
        while (in >> value) labels.push_back(value);
        if (static_cast<int>(labels.size()) != total_frames)
            throw DimMismatch("encode: label count does not match frame count");
        seq.labels = std::move(labels);
    }

    std::filesystem::create_directories(args.out_dir);
    std::string out_path = join_out(args.out_dir, output);
    save_dataset({seq}, out_path);
    std::cout << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view latent-attention dynamic discriminative model pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    bool no_transitions = false, no_attention = false, shared_only = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "key = value config file with [section] headers")
            ->required();
        sub->add_option("--out", args.out_dir, "output directory (default .)");
        sub->add_option("--seed", args.seed, "override the config seed")
            ->each([&](const std::string&) { args.has_seed = true; });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset and 80/20 split");
    add_common(synth);
    CLI::App* encode = app.add_subcommand("encode", "encode volumes/flows/maps into window features");
    add_common(encode);
    CLI::App* train_cmd = app.add_subcommand("train", "train the model; writes checkpoint and loss trace");
    add_common(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint; writes metrics and ethograms");
    add_common(eval_cmd);
    auto* flag_nt = eval_cmd->add_flag("--no-transitions", no_transitions, "decode with transition scores zeroed");
    auto* flag_na = eval_cmd->add_flag("--no-attention", no_attention, "uniform attention weights");
    auto* flag_so = eval_cmd->add_flag("--shared-only", shared_only, "use only the all-views posterior");
    flag_na->excludes(flag_so);
    (void)flag_nt;

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(args);
        if (encode->parsed()) return run_encode(args);
        if (train_cmd->parsed()) return run_train(args);
        if (eval_cmd->parsed()) return run_eval(args, no_transitions, no_attention, shared_only);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidSpec& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CheckpointMismatch& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitBadBinary;
    } catch (const DimMismatch& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitDimMismatch;
    } catch (const InconsistentViews& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitDimMismatch;
    } catch (const ViewLengthMismatch& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitDimMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
