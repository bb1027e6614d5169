#include "mvladdm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace mvladdm {

void ModelConfig::validate() const {
    if (views < 1) throw InvalidSpec("config: views must be >= 1");
    if (views > kMaxViews) throw TooManyViews("config: at most 4 views (2^V - 1 subsets)");
    if (latent_dim < 1 || hidden_dim < 1 || num_labels < 1 || embed_dim < 1 || mlp_hidden < 1)
        throw InvalidSpec("config: dimensions must be >= 1");
    if (static_cast<int>(feature_dims.size()) != views)
        throw InvalidSpec("config: feature_dims must list one dimension per view");
    for (int d : feature_dims)
        if (d < 1) throw InvalidSpec("config: feature dims must be >= 1");
    if (lambda_elbo < 0.0) throw InvalidSpec("config: lambda_elbo must be >= 0");
    if (learning_rate < 0.0) throw InvalidSpec("config: learning_rate must be >= 0");
    if (epochs < 0 || batch_size < 1 || train_window < 1 || steps_per_epoch < 0)
        throw InvalidSpec("config: bad training sizes");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Tensor init_block(std::vector<int> shape, int fan_in, Rng& rng) {
    return uniform_init(std::move(shape), fan_in, rng);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    const int dh = cfg.hidden_dim, d = cfg.latent_dim, n = cfg.num_labels;
    const int de = cfg.embed_dim, m = cfg.mlp_hidden;
    for (int v = 0; v < cfg.views; ++v) {
        const int dx = cfg.feature_dims[v];
        RecurrentCell cell;
        cell.w_in = init_block({dh, dx}, dx, rng);
        cell.u_rec = init_block({dh, dh}, dh, rng);
        cell.b = init_block({dh, 1}, dx, rng);
        cell.wf_in = init_block({dh, dx}, dx, rng);
        cell.uf_rec = init_block({dh, dh}, dh, rng);
        cell.bf = init_block({dh, 1}, dx, rng);
        cell.wo_in = init_block({dh, dx}, dx, rng);
        cell.uo_rec = init_block({dh, dh}, dh, rng);
        cell.bo = init_block({dh, 1}, dx, rng);
        cell.wg_in = init_block({dh, dx}, dx, rng);
        cell.ug_rec = init_block({dh, dh}, dh, rng);
        cell.bg = init_block({dh, 1}, dx, rng);
        p.cells.push_back(std::move(cell));
    }
    for (int v = 0; v < cfg.views; ++v) {
        Mlp net;
        net.w1 = init_block({m, dh}, dh, rng);
        net.b1 = init_block({m, 1}, dh, rng);
        net.w2 = init_block({2 * d, m}, m, rng);
        net.b2 = init_block({2 * d, 1}, m, rng);
        p.inference_nets.push_back(std::move(net));
    }
    for (int v = 0; v < cfg.views; ++v) {
        Mlp net;
        net.w1 = init_block({m, d}, d, rng);
        net.b1 = init_block({m, 1}, d, rng);
        net.w2 = init_block({dh, m}, m, rng);
        net.b2 = init_block({dh, 1}, m, rng);
        p.generative_nets.push_back(std::move(net));
    }
    p.label_embedding = init_block({n, de}, de, rng);
    p.attention_map = init_block({de, d}, de, rng);
    p.label_weights = init_block({n, d}, d, rng);
    p.transitions = Tensor({n, n});  // zero-initialized transition scores
    return p;
}

namespace {

template <typename Params, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> enumerate_blocks(Params& p) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    auto add = [&out](const std::string& name, TensorPtr t) { out.push_back({name, t}); };
    for (std::size_t v = 0; v < p.cells.size(); ++v) {
        auto& c = p.cells[v];
        std::string base = "view" + std::to_string(v) + ".cell.";
        add(base + "w_in", &c.w_in);
        add(base + "u_rec", &c.u_rec);
        add(base + "b", &c.b);
        add(base + "wf_in", &c.wf_in);
        add(base + "uf_rec", &c.uf_rec);
        add(base + "bf", &c.bf);
        add(base + "wo_in", &c.wo_in);
        add(base + "uo_rec", &c.uo_rec);
        add(base + "bo", &c.bo);
        add(base + "wg_in", &c.wg_in);
        add(base + "ug_rec", &c.ug_rec);
        add(base + "bg", &c.bg);
    }
    for (std::size_t v = 0; v < p.inference_nets.size(); ++v) {
        auto& net = p.inference_nets[v];
        std::string base = "view" + std::to_string(v) + ".inference.";
        add(base + "w1", &net.w1);
        add(base + "b1", &net.b1);
        add(base + "w2", &net.w2);
        add(base + "b2", &net.b2);
    }
    for (std::size_t v = 0; v < p.generative_nets.size(); ++v) {
        auto& net = p.generative_nets[v];
        std::string base = "view" + std::to_string(v) + ".generative.";
        add(base + "w1", &net.w1);
        add(base + "b1", &net.b1);
        add(base + "w2", &net.w2);
        add(base + "b2", &net.b2);
    }
    add("label_embedding", &p.label_embedding);
    add("attention_map", &p.attention_map);
    add("label_weights", &p.label_weights);
    add("transitions", &p.transitions);
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::blocks() {
    return enumerate_blocks<ModelParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::blocks() const {
    return enumerate_blocks<const ModelParams, const Tensor*>(*this);
}

// ---------------------------------------------------------------------------
// Graph construction

namespace {

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// Nonempty view subsets as bitmasks: singletons first, then by size and mask.
std::vector<unsigned> subset_masks(int views) {
    std::vector<unsigned> masks;
    for (unsigned m = 1; m < (1u << views); ++m) masks.push_back(m);
    std::stable_sort(masks.begin(), masks.end(), [](unsigned a, unsigned b) {
        int pa = std::popcount(a), pb = std::popcount(b);
        return pa != pb ? pa < pb : a < b;
    });
    return masks;
}

struct TapeCell {
    VarId wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg;
};

struct TapeMlp {
    VarId w1, b1, w2, b2;
};

struct TapeModel {
    const ModelConfig* cfg = nullptr;
    std::vector<TapeCell> cells;
    std::vector<TapeMlp> inf, gen;
    VarId embedding = -1, attention = -1, label_w = -1, transitions = -1;
    std::vector<VarId> block_ids;  // declared block order
};

TapeModel mount(Tape& tape, const ModelParams& params, bool requires_grad) {
    TapeModel tm;
    tm.cfg = &params.config;
    auto blocks = params.blocks();
    std::vector<VarId> ids;
    ids.reserve(blocks.size());
    for (auto& [name, tensor] : blocks) ids.push_back(tape.leaf(*tensor, requires_grad));
    tm.block_ids = ids;
    std::size_t k = 0;
    for (int v = 0; v < params.config.views; ++v) {
        TapeCell c;
        c.wi = ids[k++]; c.ui = ids[k++]; c.bi = ids[k++];
        c.wf = ids[k++]; c.uf = ids[k++]; c.bf = ids[k++];
        c.wo = ids[k++]; c.uo = ids[k++]; c.bo = ids[k++];
        c.wg = ids[k++]; c.ug = ids[k++]; c.bg = ids[k++];
        tm.cells.push_back(c);
    }
    for (int v = 0; v < params.config.views; ++v) {
        TapeMlp net{ids[k], ids[k + 1], ids[k + 2], ids[k + 3]};
        k += 4;
        tm.inf.push_back(net);
    }
    for (int v = 0; v < params.config.views; ++v) {
        TapeMlp net{ids[k], ids[k + 1], ids[k + 2], ids[k + 3]};
        k += 4;
        tm.gen.push_back(net);
    }
    tm.embedding = ids[k++];
    tm.attention = ids[k++];
    tm.label_w = ids[k++];
    tm.transitions = ids[k++];
    return tm;
}

VarId linear(Tape& t, VarId w, VarId x, VarId b) { return t.add(t.matmul(w, x), b); }

VarId mlp_forward(Tape& t, const TapeMlp& net, VarId x) {
    return linear(t, net.w2, t.tanh(linear(t, net.w1, x, net.b1)), net.b2);
}

// One gated recurrence step; E[h_t] = tanh(c_t) (.) output gate.
std::pair<VarId, VarId> cell_step(Tape& t, const TapeCell& c, VarId x, VarId h_prev, VarId c_prev) {
    VarId gate_i = t.sigmoid(linear(t, c.wi, x, t.add(t.matmul(c.ui, h_prev), c.bi)));
    VarId gate_f = t.sigmoid(linear(t, c.wf, x, t.add(t.matmul(c.uf, h_prev), c.bf)));
    VarId gate_o = t.sigmoid(linear(t, c.wo, x, t.add(t.matmul(c.uo, h_prev), c.bo)));
    VarId cand = t.tanh(linear(t, c.wg, x, t.add(t.matmul(c.ug, h_prev), c.bg)));
    VarId c_new = t.add(t.mul(gate_f, c_prev), t.mul(gate_i, cand));
    VarId h_new = t.mul(t.tanh(c_new), gate_o);
    return {h_new, c_new};
}

std::vector<VarId> encode_view_graph(Tape& t, const TapeModel& tm, int view,
                                     const std::vector<VarId>& frames) {
    const int dh = tm.cfg->hidden_dim;
    VarId h = t.leaf(Tensor({dh, 1}));
    VarId c = t.leaf(Tensor({dh, 1}));
    std::vector<VarId> hidden;
    hidden.reserve(frames.size());
    for (VarId x : frames) {
        auto [h_new, c_new] = cell_step(t, tm.cells[view], x, h, c);
        h = h_new;
        c = c_new;
        hidden.push_back(h);
    }
    return hidden;
}

struct TapeExpert {
    VarId mean, precision;
};

TapeExpert view_expert_graph(Tape& t, const TapeModel& tm, int view, VarId h_tilde) {
    const int d = tm.cfg->latent_dim;
    VarId out = mlp_forward(t, tm.inf[view], h_tilde);
    VarId mean = t.slice(out, 0, 0, d);
    VarId raw = t.slice(out, 0, d, d);
    VarId one = t.leaf(Tensor::full({d, 1}, 1.0));
    VarId precision = t.add(t.softplus(raw), one);
    return {mean, precision};
}

struct TapePosterior {
    VarId gamma, lambda;
    unsigned mask = 0;
};

std::vector<TapePosterior> infer_graph(Tape& t, const TapeModel& tm,
                                       const std::vector<TapeExpert>& experts) {
    const int d = tm.cfg->latent_dim;
    const int views = tm.cfg->views;
    std::vector<TapePosterior> posts;
    for (unsigned mask : subset_masks(views)) {
        TapePosterior post;
        post.mask = mask;
        if (std::popcount(mask) == 1) {
            int v = std::countr_zero(mask);
            post.gamma = experts[v].mean;  // the expert itself, untouched
            post.lambda = t.reciprocal(experts[v].precision);
        } else {
            VarId prec_sum = -1, weighted = -1;
            int members = 0;
            for (int v = 0; v < views; ++v) {
                if (!(mask & (1u << v))) continue;
                VarId pm = t.mul(experts[v].precision, experts[v].mean);
                prec_sum = members == 0 ? experts[v].precision : t.add(prec_sum, experts[v].precision);
                weighted = members == 0 ? pm : t.add(weighted, pm);
                ++members;
            }
            VarId excess = t.leaf(Tensor::full({d, 1}, -(static_cast<double>(members) - 1.0)));
            post.lambda = t.reciprocal(t.add(prec_sum, excess));
            post.gamma = t.mul(post.lambda, weighted);
        }
        posts.push_back(post);
    }
    return posts;
}

// Per-label attention queries Em(b_n) U, built once per tape.
std::vector<VarId> attention_queries(Tape& t, const TapeModel& tm) {
    std::vector<VarId> queries;
    for (int n = 0; n < tm.cfg->num_labels; ++n) {
        VarId en = t.slice(tm.embedding, 0, n, 1);
        queries.push_back(t.matmul(en, tm.attention));
    }
    return queries;
}

VarId attended_latent_graph(Tape& t, VarId gammas_matrix /* {d, I} */, VarId query /* {1, d} */) {
    VarId r = t.transpose(t.matmul(query, gammas_matrix));  // {I,1}
    VarId shifted = t.add(r, t.scale(t.logsumexp(r), -1.0));
    VarId alpha = t.exp(shifted);
    return t.matmul(gammas_matrix, alpha);  // {d,1}
}

// log P(y | unaries, B) via the log-space forward recursion.
VarId crf_log_likelihood_graph(Tape& t, const std::vector<VarId>& unary_rows, VarId transitions,
                               const std::vector<int>& labels) {
    const int frames = static_cast<int>(unary_rows.size());
    VarId bt = t.transpose(transitions);  // row j' holds B[., j']
    VarId alpha = unary_rows[0];
    for (int step = 1; step < frames; ++step) {
        VarId m = t.add(bt, alpha);                       // {N,N} + {1,N}
        VarId reduced = t.transpose(t.logsumexp_rows(m));  // {1,N}
        alpha = t.add(reduced, unary_rows[step]);
    }
    VarId log_z = t.logsumexp(alpha);

    std::vector<VarId> score_terms;
    for (int step = 0; step < frames; ++step) {
        score_terms.push_back(t.slice(unary_rows[step], 1, labels[step], 1));
        if (step > 0) {
            VarId row = t.slice(transitions, 0, labels[step - 1], 1);
            score_terms.push_back(t.slice(row, 1, labels[step], 1));
        }
    }
    VarId score = score_terms.size() == 1
                      ? score_terms[0]
                      : t.sum(t.concat(std::span<const VarId>(score_terms), 0));
    return t.add(score, t.scale(log_z, -1.0));
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// KL(N(gamma, lambda) || N(0, I)) composed from elementwise primitives in the
// same association order as kl_to_standard.
VarId kl_graph(Tape& t, const TapePosterior& post, int d) {
    VarId a = t.add(post.lambda, t.square(post.gamma));
    VarId c = t.add(a, t.leaf(Tensor::full({d, 1}, -1.0)));
    VarId e = t.add(c, t.scale(t.log(post.lambda), -1.0));
    return t.sum(t.scale(e, 0.5));
}

VarId elbo_graph(Tape& t, const TapeModel& tm, const std::vector<VarId>& h_per_view,
                 const TapePosterior& full_posterior, std::span<const double> noise,
                 VarId* recon_out = nullptr, VarId* kl_out = nullptr) {
    const int d = tm.cfg->latent_dim;
    const int dh = tm.cfg->hidden_dim;
    VarId sqrt_lambda = t.exp(t.scale(t.log(full_posterior.lambda), 0.5));
    VarId eps = t.leaf(Tensor::col(std::vector<double>(noise.begin(), noise.end())));
    VarId z = t.add(full_posterior.gamma, t.mul(sqrt_lambda, eps));

    VarId recon = -1;
    for (int v = 0; v < tm.cfg->views; ++v) {
        VarId dec = mlp_forward(t, tm.gen[v], z);
        VarId residual = t.add(h_per_view[v], t.scale(dec, -1.0));
        VarId sq = t.sum(t.square(residual));
        VarId term = t.add(t.scale(sq, -0.5), t.leaf(Tensor::scalar(-0.5 * dh * kLog2Pi)));
        recon = v == 0 ? term : t.add(recon, term);
    }
    VarId kl = kl_graph(t, full_posterior, d);
    if (recon_out) *recon_out = recon;
    if (kl_out) *kl_out = kl;
    return t.add(recon, t.scale(kl, -1.0));
}

struct FrameOutputs {
    VarId unary_row;                     // {1, N}
    std::vector<TapePosterior> posts;
    VarId elbo = -1;
};

// Shared forward over one (sub)sequence: encoders, experts, fusions,
// attention, unaries, and optionally the per-frame ELBO terms.
struct SequenceGraph {
    std::vector<VarId> unary_rows;
    std::vector<VarId> elbo_terms;
};

SequenceGraph sequence_forward_graph(Tape& t, const TapeModel& tm, const MultiViewSequence& seq,
                                     int start, int len, AttentionMode mode,
                                     std::span<const double> noise, bool with_elbo) {
    const ModelConfig& cfg = *tm.cfg;
    const int d = cfg.latent_dim;
    const int subsets = cfg.subset_count();

    std::vector<std::vector<VarId>> hidden(cfg.views);
    for (int v = 0; v < cfg.views; ++v) {
        std::vector<VarId> frames;
        frames.reserve(len);
        for (int i = 0; i < len; ++i)
            frames.push_back(t.leaf(Tensor::col(seq.views[v][start + i])));
        hidden[v] = encode_view_graph(t, tm, v, frames);
    }

    std::vector<VarId> queries = attention_queries(t, tm);
    std::vector<VarId> label_rows;
    for (int n = 0; n < cfg.num_labels; ++n) label_rows.push_back(t.slice(tm.label_w, 0, n, 1));

    VarId uniform_alpha = -1;
    if (mode == AttentionMode::Uniform)
        uniform_alpha = t.leaf(Tensor::col(std::vector<double>(subsets, 1.0 / subsets)));

    SequenceGraph out;
    for (int i = 0; i < len; ++i) {
        std::vector<TapeExpert> experts;
        std::vector<VarId> h_frame;
        for (int v = 0; v < cfg.views; ++v) {
            h_frame.push_back(hidden[v][i]);
            experts.push_back(view_expert_graph(t, tm, v, hidden[v][i]));
        }
        std::vector<TapePosterior> posts = infer_graph(t, tm, experts);

        std::vector<VarId> gammas;
        for (const TapePosterior& p : posts) gammas.push_back(p.gamma);
        VarId gamma_matrix = t.concat(std::span<const VarId>(gammas), 1);  // {d, I}

        std::vector<VarId> unaries;
        for (int n = 0; n < cfg.num_labels; ++n) {
            VarId z;
            switch (mode) {
                case AttentionMode::Full:
                    z = attended_latent_graph(t, gamma_matrix, queries[n]);
                    break;
                case AttentionMode::Uniform:
                    z = t.matmul(gamma_matrix, uniform_alpha);
                    break;
                case AttentionMode::SharedOnly:
                    z = posts.back().gamma;  // the all-views subset
                    break;
            }
            unaries.push_back(t.matmul(label_rows[n], z));
        }
        out.unary_rows.push_back(t.concat(std::span<const VarId>(unaries), 1));

        if (with_elbo) {
            std::span<const double> frame_noise = noise.subspan(static_cast<std::size_t>(i) * d, d);
            out.elbo_terms.push_back(elbo_graph(t, tm, h_frame, posts.back(), frame_noise));
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Value-level operations

std::vector<std::vector<double>> encode_view(const ModelParams& params, int view,
                                             const std::vector<std::vector<double>>& x_seq) {
    params.config.validate();
    if (view < 0 || view >= params.config.views) throw DimMismatch("encode_view: view index");
    if (x_seq.empty()) throw DimMismatch("encode_view: empty sequence");
    for (const auto& x : x_seq)
        if (static_cast<int>(x.size()) != params.config.feature_dims[view])
            throw DimMismatch("encode_view: frame dimension mismatch");
    Tape tape;
    TapeModel tm = mount(tape, params, false);
    std::vector<VarId> frames;
    for (const auto& x : x_seq) frames.push_back(tape.leaf(Tensor::col(x)));
    std::vector<VarId> hidden = encode_view_graph(tape, tm, view, frames);
    std::vector<std::vector<double>> out;
    for (VarId h : hidden) out.push_back(tape.value(h).values());
    return out;
}

std::vector<DiagonalGaussian> view_experts(const ModelParams& params,
                                           const std::vector<std::vector<double>>& h_tilde) {
    const ModelConfig& cfg = params.config;
    if (static_cast<int>(h_tilde.size()) != cfg.views)
        throw DimMismatch("view_experts: need one hidden vector per view");
    const int d = cfg.latent_dim, m = cfg.mlp_hidden, dh = cfg.hidden_dim;
    std::vector<DiagonalGaussian> experts;
    for (int v = 0; v < cfg.views; ++v) {
        if (static_cast<int>(h_tilde[v].size()) != dh)
            throw DimMismatch("view_experts: hidden vector dimension mismatch");
        const Mlp& net = params.inference_nets[v];
        std::vector<double> a1(m);
        for (int i = 0; i < m; ++i) {
            double acc = net.b1[i];
            for (int j = 0; j < dh; ++j) acc += net.w1(i, j) * h_tilde[v][j];
            a1[i] = std::tanh(acc);
        }
        DiagonalGaussian g;
        g.mean.resize(d);
        g.variance.resize(d);
        for (int i = 0; i < 2 * d; ++i) {
            double acc = net.b2[i];
            for (int j = 0; j < m; ++j) acc += net.w2(i, j) * a1[j];
            if (i < d)
                g.mean[i] = acc;
            else
                g.variance[i - d] = 1.0 / (stable_softplus(acc) + 1.0);
        }
        experts.push_back(std::move(g));
    }
    return experts;
}

std::vector<FusedPosterior> infer_latents(const ModelParams& params,
                                          const std::vector<std::vector<double>>& h_tilde) {
    const ModelConfig& cfg = params.config;
    if (cfg.views > ModelConfig::kMaxViews) throw TooManyViews("infer_latents: at most 4 views");
    std::vector<DiagonalGaussian> experts = view_experts(params, h_tilde);
    std::vector<FusedPosterior> posts;
    for (unsigned mask : subset_masks(cfg.views)) {
        std::vector<DiagonalGaussian> subset;
        std::vector<int> members;
        for (int v = 0; v < cfg.views; ++v)
            if (mask & (1u << v)) {
                subset.push_back(experts[v]);
                members.push_back(v);
            }
        posts.push_back(poe_fuse(subset, members));
    }
    return posts;
}

std::vector<double> attend(const ModelParams& params,
                           const std::vector<FusedPosterior>& posteriors, int label,
                           AttentionMode mode) {
    const ModelConfig& cfg = params.config;
    if (label < 0 || label >= cfg.num_labels)
        throw LabelOutOfRange("attend: label outside [0, N)");
    if (posteriors.empty()) throw DimMismatch("attend: no posteriors");
    const int d = cfg.latent_dim;
    const int count = static_cast<int>(posteriors.size());

    if (mode == AttentionMode::SharedOnly) return posteriors.back().gamma;

    std::vector<double> alpha(count, 1.0 / count);
    if (mode == AttentionMode::Full) {
        // query = Em(b_n) U, scores r_i = query . gamma_i, softmax over i.
        std::vector<double> query(d, 0.0);
        for (int b = 0; b < d; ++b) {
            double acc = 0.0;
            for (int a = 0; a < cfg.embed_dim; ++a)
                acc += params.label_embedding(label, a) * params.attention_map(a, b);
            query[b] = acc;
        }
        std::vector<double> scores(count);
        double top = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < count; ++i) {
            if (static_cast<int>(posteriors[i].dim()) != d)
                throw DimMismatch("attend: posterior dimension mismatch");
            double acc = 0.0;
            for (int b = 0; b < d; ++b) acc += query[b] * posteriors[i].gamma[b];
            scores[i] = acc;
            top = std::max(top, acc);
        }
        double norm = 0.0;
        for (int i = 0; i < count; ++i) {
            alpha[i] = std::exp(scores[i] - top);
            norm += alpha[i];
        }
        for (double& a : alpha) a /= norm;
    }

    std::vector<double> z(d, 0.0);
    for (int i = 0; i < count; ++i)
        for (int b = 0; b < d; ++b) z[b] += alpha[i] * posteriors[i].gamma[b];
    return z;
}

std::vector<double> unary_scores(const ModelParams& params,
                                 const std::vector<std::vector<double>>& z_by_label) {
    const ModelConfig& cfg = params.config;
    if (static_cast<int>(z_by_label.size()) != cfg.num_labels)
        throw DimMismatch("unary_scores: need one latent per label");
    std::vector<double> scores(cfg.num_labels, 0.0);
    for (int n = 0; n < cfg.num_labels; ++n) {
        if (static_cast<int>(z_by_label[n].size()) != cfg.latent_dim)
            throw DimMismatch("unary_scores: latent dimension mismatch");
        double acc = 0.0;
        for (int b = 0; b < cfg.latent_dim; ++b) acc += params.label_weights(n, b) * z_by_label[n][b];
        scores[n] = acc;
    }
    return scores;
}

double sequence_log_likelihood(const std::vector<std::vector<double>>& unaries,
                               const std::vector<std::vector<double>>& transition,
                               const std::vector<int>& labels) {
    const int frames = static_cast<int>(unaries.size());
    if (frames < 1) throw ShapeMismatch("sequence_log_likelihood: need at least one frame");
    if (labels.size() != unaries.size())
        throw LengthMismatch("sequence_log_likelihood: label count mismatch");
    const int n = static_cast<int>(unaries[0].size());

    auto lse = [](const std::vector<double>& v) {
        double m = *std::max_element(v.begin(), v.end());
        double acc = 0.0;
        for (double x : v) acc += std::exp(x - m);
        return m + std::log(acc);
    };

    std::vector<double> alpha = unaries[0];
    std::vector<double> tmp(n);
    for (int step = 1; step < frames; ++step) {
        std::vector<double> next(n);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) tmp[i] = alpha[i] + transition[i][j];
            next[j] = unaries[step][j] + lse(tmp);
        }
        alpha.swap(next);
    }
    double log_z = lse(alpha);

    double score = 0.0;
    for (int step = 0; step < frames; ++step) {
        score += unaries[step][labels[step]];
        if (step > 0) score += transition[labels[step - 1]][labels[step]];
    }
    return score - log_z;
}

ElboBreakdown elbo_breakdown(const ModelParams& params,
                             const std::vector<std::vector<double>>& h_tilde,
                             const FusedPosterior& posterior, const std::vector<double>& noise) {
    const ModelConfig& cfg = params.config;
    if (static_cast<int>(h_tilde.size()) != cfg.views)
        throw DimMismatch("elbo: need one hidden vector per view");
    if (static_cast<int>(posterior.dim()) != cfg.latent_dim)
        throw DimMismatch("elbo: posterior dimension mismatch");
    if (static_cast<int>(noise.size()) != cfg.latent_dim)
        throw DimMismatch("elbo: noise must have latent dimension");
    for (const auto& h : h_tilde)
        if (static_cast<int>(h.size()) != cfg.hidden_dim)
            throw DimMismatch("elbo: hidden vector dimension mismatch");

    Tape tape;
    TapeModel tm = mount(tape, params, false);
    std::vector<VarId> h_vars;
    for (const auto& h : h_tilde) h_vars.push_back(tape.leaf(Tensor::col(h)));
    TapePosterior post;
    post.gamma = tape.leaf(Tensor::col(posterior.gamma));
    post.lambda = tape.leaf(Tensor::col(posterior.lambda));
    VarId recon = -1, kl = -1;
    VarId value = elbo_graph(tape, tm, h_vars, post, noise, &recon, &kl);
    return {tape.value(recon)[0], tape.value(kl)[0], tape.value(value)[0]};
}

double elbo(const ModelParams& params, const std::vector<std::vector<double>>& h_tilde,
            const FusedPosterior& posterior, const std::vector<double>& noise) {
    return elbo_breakdown(params, h_tilde, posterior, noise).elbo;
}

std::vector<std::vector<double>> predict_unaries(const MultiViewSequence& seq,
                                                 const ModelParams& params, AttentionMode mode) {
    const ModelConfig& cfg = params.config;
    seq.validate();
    if (seq.view_count() != cfg.views) throw DimMismatch("predict_unaries: view count mismatch");
    const int frames = seq.frames();
    if (frames == 0) return {};
    for (int v = 0; v < cfg.views; ++v)
        if (seq.view_dim(v) != cfg.feature_dims[v])
            throw DimMismatch("predict_unaries: feature dimension mismatch in view " +
                              std::to_string(v));

    std::vector<std::vector<std::vector<double>>> hidden(cfg.views);
    for (int v = 0; v < cfg.views; ++v) hidden[v] = encode_view(params, v, seq.views[v]);

    std::vector<std::vector<double>> out(frames);
    std::vector<std::vector<double>> h_frame(cfg.views);
    for (int t = 0; t < frames; ++t) {
        for (int v = 0; v < cfg.views; ++v) h_frame[v] = hidden[v][t];
        std::vector<FusedPosterior> posts = infer_latents(params, h_frame);
        std::vector<std::vector<double>> z_by_label(cfg.num_labels);
        for (int n = 0; n < cfg.num_labels; ++n) z_by_label[n] = attend(params, posts, n, mode);
        out[t] = unary_scores(params, z_by_label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

SubsequenceSampler::SubsequenceSampler(const std::vector<MultiViewSequence>& dataset, int window,
                                       int num_classes, bool balanced) {
    if (dataset.empty()) throw EmptyDataset("sampler: dataset is empty");
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const int frames = dataset[s].frames();
        if (frames >= window) {
            for (int start = 0; start + window <= frames; ++start)
                candidates_.push_back({static_cast<int>(s), start, window,
                                       dataset[s].labels[start + window / 2]});
        } else if (frames > 0) {
            candidates_.push_back({static_cast<int>(s), 0, frames, dataset[s].labels[frames / 2]});
        }
    }
    if (candidates_.empty()) throw EmptyDataset("sampler: no usable subsequences");

    std::vector<double> freq = class_frequencies(dataset, num_classes);
    cdf_.resize(candidates_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        double w = 1.0;
        if (balanced) w = 1.0 / std::max(freq[candidates_[i].center_label], 1e-4);
        acc += w;
        cdf_[i] = acc;
    }
    for (double& c : cdf_) c /= acc;
}

const SubsequenceSampler::Candidate& SubsequenceSampler::draw(Rng& rng) const {
    double u = rng.uniform();
    std::size_t lo = std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
    if (lo >= candidates_.size()) lo = candidates_.size() - 1;
    return candidates_[lo];
}

double batch_loss_and_gradients(ModelParams& params, const std::vector<MultiViewSequence>& dataset,
                                const std::vector<BatchSlice>& slices,
                                const std::vector<std::vector<double>>& noise_per_item,
                                std::vector<Tensor>* gradients, double* ll_term,
                                double* elbo_term) {
    const ModelConfig& cfg = params.config;
    if (slices.empty()) throw EmptyDataset("batch: no slices");
    if (noise_per_item.size() != slices.size())
        throw DimMismatch("batch: need one noise vector per slice");

    Tape tape;
    TapeModel tm = mount(tape, params, gradients != nullptr);
    VarId total = -1;
    double ll_acc = 0.0, elbo_acc = 0.0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const BatchSlice& slice = slices[i];
        const MultiViewSequence& seq = dataset[slice.sequence];
        if (static_cast<int>(noise_per_item[i].size()) != slice.length * cfg.latent_dim)
            throw DimMismatch("batch: noise vector must be length * latent_dim");
        SequenceGraph graph = sequence_forward_graph(tape, tm, seq, slice.start, slice.length,
                                                     AttentionMode::Full, noise_per_item[i], true);
        std::vector<int> labels(seq.labels.begin() + slice.start,
                                seq.labels.begin() + slice.start + slice.length);
        VarId ll = crf_log_likelihood_graph(tape, graph.unary_rows, tm.transitions, labels);
        VarId elbo_mean = tape.mean(tape.concat(std::span<const VarId>(graph.elbo_terms), 0));
        VarId item = tape.add(tape.scale(ll, -1.0 / slice.length),
                              tape.scale(elbo_mean, -cfg.lambda_elbo));
        ll_acc += -tape.value(ll)[0] / slice.length;
        elbo_acc += -cfg.lambda_elbo * tape.value(elbo_mean)[0];
        total = i == 0 ? item : tape.add(total, item);
    }
    VarId loss = tape.scale(total, 1.0 / static_cast<double>(slices.size()));
    if (ll_term) *ll_term = ll_acc / static_cast<double>(slices.size());
    if (elbo_term) *elbo_term = elbo_acc / static_cast<double>(slices.size());

    if (gradients) {
        tape.backward(loss);
        gradients->clear();
        for (VarId id : tm.block_ids) gradients->push_back(tape.grad(id));
    }
    return tape.value(loss)[0];
}

namespace {

void validate_dataset(const std::vector<MultiViewSequence>& dataset, const ModelConfig& cfg) {
    if (dataset.empty()) throw EmptyDataset("train: dataset is empty");
    for (const MultiViewSequence& seq : dataset) {
        seq.validate();
        if (seq.view_count() != cfg.views)
            throw InconsistentViews("train: sequence '" + seq.id + "' has wrong view count");
        for (int v = 0; v < cfg.views; ++v)
            if (seq.frames() > 0 && seq.view_dim(v) != cfg.feature_dims[v])
                throw InconsistentViews("train: sequence '" + seq.id +
                                        "' feature dims mismatch in view " + std::to_string(v));
        for (int label : seq.labels)
            if (label < 0 || label >= cfg.num_labels)
                throw LabelOutOfRange("train: label outside [0, N) in sequence '" + seq.id + "'");
    }
}

}  // namespace

TrainResult train(const std::vector<MultiViewSequence>& dataset, const ModelConfig& cfg) {
    cfg.validate();
    validate_dataset(dataset, cfg);

    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    Rng sample_rng = root.fork(2);
    Rng noise_rng = root.fork(3);

    TrainResult result;
    result.params = ModelParams::init(cfg, init_rng);

    long total_frames = 0;
    for (const MultiViewSequence& seq : dataset) total_frames += seq.frames();
    int steps = cfg.steps_per_epoch > 0
                    ? cfg.steps_per_epoch
                    : std::max(1L, total_frames / (static_cast<long>(cfg.batch_size) *
                                                   cfg.train_window));

    SubsequenceSampler sampler(dataset, cfg.train_window, cfg.num_labels, cfg.balanced_sampling);
    std::vector<Tensor> grads;
    auto blocks = result.params.blocks();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochStats stats;
        for (int step = 0; step < steps; ++step) {
            std::vector<BatchSlice> slices;
            std::vector<std::vector<double>> noise;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const auto& cand = sampler.draw(sample_rng);
                slices.push_back({cand.sequence, cand.start, cand.length});
                std::vector<double> eps(static_cast<std::size_t>(cand.length) * cfg.latent_dim);
                for (double& e : eps) e = noise_rng.gaussian();
                noise.push_back(std::move(eps));
            }
            double ll_part = 0.0, elbo_part = 0.0;
            double loss = batch_loss_and_gradients(result.params, dataset, slices, noise, &grads,
                                                   &ll_part, &elbo_part);
            if (cfg.learning_rate > 0.0) {
                blocks = result.params.blocks();
                for (std::size_t i = 0; i < blocks.size(); ++i)
                    sgd_step(*blocks[i].second, grads[i], cfg.learning_rate);
            }
            stats.loss += loss;
            stats.ll_term += ll_part;
            stats.elbo_term += elbo_part;
        }
        stats.loss /= steps;
        stats.ll_term /= steps;
        stats.elbo_term /= steps;
        result.trace.push_back(stats);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint and trace files

namespace {

void write_u64_le(std::ostream& out, std::uint64_t bits) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return bits;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("save_checkpoint: cannot open '" + path + "'");
    const ModelConfig& cfg = params.config;
    out << "MVLADDM-CKPT 1\n";
    out << "views " << cfg.views << '\n';
    out << "latent_dim " << cfg.latent_dim << '\n';
    out << "hidden_dim " << cfg.hidden_dim << '\n';
    out << "num_labels " << cfg.num_labels << '\n';
    out << "embed_dim " << cfg.embed_dim << '\n';
    out << "mlp_hidden " << cfg.mlp_hidden << '\n';
    out << "feature_dims";
    for (int d : cfg.feature_dims) out << ' ' << d;
    out << '\n';
    out << "lambda_elbo " << format_double(cfg.lambda_elbo) << '\n';
    out << "learning_rate " << format_double(cfg.learning_rate) << '\n';
    out << "epochs " << cfg.epochs << '\n';
    out << "batch_size " << cfg.batch_size << '\n';
    out << "train_window " << cfg.train_window << '\n';
    out << "steps_per_epoch " << cfg.steps_per_epoch << '\n';
    out << "balanced_sampling " << (cfg.balanced_sampling ? 1 : 0) << '\n';
    out << "seed " << cfg.seed << '\n';
    auto blocks = params.blocks();
    out << "blocks " << blocks.size() << '\n';
    for (auto& [name, tensor] : blocks) {
        out << "block " << name;
        for (int dim : tensor->shape()) out << ' ' << dim;
        out << '\n';
    }
    out << "data\n";
    for (auto& [name, tensor] : blocks)
        for (std::int64_t i = 0; i < tensor->size(); ++i)
            write_u64_le(out, std::bit_cast<std::uint64_t>((*tensor)[i]));
    if (!out) throw IoFailure("save_checkpoint: write failed");
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("load_checkpoint: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "MVLADDM-CKPT 1")
        throw CheckpointMismatch("load_checkpoint: bad magic line");

    ModelConfig cfg;
    std::vector<std::pair<std::string, std::vector<int>>> declared;
    long expected_blocks = -1;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "views") ls >> cfg.views;
        else if (key == "latent_dim") ls >> cfg.latent_dim;
        else if (key == "hidden_dim") ls >> cfg.hidden_dim;
        else if (key == "num_labels") ls >> cfg.num_labels;
        else if (key == "embed_dim") ls >> cfg.embed_dim;
        else if (key == "mlp_hidden") ls >> cfg.mlp_hidden;
        else if (key == "feature_dims") {
            int d;
            cfg.feature_dims.clear();
            while (ls >> d) cfg.feature_dims.push_back(d);
        } else if (key == "lambda_elbo") ls >> cfg.lambda_elbo;
        else if (key == "learning_rate") ls >> cfg.learning_rate;
        else if (key == "epochs") ls >> cfg.epochs;
        else if (key == "batch_size") ls >> cfg.batch_size;
        else if (key == "train_window") ls >> cfg.train_window;
        else if (key == "steps_per_epoch") ls >> cfg.steps_per_epoch;
        else if (key == "balanced_sampling") {
            int b;
            ls >> b;
            cfg.balanced_sampling = b != 0;
        } else if (key == "seed") ls >> cfg.seed;
        else if (key == "blocks") ls >> expected_blocks;
        else if (key == "block") {
            std::string name;
            ls >> name;
            std::vector<int> shape;
            int d;
            while (ls >> d) shape.push_back(d);
            declared.push_back({name, shape});
        } else {
            throw CheckpointMismatch("load_checkpoint: unknown header key '" + key + "'");
        }
        if (ls.fail() && !ls.eof())
            throw CheckpointMismatch("load_checkpoint: malformed header line '" + line + "'");
    }
    if (expected_blocks != static_cast<long>(declared.size()))
        throw CheckpointMismatch("load_checkpoint: block count mismatch");

    Rng dummy(0);
    ModelParams params = ModelParams::init(cfg, dummy);
    auto blocks = params.blocks();
    if (blocks.size() != declared.size())
        throw CheckpointMismatch("load_checkpoint: block list does not match this configuration");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].first != declared[i].first)
            throw CheckpointMismatch("load_checkpoint: block name mismatch at '" +
                                     declared[i].first + "'");
        if (blocks[i].second->shape() != declared[i].second)
            throw CheckpointMismatch("load_checkpoint: shape mismatch for '" + declared[i].first +
                                     "'");
        Tensor& tensor = *blocks[i].second;
        for (std::int64_t j = 0; j < tensor.size(); ++j) {
            std::uint64_t bits = read_u64_le(in);
            if (!in) throw CheckpointMismatch("load_checkpoint: truncated parameter data");
            tensor[j] = std::bit_cast<double>(bits);
        }
    }
    return params;
}

void save_loss_trace(const std::vector<EpochStats>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("save_loss_trace: cannot open '" + path + "'");
    out << "epoch,loss,ll_term,elbo_term\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << ',' << format_double(trace[i].loss) << ',' << format_double(trace[i].ll_term)
            << ',' << format_double(trace[i].elbo_term) << '\n';
    if (!out) throw IoFailure("save_loss_trace: write failed");
}

}  // namespace mvladdm
