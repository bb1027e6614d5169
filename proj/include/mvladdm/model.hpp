#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvladdm/dataset.hpp"
#include "mvladdm/errors.hpp"
#include "mvladdm/gaussian.hpp"
#include "mvladdm/rng.hpp"
#include "mvladdm/tensor.hpp"

namespace mvladdm {

struct ModelConfig {
    int views = 2;
    int latent_dim = 8;   // z_t
    int hidden_dim = 16;  // h_t^v per view
    int num_labels = 4;
    std::vector<int> feature_dims;  // per view
    int embed_dim = 8;              // label embedding width
    int mlp_hidden = 16;            // inference/generative hidden width
    double lambda_elbo = 0.1;
    double learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 8;
    int train_window = 20;    // subsequence length during training
    int steps_per_epoch = 0;  // 0 = derived from dataset size
    bool balanced_sampling = true;
    std::uint64_t seed = 0;

    // Subset enumeration is 2^V - 1; four views is the supported ceiling.
    static constexpr int kMaxViews = 4;

    void validate() const;
    int subset_count() const { return (1 << views) - 1; }
};

// One gated recurrent cell (input/forget/output gates plus candidate).
struct RecurrentCell {
    Tensor w_in, u_rec, b;      // input gate
    Tensor wf_in, uf_rec, bf;   // forget gate
    Tensor wo_in, uo_rec, bo;   // output gate
    Tensor wg_in, ug_rec, bg;   // candidate
};

struct Mlp {
    Tensor w1, b1, w2, b2;
};

struct ModelParams {
    ModelConfig config;
    std::vector<RecurrentCell> cells;     // per view
    std::vector<Mlp> inference_nets;      // d_h -> (mean, raw precision)
    std::vector<Mlp> generative_nets;     // d -> d_h
    Tensor label_embedding;               // N x d_e
    Tensor attention_map;                 // d_e x d
    Tensor label_weights;                 // N x d
    Tensor transitions;                   // N x N

    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    // Every learnable block with a stable name, in checkpoint order.
    std::vector<std::pair<std::string, Tensor*>> blocks();
    std::vector<std::pair<std::string, const Tensor*>> blocks() const;
};

enum class AttentionMode {
    Full,        // learned label-conditioned attention
    Uniform,     // equal weight on every latent
    SharedOnly,  // only the all-views posterior
};

// ---- Value-level operations (plain vectors in and out) ----

// Expected hidden states E[h_t] for one view's feature sequence.
std::vector<std::vector<double>> encode_view(const ModelParams& params, int view,
                                             const std::vector<std::vector<double>>& x_seq);

// View experts from the inference nets, as (mean, variance) pairs.
std::vector<DiagonalGaussian> view_experts(const ModelParams& params,
                                           const std::vector<std::vector<double>>& h_tilde);

// All 2^V - 1 fused posteriors, singletons first, then subsets ordered by
// size and bitmask. Throws TooManyViews beyond kMaxViews.
std::vector<FusedPosterior> infer_latents(const ModelParams& params,
                                          const std::vector<std::vector<double>>& h_tilde);

// Attention-weighted latent mean for one candidate label.
std::vector<double> attend(const ModelParams& params,
                           const std::vector<FusedPosterior>& posteriors, int label,
                           AttentionMode mode = AttentionMode::Full);

// score[n] = W[n] . z_by_label[n]
std::vector<double> unary_scores(const ModelParams& params,
                                 const std::vector<std::vector<double>>& z_by_label);

// log P(Y | unaries, B) with the log-space forward algorithm.
double sequence_log_likelihood(const std::vector<std::vector<double>>& unaries,
                               const std::vector<std::vector<double>>& transition,
                               const std::vector<int>& labels);

// Single-sample reparameterized ELBO estimate. The breakdown exposes the
// reconstruction and KL parts; the KL is computed on the same path the
// training objective uses, so it matches kl_to_standard bit for bit.
struct ElboBreakdown {
    double reconstruction = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
};

ElboBreakdown elbo_breakdown(const ModelParams& params,
                             const std::vector<std::vector<double>>& h_tilde,
                             const FusedPosterior& posterior, const std::vector<double>& noise);

double elbo(const ModelParams& params, const std::vector<std::vector<double>>& h_tilde,
            const FusedPosterior& posterior, const std::vector<double>& noise);

// Deterministic test-time forward pass: T x N unary scores.
std::vector<std::vector<double>> predict_unaries(const MultiViewSequence& seq,
                                                 const ModelParams& params,
                                                 AttentionMode mode = AttentionMode::Full);

// ---- Training ----

struct EpochStats {
    double loss = 0.0;
    double ll_term = 0.0;    // mean of -log-likelihood / T
    double elbo_term = 0.0;  // mean of lambda_elbo * (-elbo)
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> trace;
};

// Draws fixed-length training subsequences; when balancing is on, the draw
// probability of a candidate is inversely proportional to the empirical
// frequency of its center-frame label.
class SubsequenceSampler {
 public:
    struct Candidate {
        int sequence = 0;
        int start = 0;
        int length = 0;
        int center_label = 0;
    };

    SubsequenceSampler(const std::vector<MultiViewSequence>& dataset, int window, int num_classes,
                       bool balanced);

    const Candidate& draw(Rng& rng) const;
    const std::vector<Candidate>& candidates() const { return candidates_; }

 private:
    std::vector<Candidate> candidates_;
    std::vector<double> cdf_;
};

TrainResult train(const std::vector<MultiViewSequence>& dataset, const ModelConfig& cfg);

// Full training loss for one batch of subsequences, with gradients for every
// parameter block; exposed for the finite-difference suite.
struct BatchSlice {
    int sequence = 0;
    int start = 0;
    int length = 0;
};

double batch_loss_and_gradients(ModelParams& params,
                                const std::vector<MultiViewSequence>& dataset,
                                const std::vector<BatchSlice>& slices,
                                const std::vector<std::vector<double>>& noise_per_item,
                                std::vector<Tensor>* gradients, double* ll_term = nullptr,
                                double* elbo_term = nullptr);

// ---- Checkpoint and trace files ----

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

void save_loss_trace(const std::vector<EpochStats>& trace, const std::string& path);

}  // namespace mvladdm
