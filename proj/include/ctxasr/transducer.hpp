#pragma once
#include <string>
#include <vector>

#include "ctxasr/graph.hpp"
#include "ctxasr/params.hpp"
#include "ctxasr/rng.hpp"

namespace ctxasr {

// Label-history network: embedding + LSTM stack. Blank (id 0) is never part
// of a history; row 0 of the forward output is the zero start state.
struct PredictionNetParams {
    Tensor embedding;  // [V x d_emb]
    struct LstmLayer {
        Tensor w_ih;  // [d_in x 4H], gate order i,f,g,o
        Tensor w_hh;  // [H x 4H]
        Tensor bias;  // [4H], forget block initialized to +1
    };
    std::vector<LstmLayer> lstm;
    int width = 0;  // H == d_pred

    static PredictionNetParams init(int vocab, int d_emb, int n_layers, int width, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Feed-forward joint: dense+tanh over [enc ; pred], then log-softmax over
// vocabulary ids (blank included as id 0).
struct JointParams {
    Tensor w1, b1;  // [(d_model + d_pred) x d_joint]
    Tensor w2, b2;  // [d_joint x V]

    static JointParams init(int d_model, int d_pred, int d_joint, int vocab, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Incremental prediction-network state for decoding.
struct PredictionState {
    std::vector<std::pair<Var, Var>> hc;  // per layer (h, c), each [1 x H]
    Var output;                           // [1 x H]
};

PredictionState prediction_init(Graph& g, PredictionNetParams& p);
PredictionState prediction_step(Graph& g, const PredictionState& s, int token,
                                PredictionNetParams& p);

// [U+1 x d_pred]: row u is the state after consuming the first u tokens.
Var prediction_forward(Graph& g, const std::vector<int>& history, PredictionNetParams& p);

// Row-paired joint evaluation: log-probabilities [N x V] with exact
// normalization per row. enc_rows and pred_rows must have equal row counts.
Var joint_logprobs(Graph& g, Var enc_rows, Var pred_rows, JointParams& p);

// Grid of joint log-probs for every (t, u), row-major t*(U+1)+u.
Var rnnt_log_prob_grid(Graph& g, Var enc, const std::vector<int>& targets,
                       PredictionNetParams& pred, JointParams& joint);

// Negative log-likelihood of the target sequence, marginalized over monotone
// alignments by the forward DP in log space. Differentiable end to end.
Var rnnt_loss_from_grid(Graph& g, Var grid, const std::vector<int>& targets, int t_len);
Var rnnt_loss(Graph& g, Var enc, const std::vector<int>& targets, PredictionNetParams& pred,
              JointParams& joint);

// Value-space forward/backward lattice for diagnostics; both directions must
// produce the same total log-probability.
struct RnntLattice {
    Tensor alpha, beta;  // [T x U+1]
    double log_prob_alpha = 0.0;
    double log_prob_beta = 0.0;
};
RnntLattice rnnt_lattice(const Tensor& grid, const std::vector<int>& targets, int t_len);

// Frame-synchronous greedy decoding; per frame, emits argmax non-blank
// labels (ties break toward the lowest id) until blank wins or the cap hits.
std::vector<int> greedy_decode(const Tensor& enc, PredictionNetParams& pred, JointParams& joint,
                               int max_symbols_per_frame = 4);

}  // namespace ctxasr
