#include "ctxasr/transducer.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxasr {

namespace {

Tensor kernel_init(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    double scale = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
    for (double& v : t.data) v = rng.normal() * scale;
    t.set_requires_grad(true);
    return t;
}

void check_token(int token, int vocab, const char* who) {
    if (token < 0 || token >= vocab)
        throw std::invalid_argument(std::string(who) + ": token id " + std::to_string(token) +
                                    " out of vocabulary (size " + std::to_string(vocab) + ")");
    if (token == 0)
        throw std::invalid_argument(std::string(who) + ": blank is never part of a history");
}

double logsumexp2(double a, double b) {
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

PredictionNetParams PredictionNetParams::init(int vocab, int d_emb, int n_layers, int width,
                                              Rng& rng) {
    PredictionNetParams p;
    p.width = width;
    p.embedding = kernel_init({vocab, d_emb}, rng);
    int d_in = d_emb;
    for (int l = 0; l < n_layers; ++l) {
        LstmLayer layer;
        layer.w_ih = kernel_init({d_in, 4 * width}, rng);
        layer.w_hh = kernel_init({width, 4 * width}, rng);
        layer.bias = Tensor::zeros({4 * width});
        for (int j = width; j < 2 * width; ++j) layer.bias.data[static_cast<size_t>(j)] = 1.0;
        layer.bias.set_requires_grad(true);
        p.lstm.push_back(std::move(layer));
        d_in = width;
    }
    return p;
}

void PredictionNetParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".embedding", embedding);
    for (size_t l = 0; l < lstm.size(); ++l) {
        std::string lp = prefix + ".lstm" + std::to_string(l);
        fn(lp + ".w_ih", lstm[l].w_ih);
        fn(lp + ".w_hh", lstm[l].w_hh);
        fn(lp + ".bias", lstm[l].bias);
    }
}

JointParams JointParams::init(int d_model, int d_pred, int d_joint, int vocab, Rng& rng) {
    JointParams p;
    p.w1 = kernel_init({d_model + d_pred, d_joint}, rng);
    p.b1 = Tensor::zeros({d_joint});
    p.b1.set_requires_grad(true);
    p.w2 = kernel_init({d_joint, vocab}, rng);
    p.b2 = Tensor::zeros({vocab});
    p.b2.set_requires_grad(true);
    return p;
}

void JointParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
}

PredictionState prediction_init(Graph& g, PredictionNetParams& p) {
    PredictionState s;
    for (size_t l = 0; l < p.lstm.size(); ++l)
        s.hc.emplace_back(g.constant(Tensor::zeros({1, p.width})),
                          g.constant(Tensor::zeros({1, p.width})));
    s.output = g.constant(Tensor::zeros({1, p.width}));
    return s;
}

PredictionState prediction_step(Graph& g, const PredictionState& s, int token,
                                PredictionNetParams& p) {
    check_token(token, p.embedding.rows(), "prediction network");
    PredictionState next;
    Var x = g.gather_rows(g.param(p.embedding), {token});
    int h = p.width;
    for (size_t l = 0; l < p.lstm.size(); ++l) {
        auto& layer = p.lstm[l];
        Var gates = g.add_rows(g.add(g.matmul(x, g.param(layer.w_ih)),
                                     g.matmul(s.hc[l].first, g.param(layer.w_hh))),
                               g.param(layer.bias));
        Var in_g = g.sigmoid(g.slice(gates, 1, 0, h));
        Var forget_g = g.sigmoid(g.slice(gates, 1, h, 2 * h));
        Var cand = g.tanh(g.slice(gates, 1, 2 * h, 3 * h));
        Var out_g = g.sigmoid(g.slice(gates, 1, 3 * h, 4 * h));
        Var c = g.add(g.mul(forget_g, s.hc[l].second), g.mul(in_g, cand));
        Var hidden = g.mul(out_g, g.tanh(c));
        next.hc.emplace_back(hidden, c);
        x = hidden;
    }
    next.output = x;
    return next;
}

Var prediction_forward(Graph& g, const std::vector<int>& history, PredictionNetParams& p) {
    std::vector<Var> rows;
    PredictionState s = prediction_init(g, p);
    rows.push_back(s.output);
    for (int token : history) {
        s = prediction_step(g, s, token, p);
        rows.push_back(s.output);
    }
    return rows.size() == 1 ? rows[0] : g.concat(rows, 0);
}

Var joint_logprobs(Graph& g, Var enc_rows, Var pred_rows, JointParams& p) {
    if (g.shape(enc_rows)[0] != g.shape(pred_rows)[0])
        throw std::invalid_argument("joint: row counts differ, " +
                                    shape_str(g.shape(enc_rows)) + " vs " +
                                    shape_str(g.shape(pred_rows)));
    Var joined = g.concat({enc_rows, pred_rows}, 1);
    Var hidden = g.tanh(g.add_rows(g.matmul(joined, g.param(p.w1)), g.param(p.b1)));
    return g.log_softmax(g.add_rows(g.matmul(hidden, g.param(p.w2)), g.param(p.b2)));
}

Var rnnt_log_prob_grid(Graph& g, Var enc, const std::vector<int>& targets,
                       PredictionNetParams& pred, JointParams& joint) {
    int t_len = g.shape(enc)[0];
    int u_len = static_cast<int>(targets.size());
    for (int tok : targets) check_token(tok, pred.embedding.rows(), "rnnt targets");
    if (t_len < 1) throw std::invalid_argument("rnnt: empty encoding");
    Var pred_rows = prediction_forward(g, targets, pred);
    std::vector<int> idx_t(static_cast<size_t>(t_len) * (u_len + 1));
    std::vector<int> idx_u(idx_t.size());
    for (int t = 0; t < t_len; ++t)
        for (int u = 0; u <= u_len; ++u) {
            idx_t[static_cast<size_t>(t) * (u_len + 1) + u] = t;
            idx_u[static_cast<size_t>(t) * (u_len + 1) + u] = u;
        }
    return joint_logprobs(g, g.gather_rows(enc, idx_t), g.gather_rows(pred_rows, idx_u), joint);
}

Var rnnt_loss_from_grid(Graph& g, Var grid, const std::vector<int>& targets, int t_len) {
    int u_len = static_cast<int>(targets.size());
    if (t_len < 1)
        throw std::invalid_argument("rnnt_loss: T'=0 with U=" + std::to_string(u_len));
    auto row = [u_len](int t, int u) { return t * (u_len + 1) + u; };
    auto blank_at = [&](int t, int u) { return g.pick(grid, row(t, u), 0); };
    auto emit_at = [&](int t, int u) {
        return g.pick(grid, row(t, u), targets[static_cast<size_t>(u)]);
    };

    // alpha(t,u) rolled over t; alpha[u] holds row t of the DP.
    std::vector<Var> alpha(static_cast<size_t>(u_len) + 1);
    alpha[0] = g.constant(Tensor::scalar(0.0));
    for (int u = 1; u <= u_len; ++u)
        alpha[static_cast<size_t>(u)] = g.add(alpha[static_cast<size_t>(u - 1)], emit_at(0, u - 1));
    for (int t = 1; t < t_len; ++t) {
        std::vector<Var> next(alpha.size());
        next[0] = g.add(alpha[0], blank_at(t - 1, 0));
        for (int u = 1; u <= u_len; ++u) {
            Var stay = g.add(alpha[static_cast<size_t>(u)], blank_at(t - 1, u));
            Var advance = g.add(next[static_cast<size_t>(u - 1)], emit_at(t, u - 1));
            next[static_cast<size_t>(u)] = g.logaddexp(stay, advance);
        }
        alpha = std::move(next);
    }
    Var total = g.add(alpha[static_cast<size_t>(u_len)], blank_at(t_len - 1, u_len));
    return g.scale(total, -1.0);
}

Var rnnt_loss(Graph& g, Var enc, const std::vector<int>& targets, PredictionNetParams& pred,
              JointParams& joint) {
    Var grid = rnnt_log_prob_grid(g, enc, targets, pred, joint);
    return rnnt_loss_from_grid(g, grid, targets, g.shape(enc)[0]);
}

RnntLattice rnnt_lattice(const Tensor& grid, const std::vector<int>& targets, int t_len) {
    int u_len = static_cast<int>(targets.size());
    auto blank_at = [&](int t, int u) { return grid.at(t * (u_len + 1) + u, 0); };
    auto emit_at = [&](int t, int u) {
        return grid.at(t * (u_len + 1) + u, targets[static_cast<size_t>(u)]);
    };
    RnntLattice lat;
    lat.alpha = Tensor({t_len, u_len + 1});
    lat.beta = Tensor({t_len, u_len + 1});
    lat.alpha.at(0, 0) = 0.0;
    for (int u = 1; u <= u_len; ++u)
        lat.alpha.at(0, u) = lat.alpha.at(0, u - 1) + emit_at(0, u - 1);
    for (int t = 1; t < t_len; ++t) {
        lat.alpha.at(t, 0) = lat.alpha.at(t - 1, 0) + blank_at(t - 1, 0);
        for (int u = 1; u <= u_len; ++u)
            lat.alpha.at(t, u) = logsumexp2(lat.alpha.at(t - 1, u) + blank_at(t - 1, u),
                                            lat.alpha.at(t, u - 1) + emit_at(t, u - 1));
    }
    lat.log_prob_alpha = lat.alpha.at(t_len - 1, u_len) + blank_at(t_len - 1, u_len);

    lat.beta.at(t_len - 1, u_len) = blank_at(t_len - 1, u_len);
    for (int u = u_len - 1; u >= 0; --u)
        lat.beta.at(t_len - 1, u) = lat.beta.at(t_len - 1, u + 1) + emit_at(t_len - 1, u);
    for (int t = t_len - 2; t >= 0; --t) {
        lat.beta.at(t, u_len) = lat.beta.at(t + 1, u_len) + blank_at(t, u_len);
        for (int u = u_len - 1; u >= 0; --u)
            lat.beta.at(t, u) = logsumexp2(lat.beta.at(t + 1, u) + blank_at(t, u),
                                           lat.beta.at(t, u + 1) + emit_at(t, u));
    }
    lat.log_prob_beta = lat.beta.at(0, 0);
    return lat;
}

std::vector<int> greedy_decode(const Tensor& enc, PredictionNetParams& pred, JointParams& joint,
                               int max_symbols_per_frame) {
    if (max_symbols_per_frame < 1)
        throw std::invalid_argument("greedy_decode: max_symbols_per_frame must be >= 1");
    Graph g(Graph::Mode::Inference);
    Var enc_v = g.constant(enc);
    PredictionState state = prediction_init(g, pred);
    std::vector<int> out;
    int t_len = enc.rows();
    for (int t = 0; t < t_len; ++t) {
        Var enc_row = g.slice(enc_v, 0, t, t + 1);
        for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
            Var logp = joint_logprobs(g, enc_row, state.output, joint);
            const Tensor& lp = g.val(logp);
            int best = 0;
            for (int v = 1; v < lp.cols(); ++v)
                if (lp.at(0, v) > lp.at(0, best)) best = v;  // ties keep the lowest id
            if (best == 0) break;                            // blank: advance to next frame
            out.push_back(best);
            state = prediction_step(g, state, best, pred);
        }
    }
    return out;
}

}  // namespace ctxasr
