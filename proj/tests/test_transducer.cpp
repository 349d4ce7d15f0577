#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "ctxasr/gradcheck.hpp"
#include "ctxasr/rng.hpp"
#include "ctxasr/transducer.hpp"

using namespace ctxasr;

namespace {

constexpr int kVocab = 6;

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

struct Nets {
    PredictionNetParams pred;
    JointParams joint;
};

Nets make_nets(uint64_t seed, int d_model = 5, int d_pred = 4, int d_joint = 4) {
    Rng rng(seed);
    Nets n;
    n.pred = PredictionNetParams::init(kVocab, 3, 1, d_pred, rng);
    n.joint = JointParams::init(d_model, d_pred, d_joint, kVocab, rng);
    return n;
}

// Exhaustive oracle: log P(y|x) as a sum over every monotone alignment.
// Paths walk the (t,u) lattice from (0,0); a blank advances t, an emit
// advances u; every path ends with the final blank at (T-1, U).
double enumerate_alignments(const Tensor& grid, const std::vector<int>& targets, int t_len) {
    int u_len = static_cast<int>(targets.size());
    auto logp = [&](int t, int u, int label) { return grid.at(t * (u_len + 1) + u, label); };
    std::function<double(int, int)> walk = [&](int t, int u) -> double {
        if (t == t_len - 1 && u == u_len) return logp(t, u, 0);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        if (t < t_len - 1) terms.push_back(logp(t, u, 0) + walk(t + 1, u));
        if (u < u_len) terms.push_back(logp(t, u, targets[static_cast<size_t>(u)]) + walk(t, u + 1));
        for (double v : terms) best = std::max(best, v);
        double acc = 0.0;
        for (double v : terms) acc += std::exp(v - best);
        return best + std::log(acc);
    };
    return walk(0, 0);
}

}  // namespace

TEST_CASE("prediction_forward rows") {
    Nets n = make_nets(1);
    Graph g;
    Var empty = prediction_forward(g, {}, n.pred);
    CHECK(g.shape(empty) == std::vector<int>{1, 4});
    // Zero start state: row 0 is the initial state itself.
    for (double v : g.val(empty).data) CHECK(v == 0.0);

    Var a = prediction_forward(g, {2, 3, 4}, n.pred);
    Var b = prediction_forward(g, {2, 3, 4}, n.pred);
    CHECK(g.val(a).data == g.val(b).data);
    CHECK(g.shape(a) == std::vector<int>{4, 4});

    // Causality: row u depends only on history[0..u).
    Var c = prediction_forward(g, {2, 3, 5}, n.pred);
    for (int u = 0; u <= 2; ++u)
        for (int j = 0; j < 4; ++j) CHECK(g.val(a).at(u, j) == g.val(c).at(u, j));
    bool last_differs = false;
    for (int j = 0; j < 4; ++j) last_differs = last_differs || g.val(a).at(3, j) != g.val(c).at(3, j);
    CHECK(last_differs);

    CHECK_THROWS_AS(prediction_forward(g, {0}, n.pred), std::invalid_argument);   // blank
    CHECK_THROWS_AS(prediction_forward(g, {99}, n.pred), std::invalid_argument);  // out of vocab
}

TEST_CASE("joint log-probs normalize exactly and match a naive oracle") {
    Nets n = make_nets(2);
    Rng rng(3);
    Graph g;
    Tensor enc = random_tensor({3, 5}, rng);
    Tensor pred = random_tensor({3, 4}, rng);
    Var lp = joint_logprobs(g, g.constant(enc), g.constant(pred), n.joint);
    for (int i = 0; i < 3; ++i) {
        double total = 0.0;
        for (int v = 0; v < kVocab; ++v) total += std::exp(g.val(lp).at(i, v));
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    // Naive dense computation for row 0.
    std::vector<double> joined;
    for (int j = 0; j < 5; ++j) joined.push_back(enc.at(0, j));
    for (int j = 0; j < 4; ++j) joined.push_back(pred.at(0, j));
    std::vector<double> hidden(4, 0.0);
    for (int j = 0; j < 4; ++j) {
        for (size_t k = 0; k < joined.size(); ++k)
            hidden[static_cast<size_t>(j)] += joined[k] * n.joint.w1.at(static_cast<int>(k), j);
        hidden[static_cast<size_t>(j)] = std::tanh(hidden[static_cast<size_t>(j)] + n.joint.b1.data[static_cast<size_t>(j)]);
    }
    std::vector<double> logits(kVocab, 0.0);
    double mx = -1e300, z = 0.0;
    for (int v = 0; v < kVocab; ++v) {
        for (int j = 0; j < 4; ++j) logits[static_cast<size_t>(v)] += hidden[static_cast<size_t>(j)] * n.joint.w2.at(j, v);
        logits[static_cast<size_t>(v)] += n.joint.b2.data[static_cast<size_t>(v)];
        mx = std::max(mx, logits[static_cast<size_t>(v)]);
    }
    for (int v = 0; v < kVocab; ++v) z += std::exp(logits[static_cast<size_t>(v)] - mx);
    for (int v = 0; v < kVocab; ++v)
        CHECK(g.val(lp).at(0, v) ==
              doctest::Approx(logits[static_cast<size_t>(v)] - mx - std::log(z)).epsilon(1e-10));
}

TEST_CASE("joint with zero weights is uniform") {
    Nets n = make_nets(4);
    for (double& v : n.joint.w1.data) v = 0.0;
    for (double& v : n.joint.w2.data) v = 0.0;
    Graph g;
    Var lp = joint_logprobs(g, g.constant(Tensor::zeros({1, 5})),
                            g.constant(Tensor::zeros({1, 4})), n.joint);
    for (int v = 0; v < kVocab; ++v)
        CHECK(g.val(lp).at(0, v) == doctest::Approx(std::log(1.0 / kVocab)).epsilon(1e-12));
}

TEST_CASE("rnnt_loss single-alignment cases") {
    Nets n = make_nets(5);
    Rng rng(6);

    // U=0: the only alignment is blanks everywhere.
    Tensor enc = random_tensor({4, 5}, rng);
    Graph g;
    Var enc_v = g.constant(enc);
    Var grid = rnnt_log_prob_grid(g, enc_v, {}, n.pred, n.joint);
    Var loss = rnnt_loss_from_grid(g, grid, {}, 4);
    double expect = 0.0;
    for (int t = 0; t < 4; ++t) expect -= g.val(grid).at(t, 0);
    CHECK(g.val(loss).data[0] == doctest::Approx(expect).epsilon(1e-12));

    // T=1, U=1: emit then final blank.
    Tensor enc1 = random_tensor({1, 5}, rng);
    Graph g1;
    Var grid1 = rnnt_log_prob_grid(g1, g1.constant(enc1), {3}, n.pred, n.joint);
    Var loss1 = rnnt_loss_from_grid(g1, grid1, {3}, 1);
    double want = -(g1.val(grid1).at(0, 3) + g1.val(grid1).at(1, 0));
    CHECK(g1.val(loss1).data[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("rnnt_loss equals exhaustive alignment enumeration") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        Nets n = make_nets(seed * 31 + 7);
        int t_len = rng.randint(1, 4);
        int u_len = rng.randint(0, 3);
        std::vector<int> targets;
        for (int u = 0; u < u_len; ++u) targets.push_back(rng.randint(2, kVocab - 1));
        Tensor enc = random_tensor({t_len, 5}, rng);
        Graph g;
        Var grid = rnnt_log_prob_grid(g, g.constant(enc), targets, n.pred, n.joint);
        Var loss = rnnt_loss_from_grid(g, grid, targets, t_len);
        double oracle = enumerate_alignments(g.val(grid), targets, t_len);
        CHECK(g.val(loss).data[0] == doctest::Approx(-oracle).epsilon(1e-8));
    }
}

TEST_CASE("alpha and beta lattices agree on the total log-probability") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed + 100);
        Nets n = make_nets(seed);
        int t_len = rng.randint(1, 5);
        int u_len = rng.randint(0, 3);
        std::vector<int> targets;
        for (int u = 0; u < u_len; ++u) targets.push_back(rng.randint(2, kVocab - 1));
        Tensor enc = random_tensor({t_len, 5}, rng);
        Graph g;
        Var grid = rnnt_log_prob_grid(g, g.constant(enc), targets, n.pred, n.joint);
        RnntLattice lat = rnnt_lattice(g.val(grid), targets, t_len);
        CHECK(lat.log_prob_alpha == doctest::Approx(lat.log_prob_beta).epsilon(1e-8));

        Var loss = rnnt_loss_from_grid(g, grid, targets, t_len);
        CHECK(g.val(loss).data[0] == doctest::Approx(-lat.log_prob_alpha).epsilon(1e-10));
    }
}

TEST_CASE("rnnt_loss gradient matches finite differences") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed + 40);
        Nets n = make_nets(seed * 13 + 1);
        std::vector<int> targets = {2, 4};
        Tensor enc = random_tensor({3, 5}, rng);
        auto builder = [&](Graph& g, Var v) {
            return rnnt_loss(g, v, targets, n.pred, n.joint);
        };
        CHECK(grad_check(builder, enc) < 1e-4);
    }
}

TEST_CASE("greedy_decode rigging") {
    Nets n = make_nets(9);
    // Zero the output layer and steer via the bias: blank wins everywhere.
    for (double& v : n.joint.w2.data) v = 0.0;
    for (double& v : n.joint.b2.data) v = 0.0;
    n.joint.b2.data[0] = 5.0;
    Rng rng(10);
    Tensor enc = random_tensor({3, 5}, rng);
    CHECK(greedy_decode(enc, n.pred, n.joint).empty());

    // Token 3 wins once, then blank: exactly one emission on a single frame.
    // The prediction output is zero before any emission and nonzero after,
    // so route its strongest coordinate (sign-corrected) into the blank logit.
    Nets rigged = make_nets(11);
    int probe_coord = 0;
    double probe_sign = 1.0;
    {
        Graph g;
        PredictionState s = prediction_init(g, rigged.pred);
        s = prediction_step(g, s, 3, rigged.pred);
        const Tensor& h = g.val(s.output);
        for (int j = 1; j < h.cols(); ++j)
            if (std::abs(h.at(0, j)) > std::abs(h.at(0, probe_coord))) probe_coord = j;
        probe_sign = h.at(0, probe_coord) >= 0.0 ? 1.0 : -1.0;
    }
    for (double& v : rigged.joint.w1.data) v = 0.0;
    for (double& v : rigged.joint.w2.data) v = 0.0;
    for (double& v : rigged.joint.b2.data) v = 0.0;
    rigged.joint.b2.data[3] = 1.0;
    rigged.joint.w1.at(5 + probe_coord, 0) = 50.0 * probe_sign;  // pred coord -> hidden 0
    rigged.joint.w2.at(0, 0) = 100.0;                            // hidden 0 -> blank logit
    Tensor enc1 = random_tensor({1, 5}, rng);
    std::vector<int> out = greedy_decode(enc1, rigged.pred, rigged.joint);
    CHECK(out == std::vector<int>{3});

    // max_symbols_per_frame caps degenerate loops.
    Nets loopy = make_nets(12);
    for (double& v : loopy.joint.w1.data) v = 0.0;
    for (double& v : loopy.joint.w2.data) v = 0.0;
    for (double& v : loopy.joint.b2.data) v = 0.0;
    loopy.joint.b2.data[2] = 3.0;  // token 2 always wins
    std::vector<int> capped = greedy_decode(enc, loopy.pred, loopy.joint, 4);
    CHECK(capped.size() == 3 * 4);
    for (int tok : capped) CHECK(tok == 2);
}

TEST_CASE("greedy_decode finds the dominant alignment on frozen seeds") {
    // Seeds where one alignment carries nearly all probability mass; greedy
    // then matches the exhaustive best path's labels. Greedy is not globally
    // optimal for flat models, so the cases are pinned.
    for (uint64_t seed : {26ull, 31ull, 37ull, 55ull}) {
        Rng rng(seed);
        Nets n = make_nets(seed * 17 + 3);
        for (double& v : n.joint.w2.data) v *= 12.0;  // peaked per-cell distributions
        Tensor enc = random_tensor({3, 5}, rng, 2.0);
        std::vector<int> greedy = greedy_decode(enc, n.pred, n.joint, 2);

        // Exhaustive search over label sequences of length <= 2 paired with
        // the joint's actual probabilities via the lattice total.
        double best = -std::numeric_limits<double>::infinity();
        std::vector<int> best_labels;
        std::vector<std::vector<int>> cands = {{}};
        for (int a = 1; a < kVocab; ++a) {
            cands.push_back({a});
            for (int b = 1; b < kVocab; ++b) cands.push_back({a, b});
        }
        for (const auto& cand : cands) {
            bool has_blank_or_unk = false;
            for (int t : cand) has_blank_or_unk = has_blank_or_unk || t == 0;
            if (has_blank_or_unk) continue;
            Graph g;
            Var grid = rnnt_log_prob_grid(g, g.constant(enc), cand, n.pred, n.joint);
            // Viterbi: best single alignment for this label sequence.
            int u_len = static_cast<int>(cand.size());
            Tensor gv = g.val(grid);
            std::vector<std::vector<double>> dp(3, std::vector<double>(static_cast<size_t>(u_len) + 1,
                                                                       -1e300));
            dp[0][0] = 0.0;
            for (int t = 0; t < 3; ++t)
                for (int u = 0; u <= u_len; ++u) {
                    if (dp[static_cast<size_t>(t)][static_cast<size_t>(u)] <= -1e299) continue;
                    double here = dp[static_cast<size_t>(t)][static_cast<size_t>(u)];
                    if (t + 1 < 3)
                        dp[static_cast<size_t>(t) + 1][static_cast<size_t>(u)] =
                            std::max(dp[static_cast<size_t>(t) + 1][static_cast<size_t>(u)],
                                     here + gv.at(t * (u_len + 1) + u, 0));
                    if (u < u_len)
                        dp[static_cast<size_t>(t)][static_cast<size_t>(u) + 1] =
                            std::max(dp[static_cast<size_t>(t)][static_cast<size_t>(u) + 1],
                                     here + gv.at(t * (u_len + 1) + u,
                                                  cand[static_cast<size_t>(u)]));
                }
            double score = dp[2][static_cast<size_t>(u_len)] + gv.at(2 * (u_len + 1) + u_len, 0);
            if (score > best) {
                best = score;
                best_labels = cand;
            }
        }
        INFO("seed ", seed);
        CHECK(greedy == best_labels);
    }
}
