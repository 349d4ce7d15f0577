#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "ctxasr/gradcheck.hpp"
#include "ctxasr/graph.hpp"
#include "ctxasr/rng.hpp"
#include "ctxasr/tensor.hpp"

using namespace ctxasr;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

std::vector<uint8_t> full_mask(int r, int c) {
    return std::vector<uint8_t>(static_cast<size_t>(r) * c, 1);
}

// Independent O(mkn) reference product.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor out({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul basics") {
    Graph g;
    Var id2 = g.constant(Tensor::identity(2));
    Var m = g.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Var prod = g.matmul(id2, m);
    CHECK(g.val(prod).data == std::vector<double>{1, 2, 3, 4});

    Var a = g.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Var b = g.constant(Tensor::from({2, 1}, {5, 6}));
    Var c = g.matmul(a, b);
    CHECK(g.val(c).data == std::vector<double>{17, 39});

    Rng rng(7);
    Tensor rb = random_tensor({4, 2}, rng);
    Var z = g.matmul(g.constant(Tensor::zeros({3, 4})), g.constant(rb));
    CHECK(g.shape(z) == std::vector<int>{3, 2});
    for (double v : g.val(z).data) CHECK(v == 0.0);
}

TEST_CASE("matmul matches naive oracle on random inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_tensor({3, 5}, rng);
        Tensor b = random_tensor({5, 4}, rng);
        Graph g;
        Var c = g.matmul(g.constant(a), g.constant(b));
        Tensor ref = naive_matmul(a, b);
        for (size_t i = 0; i < ref.data.size(); ++i)
            CHECK(g.val(c).data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Graph g;
    Var a = g.constant(Tensor::zeros({2, 3}));
    Var b = g.constant(Tensor::zeros({4, 5}));
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("softmax_masked examples") {
    Graph g;
    Var u = g.softmax_masked(g.constant(Tensor::from({1, 3}, {0, 0, 0})), full_mask(1, 3));
    for (int j = 0; j < 3; ++j) CHECK(g.val(u).data[j] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Var s = g.softmax_masked(g.constant(Tensor::from({1, 3}, {5, 9, -2})),
                             std::vector<uint8_t>{1, 0, 0});
    CHECK(g.val(s).data == std::vector<double>{1, 0, 0});

    // Direct exp/sum oracle.
    double e1 = std::exp(1.0), e2 = std::exp(2.0);
    Var p = g.softmax_masked(g.constant(Tensor::from({1, 2}, {1, 2})), full_mask(1, 2));
    CHECK(g.val(p).data[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-5));
    CHECK(g.val(p).data[1] == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-5));
    CHECK(g.val(p).data[0] == doctest::Approx(0.26894).epsilon(1e-4));
}

TEST_CASE("softmax_masked rows sum to one, masked entries exactly zero") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        int r = rng.randint(1, 5), c = rng.randint(1, 7);
        Tensor x = random_tensor({r, c}, rng, 3.0);
        std::vector<uint8_t> mask(static_cast<size_t>(r) * c);
        for (int i = 0; i < r; ++i) {
            bool any = false;
            for (int j = 0; j < c; ++j) {
                mask[static_cast<size_t>(i) * c + j] = rng.bernoulli(0.6);
                any = any || mask[static_cast<size_t>(i) * c + j];
            }
            if (!any) mask[static_cast<size_t>(i) * c + rng.randint(0, c - 1)] = 1;
        }
        Graph g;
        Var y = g.softmax_masked(g.constant(x), mask);
        for (int i = 0; i < r; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < c; ++j) {
                double v = g.val(y).data[static_cast<size_t>(i) * c + j];
                if (!mask[static_cast<size_t>(i) * c + j])
                    CHECK(v == 0.0);
                else
                    CHECK(v > 0.0);
                row_sum += v;
            }
            CHECK(std::abs(row_sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax_masked rejects fully masked rows") {
    Graph g;
    Var x = g.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(g.softmax_masked(x, std::vector<uint8_t>{1, 1, 0, 0}), std::invalid_argument);
}

TEST_CASE("layer_norm examples") {
    Graph g;
    Var ones = g.constant(Tensor::from({2}, {1, 1}));
    Var zeros = g.constant(Tensor::from({2}, {0, 0}));

    // Constant row normalizes to zero via eps.
    Var flat = g.layer_norm(g.constant(Tensor::from({1, 2}, {3, 3})), ones, zeros, 1e-5);
    CHECK(g.val(flat).data[0] == doctest::Approx(0.0).epsilon(1e-12));

    Var sym = g.layer_norm(g.constant(Tensor::from({1, 2}, {1, 3})), ones, zeros, 1e-12);
    CHECK(g.val(sym).data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(g.val(sym).data[1] == doctest::Approx(1.0).epsilon(1e-4));

    // Mean/variance hand oracle: mean 2, population var 2/3.
    Var g2 = g.constant(Tensor::from({3}, {2, 2, 2}));
    Var b1 = g.constant(Tensor::from({3}, {1, 1, 1}));
    Var y = g.layer_norm(g.constant(Tensor::from({1, 3}, {1, 2, 3})), g2, b1, 1e-5);
    double xhat = 1.0 / std::sqrt(2.0 / 3.0);
    CHECK(g.val(y).data[0] == doctest::Approx(1 - 2 * xhat).epsilon(1e-4));
    CHECK(g.val(y).data[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(g.val(y).data[2] == doctest::Approx(1 + 2 * xhat).epsilon(1e-4));
}

TEST_CASE("layer_norm pre-affine rows have mean 0 and unit variance") {
    Rng rng(5);
    Tensor x = random_tensor({4, 8}, rng, 2.5);
    Graph g;
    Var ones = g.constant(Tensor({8}, 1.0));
    Var zeros = g.constant(Tensor::zeros({8}));
    Var y = g.layer_norm(g.constant(x), ones, zeros, 1e-12);
    for (int i = 0; i < 4; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 8; ++j) mean += g.val(y).at(i, j);
        mean /= 8;
        for (int j = 0; j < 8; ++j) {
            double d = g.val(y).at(i, j) - mean;
            var += d * d;
        }
        var /= 8;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }
}

TEST_CASE("concat examples and slice round-trip") {
    Graph g;
    Var v = g.concat({g.constant(Tensor::from({2}, {1, 2})), g.constant(Tensor::from({1}, {3}))},
                     0);
    CHECK(g.val(v).data == std::vector<double>{1, 2, 3});
    CHECK(g.shape(v) == std::vector<int>{3});

    Rng rng(3);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    Var cat = g.concat({g.constant(a), g.constant(b)}, 0);
    CHECK(g.shape(cat) == std::vector<int>{7, 3});

    Var back = g.slice(cat, 0, 0, 2);
    CHECK(g.val(back).data == a.data);  // bit-exact
    Var back_b = g.slice(cat, 0, 2, 7);
    CHECK(g.val(back_b).data == b.data);

    CHECK_THROWS_AS(g.concat({g.constant(a), g.constant(Tensor::zeros({5, 4}))}, 0),
                    std::invalid_argument);
}

TEST_CASE("concat/slice round-trip on axis 1 is bit-exact") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_tensor({3, rng.randint(1, 4)}, rng);
        Tensor b = random_tensor({3, rng.randint(1, 4)}, rng);
        Graph g;
        Var cat = g.concat({g.constant(a), g.constant(b)}, 1);
        CHECK(g.val(g.slice(cat, 1, 0, a.cols())).data == a.data);
        CHECK(g.val(g.slice(cat, 1, a.cols(), a.cols() + b.cols())).data == b.data);
    }
}

TEST_CASE("concat with zero-row part is an exact copy") {
    Rng rng(9);
    Tensor a = random_tensor({4, 3}, rng);
    Graph g;
    Var cat = g.concat({g.constant(Tensor::zeros({0, 3})), g.constant(a)}, 0);
    CHECK(g.val(cat).shape == a.shape);
    CHECK(g.val(cat).data == a.data);
}

TEST_CASE("backward on sum gives ones; sum of squares gives 2x") {
    Rng rng(29);
    Tensor x = random_tensor({3, 4}, rng);
    x.set_requires_grad(true);
    {
        Graph g;
        Var leaf = g.param(x);
        g.backward(g.sum(leaf));
        for (double v : x.grad) CHECK(v == 1.0);
    }
    x.zero_grad();
    {
        Graph g;
        Var leaf = g.param(x);
        g.backward(g.sum(g.mul(leaf, leaf)));
        for (size_t i = 0; i < x.data.size(); ++i)
            CHECK(x.grad[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::from({2}, {1, 2});
    x.set_requires_grad(true);
    Graph g;
    Var leaf = g.param(x);
    CHECK_THROWS_AS(g.backward(leaf), std::invalid_argument);
}

TEST_CASE("gradients accumulate across uses and across backward calls") {
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Graph g;
    Var leaf = g.param(x);
    Var twice = g.add(leaf, leaf);
    g.backward(g.sum(twice));
    CHECK(x.grad == std::vector<double>{2.0, 2.0});

    // Second backward accumulates on top (explicit zeroing is the caller's job).
    Graph g2;
    Var leaf2 = g2.param(x);
    g2.backward(g2.sum(leaf2));
    CHECK(x.grad == std::vector<double>{3.0, 3.0});
}

TEST_CASE("grad_check on sum is exact") {
    Rng rng(31);
    Tensor x = random_tensor({2, 3}, rng);
    double err = grad_check([](Graph& g, Var v) { return g.sum(v); }, x);
    CHECK(err < 1e-10);
}

TEST_CASE("grad_check flags non-deterministic builders") {
    Tensor x = Tensor::from({1}, {1.0});
    int calls = 0;
    auto flaky = [&calls](Graph& g, Var v) {
        ++calls;
        return g.scale(g.sum(v), 1.0 + 0.5 * calls);
    };
    CHECK_THROWS_AS(grad_check(flaky, x), std::invalid_argument);
}

TEST_CASE("grad_check battery over every differentiable op") {
    // 20 seeds per op, 1e-4 relative tolerance.
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        Tensor x = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({4, 2}, rng);
        Tensor mate = random_tensor({3, 4}, rng);
        Tensor bias = random_tensor({4}, rng);
        Tensor gamma = random_tensor({4}, rng, 0.5);
        Tensor beta = random_tensor({4}, rng, 0.5);
        for (double& v : gamma.data) v += 1.0;
        std::vector<uint8_t> mask = {1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 1, 0};
        Tensor kernel = random_tensor({3, 4}, rng);

        auto checks = std::vector<std::pair<const char*, GraphBuilder>>{
            {"matmul_lhs", [&](Graph& g, Var v) { return g.sum(g.matmul(v, g.constant(w))); }},
            {"matmul_rhs",
             [&](Graph& g, Var v) { return g.sum(g.matmul(g.constant(mate), g.transpose(v))); }},
            {"add", [&](Graph& g, Var v) { return g.sum(g.add(v, g.constant(mate))); }},
            {"add_rows",
             [&](Graph& g, Var v) { return g.sum(g.tanh(g.add_rows(v, g.constant(bias)))); }},
            {"mul", [&](Graph& g, Var v) { return g.sum(g.mul(v, g.constant(mate))); }},
            {"scale", [&](Graph& g, Var v) { return g.sum(g.scale(v, -1.7)); }},
            {"tanh", [&](Graph& g, Var v) { return g.sum(g.tanh(v)); }},
            {"sigmoid", [&](Graph& g, Var v) { return g.sum(g.sigmoid(v)); }},
            {"swish", [&](Graph& g, Var v) { return g.sum(g.swish(v)); }},
            {"gelu", [&](Graph& g, Var v) { return g.sum(g.gelu(v)); }},
            {"softmax_masked",
             [&](Graph& g, Var v) {
                 return g.sum(g.mul(g.softmax_masked(v, mask), g.constant(mate)));
             }},
            {"log_softmax",
             [&](Graph& g, Var v) { return g.sum(g.mul(g.log_softmax(v), g.constant(mate))); }},
            {"layer_norm_x",
             [&](Graph& g, Var v) {
                 return g.sum(g.mul(g.layer_norm(v, g.constant(gamma), g.constant(beta), 1e-5),
                                    g.constant(mate)));
             }},
            {"concat0", [&](Graph& g, Var v) { return g.sum(g.concat({v, g.constant(mate)}, 0)); }},
            {"concat1",
             [&](Graph& g, Var v) { return g.sum(g.tanh(g.concat({v, g.constant(mate)}, 1))); }},
            {"slice", [&](Graph& g, Var v) { return g.sum(g.tanh(g.slice(v, 1, 1, 3))); }},
            {"transpose", [&](Graph& g, Var v) { return g.sum(g.tanh(g.transpose(v))); }},
            {"reshape", [&](Graph& g, Var v) { return g.sum(g.tanh(g.reshape(v, {4, 3}))); }},
            {"gather_rows",
             [&](Graph& g, Var v) { return g.sum(g.tanh(g.gather_rows(v, {0, 2, 2, 1}))); }},
            {"conv_x",
             [&](Graph& g, Var v) {
                 return g.sum(
                     g.tanh(g.conv1d_depthwise_causal(v, g.constant(kernel), g.constant(bias))));
             }},
            {"conv_kernel",
             [&](Graph& g, Var v) {
                 return g.sum(
                     g.tanh(g.conv1d_depthwise_causal(g.constant(mate), v, g.constant(bias))));
             }},
            {"pick", [&](Graph& g, Var v) { return g.pick(g.tanh(v), 1, 2); }},
            {"logaddexp",
             [&](Graph& g, Var v) { return g.sum(g.logaddexp(v, g.constant(mate))); }},
        };
        for (auto& [name, builder] : checks) {
            double err = grad_check(builder, x);
            INFO("op ", name, " seed ", seed);
            CHECK(err < 1e-4);
        }

        // gamma/beta paths of layer_norm, bias path of the conv.
        double err_g = grad_check(
            [&](Graph& g, Var v) {
                return g.sum(g.mul(g.layer_norm(g.constant(x), v, g.constant(beta), 1e-5),
                                   g.constant(mate)));
            },
            gamma);
        CHECK(err_g < 1e-4);
        double err_b = grad_check(
            [&](Graph& g, Var v) {
                return g.sum(g.mul(g.layer_norm(g.constant(x), g.constant(gamma), v, 1e-5),
                                   g.constant(mate)));
            },
            beta);
        CHECK(err_b < 1e-4);
        double err_bias = grad_check(
            [&](Graph& g, Var v) {
                return g.sum(
                    g.tanh(g.conv1d_depthwise_causal(g.constant(x), g.constant(kernel), v)));
            },
            bias);
        CHECK(err_bias < 1e-4);
    }
}

TEST_CASE("composite graph matches finite differences") {
    Rng rng(41);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor w1 = random_tensor({3, 3}, rng);
    Tensor b1 = random_tensor({3}, rng);
    auto builder = [&](Graph& g, Var v) {
        Var h = g.tanh(g.add_rows(g.matmul(v, g.constant(w1)), g.constant(b1)));
        Var sm = g.softmax_masked(h, full_mask(2, 3));
        return g.sum(g.mul(sm, h));
    };
    CHECK(grad_check(builder, x) < 1e-4);
}

TEST_CASE("forward values identical with and without gradient recording") {
    Rng rng(53);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    x.set_requires_grad(true);
    w.set_requires_grad(true);

    auto run = [&](Graph::Mode mode) {
        Graph g(mode);
        Var h = g.matmul(g.param(x), g.param(w));
        Var y = g.layer_norm(g.swish(h), g.constant(Tensor({4}, 1.0)),
                             g.constant(Tensor::zeros({4})), 1e-5);
        return g.val(g.softmax_masked(y, full_mask(3, 4))).data;
    };
    CHECK(run(Graph::Mode::Train) == run(Graph::Mode::Inference));
}

TEST_CASE("forward ops keep finite values finite") {
    Rng rng(61);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({4, 6}, rng, 10.0);
        Graph g;
        Var v = g.constant(x);
        Var y = g.softmax_masked(g.scale(g.swish(v), 3.0), full_mask(4, 6));
        Var z = g.log_softmax(g.tanh(y));
        CHECK(all_finite(g.val(y)));
        CHECK(all_finite(g.val(z)));
    }
}
