#include "ctxasr/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxasr {

namespace {

double eval_loss(const GraphBuilder& builder, Tensor& x) {
    Graph g;
    Var leaf = g.param(x);
    Var loss = builder(g, leaf);
    if (g.val(loss).numel() != 1)
        throw std::invalid_argument("grad_check: builder must produce a scalar loss");
    return g.val(loss).data[0];
}

}  // namespace

double grad_check(const GraphBuilder& builder, const Tensor& x, double h) {
    if (h < 1e-7 || h > 1e-3)
        throw std::invalid_argument("grad_check: h=" + std::to_string(h) +
                                    " outside [1e-7, 1e-3]");
    Tensor probe = x;
    probe.set_requires_grad(true);
    double first = eval_loss(builder, probe);
    double second = eval_loss(builder, probe);
    if (first != second)
        throw std::invalid_argument("grad_check: builder is non-deterministic");

    // Analytic gradient.
    probe.zero_grad();
    {
        Graph g;
        Var leaf = g.param(probe);
        Var loss = builder(g, leaf);
        g.backward(loss);
    }
    std::vector<double> analytic = probe.grad;

    double worst = 0.0;
    for (size_t i = 0; i < probe.data.size(); ++i) {
        double keep = probe.data[i];
        probe.data[i] = keep + h;
        double up = eval_loss(builder, probe);
        probe.data[i] = keep - h;
        double down = eval_loss(builder, probe);
        probe.data[i] = keep;
        double numeric = (up - down) / (2.0 * h);
        double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace ctxasr
