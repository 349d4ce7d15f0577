#pragma once
#include <functional>

#include "ctxasr/graph.hpp"

namespace ctxasr {

// Builds a scalar loss from the leaf for x; called once per evaluation with a
// fresh graph, so it must be deterministic.
using GraphBuilder = std::function<Var(Graph&, Var x)>;

// Compares the analytic gradient of builder(x) against central finite
// differences with step h. Returns max over coordinates of
// |analytic - numeric| / max(1, |numeric|).
//
// Throws if the builder is non-deterministic (detected by evaluating twice)
// or if h is outside [1e-7, 1e-3].
double grad_check(const GraphBuilder& builder, const Tensor& x, double h = 1e-5);

}  // namespace ctxasr
