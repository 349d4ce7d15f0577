#pragma once
#include <functional>
#include <string>

#include "ctxasr/tensor.hpp"

namespace ctxasr {

// Walks named trainable tensors of a parameter struct. Prefixes compose with
// '.' so checkpoints, freeze masks and optimizers all see one flat namespace.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace ctxasr
