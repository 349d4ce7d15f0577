#pragma once
#include <string>
#include <vector>

#include "ctxasr/model.hpp"
#include "ctxasr/tensor.hpp"

namespace ctxasr {

// Ordered name -> tensor snapshot of model parameters.
struct NamedTensors {
    std::vector<std::pair<std::string, Tensor>> items;

    const Tensor* find(const std::string& name) const;
};

NamedTensors snapshot(Model& model);

// Binary checkpoint: magic "CTXCKPT1", u32 version, u32 count, then per
// parameter u32 name length, UTF-8 name, u32 rank, u32 extents, and the
// payload as little-endian 64-bit floats.
void write_checkpoint(const std::string& path, const NamedTensors& params);
NamedTensors read_checkpoint(const std::string& path);

// Elementwise arithmetic mean over checkpoints with identical names/shapes;
// optimizer state never enters a checkpoint in the first place.
NamedTensors checkpoint_average(const std::vector<std::string>& paths);

// Copies parameters into a model. With `allow_fresh_context` (fine-tune from
// a context-free seed) parameters missing from the checkpoint stay at their
// fresh initialization when they belong to the context path; anything else
// missing or shape-mismatched is an error.
void load_into(Model& model, const NamedTensors& params, bool allow_fresh_context);

}  // namespace ctxasr
