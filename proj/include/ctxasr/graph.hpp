#pragma once
#include <cstdint>
#include <deque>
#include <vector>

#include "ctxasr/tensor.hpp"

namespace ctxasr {

// Handle to a node in a Graph. Only meaningful with the graph that issued it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in creation order (which is the
// topological order); backward() walks them once in reverse. Values are
// computed eagerly on op creation, so the forward numeric path is identical
// whether gradients are recorded or not.
//
// A Graph and its Vars belong to one thread; independent graphs may run
// concurrently.
class Graph {
public:
    enum class Mode { Train, Inference };

    explicit Graph(Mode mode = Mode::Train) : mode_(mode) {}

    Mode mode() const { return mode_; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Leaves.
    Var constant(Tensor value);
    Var param(Tensor& t);  // bound leaf: backward() adds into t.grad

    // Ops. All validate shapes and throw std::invalid_argument on mismatch.
    Var matmul(Var a, Var b);                      // [m,k]x[k,n] -> [m,n]
    Var add(Var a, Var b);                         // same shape
    Var add_rows(Var x, Var bias);                 // [r,c] + [c], row broadcast
    Var mul(Var a, Var b);                         // elementwise
    Var scale(Var a, double s);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var swish(Var a);
    Var gelu(Var a);
    Var softmax_masked(Var x, const std::vector<uint8_t>& mask);  // rows of rank-2 x
    Var log_softmax(Var x);                        // rows of rank-2 x
    Var layer_norm(Var x, Var gamma, Var beta, double eps);
    Var concat(const std::vector<Var>& parts, int axis);          // rank-2, axis 0/1
    Var slice(Var x, int axis, int begin, int end);               // rank-2
    Var transpose(Var x);                          // rank-2
    Var reshape(Var x, std::vector<int> shape);
    Var gather_rows(Var x, std::vector<int> idx);  // rank-2; repeats allowed
    Var conv1d_depthwise_causal(Var x, Var kernel, Var bias);     // [T,C],[K,C],[C]
    Var sum(Var x);                                // -> [1]
    Var pick(Var x, int r, int c);                 // rank-2 element -> [1]
    Var logaddexp(Var a, Var b);                   // elementwise log(e^a+e^b)

    // Seeds d(loss) = 1 and accumulates d(loss)/d(leaf) into every bound
    // parameter tensor reachable from `loss`. Loss must be a scalar.
    void backward(Var loss);

    const Tensor& val(Var v) const;
    const std::vector<int>& shape(Var v) const { return val(v).shape; }

    // Gradient held at a node after backward(); empty if none flowed there.
    const std::vector<double>& grad_of(Var v) const;

private:
    enum class Op : uint8_t {
        Constant, Param, Matmul, Add, AddRows, Mul, Scale, Tanh, Sigmoid,
        Swish, Gelu, SoftmaxMasked, LogSoftmax, LayerNorm, Concat, Slice,
        Transpose, Reshape, GatherRows, ConvDwCausal, Sum, Pick, LogAddExp,
    };

    struct Node {
        Op op;
        std::vector<int> in;
        Tensor value;
        std::vector<double> grad;   // lazily allocated during backward
        bool requires_grad = false;
        std::vector<int> iargs;     // op-specific ints (axis, ranges, indices)
        std::vector<double> dargs;  // op-specific doubles (scale, eps, saved stats)
        std::vector<uint8_t> mask;  // softmax mask bytes
        Tensor* bound = nullptr;    // Param target
    };

    Var push(Node n);
    const Node& node(Var v) const;
    Node& node(Var v);
    bool any_requires_grad(const std::vector<int>& in) const;
    std::vector<double>& grad_buf(int id);
    void backward_node(int id);

    std::deque<Node> nodes_;  // deque: node references stay valid as ops append
    Mode mode_;
    std::vector<double> empty_grad_;
};

}  // namespace ctxasr
