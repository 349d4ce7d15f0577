#include "ctxasr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ctxasr {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(who) + ": expected rank-2 tensor, got shape " +
                                    shape_str(t.shape));
}

double sigmoid_d(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || v.id >= size()) throw std::invalid_argument("invalid Var");
    return nodes_[static_cast<size_t>(v.id)];
}

Graph::Node& Graph::node(Var v) {
    if (!v.valid() || v.id >= size()) throw std::invalid_argument("invalid Var");
    return nodes_[static_cast<size_t>(v.id)];
}

bool Graph::any_requires_grad(const std::vector<int>& in) const {
    for (int i : in)
        if (nodes_[static_cast<size_t>(i)].requires_grad) return true;
    return false;
}

const Tensor& Graph::val(Var v) const { return node(v).value; }

const std::vector<double>& Graph::grad_of(Var v) const {
    const Node& n = node(v);
    return n.grad.empty() ? empty_grad_ : n.grad;
}

std::vector<double>& Graph::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() != n.value.data.size()) n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    n.requires_grad = false;
    return push(std::move(n));
}

Var Graph::param(Tensor& t) {
    Node n;
    n.op = Op::Param;
    n.value = t;  // value copy; graph owns its snapshot
    n.value.grad.clear();
    n.requires_grad = t.requires_grad && mode_ == Mode::Train;
    n.bound = &t;
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check_rank2(A, "matmul");
    check_rank2(B, "matmul");
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(A.shape) +
                                    " x " + shape_str(B.shape));
    int m = A.rows(), k = A.cols(), nn = B.cols();
    Node n;
    n.op = Op::Matmul;
    n.in = {a.id, b.id};
    n.value = Tensor({m, nn});
    for (int i = 0; i < m; ++i) {
        const double* arow = A.data.data() + static_cast<size_t>(i) * k;
        double* crow = n.value.data.data() + static_cast<size_t>(i) * nn;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = B.data.data() + static_cast<size_t>(p) * nn;
            for (int j = 0; j < nn; ++j) crow[j] += av * brow[j];
        }
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("add: shape mismatch " + shape_str(A.shape) + " vs " +
                                    shape_str(B.shape));
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id};
    n.value = A;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += B.data[i];
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::add_rows(Var x, Var bias) {
    const Tensor& X = val(x);
    const Tensor& B = val(bias);
    check_rank2(X, "add_rows");
    if (B.rank() != 1 || B.shape[0] != X.cols())
        throw std::invalid_argument("add_rows: bias shape " + shape_str(B.shape) +
                                    " does not match columns of " + shape_str(X.shape));
    Node n;
    n.op = Op::AddRows;
    n.in = {x.id, bias.id};
    n.value = X;
    int r = X.rows(), c = X.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) n.value.data[static_cast<size_t>(i) * c + j] += B.data[j];
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("mul: shape mismatch " + shape_str(A.shape) + " vs " +
                                    shape_str(B.shape));
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id};
    n.value = A;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= B.data[i];
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {a.id};
    n.value = val(a);
    n.dargs = {s};
    for (double& v : n.value.data) v *= s;
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::tanh(Var a) {
    Node n;
    n.op = Op::Tanh;
    n.in = {a.id};
    n.value = val(a);
    for (double& v : n.value.data) v = std::tanh(v);
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a.id};
    n.value = val(a);
    for (double& v : n.value.data) v = sigmoid_d(v);
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::swish(Var a) {
    Node n;
    n.op = Op::Swish;
    n.in = {a.id};
    n.value = val(a);
    n.dargs.resize(n.value.data.size());
    for (size_t i = 0; i < n.value.data.size(); ++i) {
        double s = sigmoid_d(n.value.data[i]);
        n.dargs[i] = s;
        n.value.data[i] *= s;
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::gelu(Var a) {
    Node n;
    n.op = Op::Gelu;
    n.in = {a.id};
    n.value = val(a);
    for (double& v : n.value.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::softmax_masked(Var x, const std::vector<uint8_t>& mask) {
    const Tensor& X = val(x);
    check_rank2(X, "softmax_masked");
    if (mask.size() != X.data.size())
        throw std::invalid_argument("softmax_masked: mask has " + std::to_string(mask.size()) +
                                    " entries for shape " + shape_str(X.shape));
    int r = X.rows(), c = X.cols();
    for (int i = 0; i < r; ++i) {
        bool any = false;
        for (int j = 0; j < c; ++j) any = any || mask[static_cast<size_t>(i) * c + j];
        if (!any)
            throw std::invalid_argument("softmax_masked: row " + std::to_string(i) +
                                        " is fully masked");
    }
    Node n;
    n.op = Op::SoftmaxMasked;
    n.in = {x.id};
    n.mask = mask;
    n.value = Tensor({r, c});
    for (int i = 0; i < r; ++i) {
        const double* xr = X.data.data() + static_cast<size_t>(i) * c;
        const uint8_t* mr = mask.data() + static_cast<size_t>(i) * c;
        double* yr = n.value.data.data() + static_cast<size_t>(i) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j)
            if (mr[j] && xr[j] > mx) mx = xr[j];
        double z = 0.0;
        for (int j = 0; j < c; ++j)
            if (mr[j]) z += std::exp(xr[j] - mx);
        for (int j = 0; j < c; ++j) yr[j] = mr[j] ? std::exp(xr[j] - mx) / z : 0.0;
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::log_softmax(Var x) {
    const Tensor& X = val(x);
    check_rank2(X, "log_softmax");
    int r = X.rows(), c = X.cols();
    if (c == 0) throw std::invalid_argument("log_softmax: zero columns");
    Node n;
    n.op = Op::LogSoftmax;
    n.in = {x.id};
    n.value = Tensor({r, c});
    for (int i = 0; i < r; ++i) {
        const double* xr = X.data.data() + static_cast<size_t>(i) * c;
        double* yr = n.value.data.data() + static_cast<size_t>(i) * c;
        double mx = xr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(xr[j] - mx);
        double lz = mx + std::log(z);
        for (int j = 0; j < c; ++j) yr[j] = xr[j] - lz;
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& X = val(x);
    const Tensor& G = val(gamma);
    const Tensor& B = val(beta);
    check_rank2(X, "layer_norm");
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    int r = X.rows(), c = X.cols();
    if (G.rank() != 1 || G.shape[0] != c || B.rank() != 1 || B.shape[0] != c)
        throw std::invalid_argument("layer_norm: gamma/beta shapes " + shape_str(G.shape) + "/" +
                                    shape_str(B.shape) + " do not match " + shape_str(X.shape));
    Node n;
    n.op = Op::LayerNorm;
    n.in = {x.id, gamma.id, beta.id};
    n.value = Tensor({r, c});
    n.dargs.resize(static_cast<size_t>(r) * 2);  // per-row mean, rstd
    for (int i = 0; i < r; ++i) {
        const double* xr = X.data.data() + static_cast<size_t>(i) * c;
        double* yr = n.value.data.data() + static_cast<size_t>(i) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xr[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= c;
        double rstd = 1.0 / std::sqrt(var + eps);
        n.dargs[static_cast<size_t>(i) * 2] = mean;
        n.dargs[static_cast<size_t>(i) * 2 + 1] = rstd;
        for (int j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * rstd * G.data[j] + B.data[j];
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no parts");
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    // Rank-1 parts concatenate along their only axis.
    if (axis == 0 && val(parts[0]).rank() == 1) {
        Node n;
        n.op = Op::Concat;
        n.iargs = {0};
        int total = 0;
        for (Var p : parts) {
            if (val(p).rank() != 1)
                throw std::invalid_argument("concat: mixed ranks, " +
                                            shape_str(val(parts[0]).shape) + " vs " +
                                            shape_str(val(p).shape));
            n.in.push_back(p.id);
            total += val(p).shape[0];
        }
        n.value = Tensor({total});
        size_t off = 0;
        for (Var p : parts) {
            const Tensor& t = val(p);
            std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off);
            off += t.data.size();
        }
        n.requires_grad = any_requires_grad(n.in);
        return push(std::move(n));
    }
    int off_axis = 1 - axis;
    int off_extent = val(parts[0]).shape[static_cast<size_t>(off_axis)];
    int total = 0;
    for (Var p : parts) {
        const Tensor& t = val(p);
        check_rank2(t, "concat");
        if (t.shape[static_cast<size_t>(off_axis)] != off_extent)
            throw std::invalid_argument("concat: off-axis extents disagree, " +
                                        shape_str(val(parts[0]).shape) + " vs " +
                                        shape_str(t.shape));
        total += t.shape[static_cast<size_t>(axis)];
    }
    Node n;
    n.op = Op::Concat;
    n.iargs = {axis};
    for (Var p : parts) n.in.push_back(p.id);
    std::vector<int> shp(2);
    shp[static_cast<size_t>(axis)] = total;
    shp[static_cast<size_t>(off_axis)] = off_extent;
    n.value = Tensor(shp);
    if (axis == 0) {
        size_t off = 0;
        for (Var p : parts) {
            const Tensor& t = val(p);
            std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off);
            off += t.data.size();
        }
    } else {
        int rows = off_extent;
        int col_off = 0;
        for (Var p : parts) {
            const Tensor& t = val(p);
            int c = t.cols();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < c; ++j)
                    n.value.data[static_cast<size_t>(i) * total + col_off + j] =
                        t.data[static_cast<size_t>(i) * c + j];
            col_off += c;
        }
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::slice(Var x, int axis, int begin, int end) {
    const Tensor& X = val(x);
    check_rank2(X, "slice");
    if (axis != 0 && axis != 1) throw std::invalid_argument("slice: axis must be 0 or 1");
    int extent = X.shape[static_cast<size_t>(axis)];
    if (begin < 0 || end < begin || end > extent)
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") out of extent " +
                                    std::to_string(extent));
    Node n;
    n.op = Op::Slice;
    n.in = {x.id};
    n.iargs = {axis, begin, end};
    int r = X.rows(), c = X.cols();
    if (axis == 0) {
        n.value = Tensor({end - begin, c});
        std::copy(X.data.begin() + static_cast<size_t>(begin) * c,
                  X.data.begin() + static_cast<size_t>(end) * c, n.value.data.begin());
    } else {
        n.value = Tensor({r, end - begin});
        for (int i = 0; i < r; ++i)
            for (int j = begin; j < end; ++j)
                n.value.data[static_cast<size_t>(i) * (end - begin) + (j - begin)] =
                    X.data[static_cast<size_t>(i) * c + j];
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::transpose(Var x) {
    const Tensor& X = val(x);
    check_rank2(X, "transpose");
    int r = X.rows(), c = X.cols();
    Node n;
    n.op = Op::Transpose;
    n.in = {x.id};
    n.value = Tensor({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.value.data[static_cast<size_t>(j) * r + i] = X.data[static_cast<size_t>(i) * c + j];
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::reshape(Var x, std::vector<int> shape) {
    const Tensor& X = val(x);
    if (numel_of(shape) != X.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(X.shape) + " as " +
                                    shape_str(shape));
    Node n;
    n.op = Op::Reshape;
    n.in = {x.id};
    n.value = X;
    n.value.shape = std::move(shape);
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::gather_rows(Var x, std::vector<int> idx) {
    const Tensor& X = val(x);
    check_rank2(X, "gather_rows");
    int r = X.rows(), c = X.cols();
    for (int i : idx)
        if (i < 0 || i >= r)
            throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                        " out of range for " + shape_str(X.shape));
    Node n;
    n.op = Op::GatherRows;
    n.in = {x.id};
    n.value = Tensor({static_cast<int>(idx.size()), c});
    for (size_t k = 0; k < idx.size(); ++k)
        std::copy(X.data.begin() + static_cast<size_t>(idx[k]) * c,
                  X.data.begin() + static_cast<size_t>(idx[k] + 1) * c,
                  n.value.data.begin() + k * c);
    n.iargs = std::move(idx);
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::conv1d_depthwise_causal(Var x, Var kernel, Var bias) {
    const Tensor& X = val(x);
    const Tensor& W = val(kernel);
    const Tensor& B = val(bias);
    check_rank2(X, "conv1d_depthwise_causal");
    check_rank2(W, "conv1d_depthwise_causal");
    int t_len = X.rows(), c = X.cols(), k_len = W.rows();
    if (W.cols() != c || B.rank() != 1 || B.shape[0] != c)
        throw std::invalid_argument("conv1d_depthwise_causal: kernel " + shape_str(W.shape) +
                                    " / bias " + shape_str(B.shape) + " do not match input " +
                                    shape_str(X.shape));
    Node n;
    n.op = Op::ConvDwCausal;
    n.in = {x.id, kernel.id, bias.id};
    n.value = Tensor({t_len, c});
    // out[t,ch] = bias[ch] + sum_k W[k,ch] * x[t-(K-1)+k, ch], left-padded with zeros
    for (int t = 0; t < t_len; ++t)
        for (int ch = 0; ch < c; ++ch) {
            double acc = B.data[ch];
            for (int k = 0; k < k_len; ++k) {
                int src = t - (k_len - 1) + k;
                if (src >= 0)
                    acc += W.data[static_cast<size_t>(k) * c + ch] *
                           X.data[static_cast<size_t>(src) * c + ch];
            }
            n.value.data[static_cast<size_t>(t) * c + ch] = acc;
        }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::sum(Var x) {
    Node n;
    n.op = Op::Sum;
    n.in = {x.id};
    double acc = 0.0;
    for (double v : val(x).data) acc += v;
    n.value = Tensor::scalar(acc);
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::pick(Var x, int r, int c) {
    const Tensor& X = val(x);
    check_rank2(X, "pick");
    if (r < 0 || r >= X.rows() || c < 0 || c >= X.cols())
        throw std::invalid_argument("pick: (" + std::to_string(r) + "," + std::to_string(c) +
                                    ") out of range for " + shape_str(X.shape));
    Node n;
    n.op = Op::Pick;
    n.in = {x.id};
    n.iargs = {r, c};
    n.value = Tensor::scalar(X.at(r, c));
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

Var Graph::logaddexp(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("logaddexp: shape mismatch " + shape_str(A.shape) + " vs " +
                                    shape_str(B.shape));
    Node n;
    n.op = Op::LogAddExp;
    n.in = {a.id, b.id};
    n.value = A;
    for (size_t i = 0; i < n.value.data.size(); ++i) {
        double x = A.data[i], y = B.data[i];
        double m = std::max(x, y);
        n.value.data[i] = m + std::log(std::exp(x - m) + std::exp(y - m));
    }
    n.requires_grad = any_requires_grad(n.in);
    return push(std::move(n));
}

void Graph::backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(ln.value.shape));
    for (Node& n : nodes_) n.grad.clear();
    grad_buf(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad || n.grad.empty()) continue;
        backward_node(id);
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const std::vector<double>& gy = n.grad;
    auto in_val = [&](int slot) -> const Tensor& {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])].value;
    };
    auto wants = [&](int slot) {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])].requires_grad;
    };
    auto gin = [&](int slot) -> std::vector<double>& {
        return grad_buf(n.in[static_cast<size_t>(slot)]);
    };

    switch (n.op) {
        case Op::Constant:
            break;
        case Op::Param:
            n.bound->ensure_grad();
            for (size_t i = 0; i < gy.size(); ++i) n.bound->grad[i] += gy[i];
            break;
        case Op::Matmul: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            int m = A.rows(), k = A.cols(), nn = B.cols();
            if (wants(0)) {
                std::vector<double>& ga = gin(0);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* gyr = gy.data() + static_cast<size_t>(i) * nn;
                        const double* br = B.data.data() + static_cast<size_t>(p) * nn;
                        for (int j = 0; j < nn; ++j) acc += gyr[j] * br[j];
                        ga[static_cast<size_t>(i) * k + p] += acc;
                    }
            }
            if (wants(1)) {
                std::vector<double>& gb = gin(1);
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        double av = A.data[static_cast<size_t>(i) * k + p];
                        const double* gyr = gy.data() + static_cast<size_t>(i) * nn;
                        double* gbr = gb.data() + static_cast<size_t>(p) * nn;
                        for (int j = 0; j < nn; ++j) gbr[j] += av * gyr[j];
                    }
            }
            break;
        }
        case Op::Add:
            for (int s = 0; s < 2; ++s)
                if (wants(s)) {
                    std::vector<double>& g = gin(s);
                    for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                }
            break;
        case Op::AddRows: {
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            if (wants(1)) {
                std::vector<double>& g = gin(1);
                int r = n.value.rows(), c = n.value.cols();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) g[j] += gy[static_cast<size_t>(i) * c + j];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * B.data[i];
            }
            if (wants(1)) {
                std::vector<double>& g = gin(1);
                for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * A.data[i];
            }
            break;
        }
        case Op::Scale:
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * n.dargs[0];
            }
            break;
        case Op::Tanh:
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i)
                    g[i] += gy[i] * (1.0 - n.value.data[i] * n.value.data[i]);
            }
            break;
        case Op::Sigmoid:
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i)
                    g[i] += gy[i] * n.value.data[i] * (1.0 - n.value.data[i]);
            }
            break;
        case Op::Swish: {
            if (wants(0)) {
                const Tensor& X = in_val(0);
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) {
                    double s = n.dargs[i];
                    g[i] += gy[i] * (s + X.data[i] * s * (1.0 - s));
                }
            }
            break;
        }
        case Op::Gelu: {
            if (wants(0)) {
                const Tensor& X = in_val(0);
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) {
                    double x = X.data[i];
                    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    g[i] += gy[i] * (cdf + x * pdf);
                }
            }
            break;
        }
        case Op::SoftmaxMasked: {
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                int r = n.value.rows(), c = n.value.cols();
                for (int i = 0; i < r; ++i) {
                    const double* yr = n.value.data.data() + static_cast<size_t>(i) * c;
                    const double* gyr = gy.data() + static_cast<size_t>(i) * c;
                    const uint8_t* mr = n.mask.data() + static_cast<size_t>(i) * c;
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j)
                        if (mr[j]) dot += yr[j] * gyr[j];
                    for (int j = 0; j < c; ++j)
                        if (mr[j]) g[static_cast<size_t>(i) * c + j] += yr[j] * (gyr[j] - dot);
                }
            }
            break;
        }
        case Op::LogSoftmax: {
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                int r = n.value.rows(), c = n.value.cols();
                for (int i = 0; i < r; ++i) {
                    const double* yr = n.value.data.data() + static_cast<size_t>(i) * c;
                    const double* gyr = gy.data() + static_cast<size_t>(i) * c;
                    double tot = 0.0;
                    for (int j = 0; j < c; ++j) tot += gyr[j];
                    for (int j = 0; j < c; ++j)
                        g[static_cast<size_t>(i) * c + j] += gyr[j] - std::exp(yr[j]) * tot;
                }
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = in_val(0);
            const Tensor& G = in_val(1);
            int r = X.rows(), c = X.cols();
            for (int i = 0; i < r; ++i) {
                double mean = n.dargs[static_cast<size_t>(i) * 2];
                double rstd = n.dargs[static_cast<size_t>(i) * 2 + 1];
                const double* xr = X.data.data() + static_cast<size_t>(i) * c;
                const double* gyr = gy.data() + static_cast<size_t>(i) * c;
                if (wants(1)) {
                    std::vector<double>& gg = gin(1);
                    for (int j = 0; j < c; ++j) gg[j] += gyr[j] * (xr[j] - mean) * rstd;
                }
                if (wants(2)) {
                    std::vector<double>& gb = gin(2);
                    for (int j = 0; j < c; ++j) gb[j] += gyr[j];
                }
                if (wants(0)) {
                    std::vector<double>& gx = gin(0);
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < c; ++j) {
                        double h = gyr[j] * G.data[j];
                        double xh = (xr[j] - mean) * rstd;
                        m1 += h;
                        m2 += h * xh;
                    }
                    m1 /= c;
                    m2 /= c;
                    for (int j = 0; j < c; ++j) {
                        double h = gyr[j] * G.data[j];
                        double xh = (xr[j] - mean) * rstd;
                        gx[static_cast<size_t>(i) * c + j] += rstd * (h - m1 - xh * m2);
                    }
                }
            }
            break;
        }
        case Op::Concat: {
            int axis = n.iargs[0];
            if (axis == 0) {
                size_t off = 0;
                for (size_t s = 0; s < n.in.size(); ++s) {
                    const Tensor& t = in_val(static_cast<int>(s));
                    if (wants(static_cast<int>(s))) {
                        std::vector<double>& g = gin(static_cast<int>(s));
                        for (size_t i = 0; i < t.data.size(); ++i) g[i] += gy[off + i];
                    }
                    off += t.data.size();
                }
            } else {
                int rows = n.value.rows(), total = n.value.cols();
                int col_off = 0;
                for (size_t s = 0; s < n.in.size(); ++s) {
                    const Tensor& t = in_val(static_cast<int>(s));
                    int c = t.cols();
                    if (wants(static_cast<int>(s))) {
                        std::vector<double>& g = gin(static_cast<int>(s));
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < c; ++j)
                                g[static_cast<size_t>(i) * c + j] +=
                                    gy[static_cast<size_t>(i) * total + col_off + j];
                    }
                    col_off += c;
                }
            }
            break;
        }
        case Op::Slice: {
            if (wants(0)) {
                const Tensor& X = in_val(0);
                std::vector<double>& g = gin(0);
                int axis = n.iargs[0], begin = n.iargs[1], end = n.iargs[2];
                int c = X.cols();
                if (axis == 0) {
                    for (size_t i = 0; i < gy.size(); ++i)
                        g[static_cast<size_t>(begin) * c + i] += gy[i];
                } else {
                    int w = end - begin;
                    int r = X.rows();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < w; ++j)
                            g[static_cast<size_t>(i) * c + begin + j] +=
                                gy[static_cast<size_t>(i) * w + j];
                }
            }
            break;
        }
        case Op::Transpose: {
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                int r = n.value.rows(), c = n.value.cols();  // transposed dims
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        g[static_cast<size_t>(j) * r + i] += gy[static_cast<size_t>(i) * c + j];
            }
            break;
        }
        case Op::Reshape:
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            break;
        case Op::GatherRows: {
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                int c = n.value.cols();
                for (size_t k = 0; k < n.iargs.size(); ++k) {
                    size_t src = static_cast<size_t>(n.iargs[k]) * c;
                    for (int j = 0; j < c; ++j) g[src + j] += gy[k * c + j];
                }
            }
            break;
        }
        case Op::ConvDwCausal: {
            const Tensor& X = in_val(0);
            const Tensor& W = in_val(1);
            int t_len = X.rows(), c = X.cols(), k_len = W.rows();
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (int t = 0; t < t_len; ++t)
                    for (int ch = 0; ch < c; ++ch) {
                        double gyv = gy[static_cast<size_t>(t) * c + ch];
                        for (int k = 0; k < k_len; ++k) {
                            int src = t - (k_len - 1) + k;
                            if (src >= 0)
                                g[static_cast<size_t>(src) * c + ch] +=
                                    gyv * W.data[static_cast<size_t>(k) * c + ch];
                        }
                    }
            }
            if (wants(1)) {
                std::vector<double>& g = gin(1);
                for (int t = 0; t < t_len; ++t)
                    for (int ch = 0; ch < c; ++ch) {
                        double gyv = gy[static_cast<size_t>(t) * c + ch];
                        for (int k = 0; k < k_len; ++k) {
                            int src = t - (k_len - 1) + k;
                            if (src >= 0)
                                g[static_cast<size_t>(k) * c + ch] +=
                                    gyv * X.data[static_cast<size_t>(src) * c + ch];
                        }
                    }
            }
            if (wants(2)) {
                std::vector<double>& g = gin(2);
                for (int t = 0; t < t_len; ++t)
                    for (int ch = 0; ch < c; ++ch) g[ch] += gy[static_cast<size_t>(t) * c + ch];
            }
            break;
        }
        case Op::Sum:
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < g.size(); ++i) g[i] += gy[0];
            }
            break;
        case Op::Pick:
            if (wants(0)) {
                const Tensor& X = in_val(0);
                gin(0)[static_cast<size_t>(n.iargs[0]) * X.cols() + n.iargs[1]] += gy[0];
            }
            break;
        case Op::LogAddExp: {
            const Tensor& A = in_val(0);
            const Tensor& B = in_val(1);
            if (wants(0)) {
                std::vector<double>& g = gin(0);
                for (size_t i = 0; i < gy.size(); ++i)
                    g[i] += gy[i] * sigmoid_d(A.data[i] - B.data[i]);
            }
            if (wants(1)) {
                std::vector<double>& g = gin(1);
                for (size_t i = 0; i < gy.size(); ++i)
                    g[i] += gy[i] * sigmoid_d(B.data[i] - A.data[i]);
            }
            break;
        }
    }
}

}  // namespace ctxasr
