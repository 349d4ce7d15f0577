#include "ctxasr/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ctxasr {

int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shp, double fill)
    : shape(std::move(shp)), data(static_cast<size_t>(numel_of(shape)), fill) {}

Tensor Tensor::zeros(std::vector<int> shp) { return Tensor(std::move(shp), 0.0); }

Tensor Tensor::from(std::vector<int> shp, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(shp);
    if (numel_of(t.shape) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                    " does not fill shape " + shape_str(t.shape));
    t.data = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int Tensor::rows() const {
    if (rank() != 2) throw std::invalid_argument("rows() on tensor of shape " + shape_str(shape));
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw std::invalid_argument("cols() on tensor of shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

void Tensor::set_requires_grad(bool on) {
    requires_grad = on;
    if (on)
        ensure_grad();
    else
        grad.clear();
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace ctxasr
