#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace ctxasr {

// Dense row-major tensor of 64-bit floats. Extents may be zero (an empty
// prompt is a legitimate [0 x d] value). `grad` is either empty or the same
// length as `data`; gradients accumulate until zero_grad().
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp, double fill = 0.0);

    static Tensor zeros(std::vector<int> shp);
    static Tensor from(std::vector<int> shp, std::vector<double> values);
    static Tensor scalar(double v);
    static Tensor identity(int n);

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    // Rank-2 accessors.
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    void set_requires_grad(bool on);
    void ensure_grad();   // allocate zeros if absent
    void zero_grad();

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// True when every element is finite.
bool all_finite(const Tensor& t);

}  // namespace ctxasr
