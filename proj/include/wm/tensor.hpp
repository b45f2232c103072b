#ifndef WM_TENSOR_HPP
#define WM_TENSOR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wm {

class Rng;

// Dense row-major float32 tensor. Shapes are small (rank <= 4), storage is a
// plain contiguous vector so tensors copy and compare by value.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel_of(shape), 0.0f); }
    Tensor(std::vector<int> s, float fill) : shape(std::move(s)) { data.assign(numel_of(shape), fill); }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v) { return Tensor(std::move(s), v); }
    static Tensor scalar(float v) { return Tensor({1}, v); }
    static Tensor randn(std::vector<int> s, Rng& rng, float stddev = 1.0f);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[i < 0 ? shape.size() + i : static_cast<size_t>(i)]; }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    float& at2(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    float at2(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    float& at3(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    float at3(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

// C = A * B for row-major [m,k] x [k,n]. Accumulation order over k is fixed,
// parallelism is across output rows only, so results are run-to-run bitwise
// reproducible.
void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n);
// C += A * B
void matmul_nn_acc(const float* a, const float* b, float* c, int m, int k, int n);
void transpose2d(const float* src, float* dst, int rows, int cols);

}  // namespace wm

#endif
