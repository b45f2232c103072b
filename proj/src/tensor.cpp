#include "wm/tensor.hpp"

#include <cmath>
#include <sstream>

#include "wm/rng.hpp"

namespace wm {

Tensor Tensor::randn(std::vector<int> s, Rng& rng, float stddev) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = static_cast<float>(rng.normal()) * stddev;
    return t;
}

bool Tensor::all_finite() const {
    for (float x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        float* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0f;
        const float* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float aip = ai[p];
            const float* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nn_acc(const float* a, const float* b, float* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        float* ci = c + static_cast<size_t>(i) * n;
        const float* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float aip = ai[p];
            const float* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void transpose2d(const float* src, float* dst, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

}  // namespace wm
