#ifndef WM_RECTFLOW_HPP
#define WM_RECTFLOW_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include "wm/rng.hpp"
#include "wm/tensor.hpp"

namespace wm::flow {

// Straight-path flow machinery shared by both diffusion heads. Templated on
// the scalar type so gradient checks can run in 64-bit.

// x_t = (1 - t) * x0 + t * eps
template <typename S>
void add_noise(const S* x0, const S* eps, S t, S* out, size_t n) {
    if (!(t >= S(0) && t <= S(1))) throw std::invalid_argument("add_noise: t outside [0,1]");
    for (size_t i = 0; i < n; ++i) out[i] = (S(1) - t) * x0[i] + t * eps[i];
}

// v* = x0 - eps
template <typename S>
void velocity_target(const S* x0, const S* eps, S* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x0[i] - eps[i];
}

// mean squared error between v_pred and (x0 - eps)
template <typename S>
S rf_loss(const S* v_pred, const S* x0, const S* eps, size_t n) {
    S acc = S(0);
    for (size_t i = 0; i < n; ++i) {
        const S d = v_pred[i] - (x0[i] - eps[i]);
        acc += d * d;
    }
    return acc / static_cast<S>(n);
}

// d rf_loss / d v_pred
template <typename S>
void rf_loss_grad(const S* v_pred, const S* x0, const S* eps, S* grad, size_t n) {
    const S c = S(2) / static_cast<S>(n);
    for (size_t i = 0; i < n; ++i) grad[i] = c * (v_pred[i] - (x0[i] - eps[i]));
}

// x0_hat = x_t + t * v; the estimate is exact at t = 0, where x_t = x0.
template <typename S>
void one_step_estimate(const S* xt, S t, const S* v, S* out, size_t n) {
    if (!(t >= S(0) && t <= S(1))) throw std::invalid_argument("one_step_estimate: t outside [0,1]");
    if (t == S(0)) {
        for (size_t i = 0; i < n; ++i) out[i] = xt[i];
        return;
    }
    for (size_t i = 0; i < n; ++i) out[i] = xt[i] + t * v[i];
}

// ---- Tensor-level conveniences (float) ----

Tensor add_noise(const Tensor& x0, const Tensor& eps, float t);
Tensor velocity_target(const Tensor& x0, const Tensor& eps);
float rf_loss(const Tensor& v_pred, const Tensor& x0, const Tensor& eps);
Tensor one_step_estimate(const Tensor& xt, float t, const Tensor& v);
Tensor sample_noise(const std::vector<int>& shape, Rng& rng);

// Euler integration of dx = v dt from t=1 (pure noise) down to t=0 on a
// uniform grid: x <- x + (1/steps) * v(x, t_k). Exact for straight-path
// velocity fields regardless of step count.
using VelocityFn = std::function<Tensor(const Tensor& x, float t)>;
Tensor euler_sample(const VelocityFn& v_fn, const std::vector<int>& shape, int steps, Rng& rng);

}  // namespace wm::flow

#endif
