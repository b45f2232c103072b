#include "wm/rectflow.hpp"

namespace wm::flow {

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace

Tensor add_noise(const Tensor& x0, const Tensor& eps, float t) {
    check_same(x0, eps, "add_noise");
    Tensor out(x0.shape);
    add_noise(x0.data.data(), eps.data.data(), t, out.data.data(), out.data.size());
    return out;
}

Tensor velocity_target(const Tensor& x0, const Tensor& eps) {
    check_same(x0, eps, "velocity_target");
    Tensor out(x0.shape);
    velocity_target(x0.data.data(), eps.data.data(), out.data.data(), out.data.size());
    return out;
}

float rf_loss(const Tensor& v_pred, const Tensor& x0, const Tensor& eps) {
    check_same(v_pred, x0, "rf_loss");
    check_same(x0, eps, "rf_loss");
    return rf_loss(v_pred.data.data(), x0.data.data(), eps.data.data(), v_pred.data.size());
}

Tensor one_step_estimate(const Tensor& xt, float t, const Tensor& v) {
    check_same(xt, v, "one_step_estimate");
    Tensor out(xt.shape);
    one_step_estimate(xt.data.data(), t, v.data.data(), out.data.data(), out.data.size());
    return out;
}

Tensor sample_noise(const std::vector<int>& shape, Rng& rng) {
    Tensor out(shape);
    for (auto& x : out.data) x = static_cast<float>(rng.normal());
    return out;
}

Tensor euler_sample(const VelocityFn& v_fn, const std::vector<int>& shape, int steps, Rng& rng) {
    if (steps < 1) throw std::invalid_argument("euler_sample: steps must be >= 1");
    Tensor x = sample_noise(shape, rng);
    const float dt = 1.0f / static_cast<float>(steps);
    for (int k = 0; k < steps; ++k) {
        const float t = 1.0f - static_cast<float>(k) * dt;
        Tensor v = v_fn(x, t);
        if (!v.same_shape(x)) throw std::invalid_argument("euler_sample: velocity shape mismatch");
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += dt * v.data[i];
    }
    return x;
}

}  // namespace wm::flow
