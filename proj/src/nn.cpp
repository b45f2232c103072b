#include "wm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace wm::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (params.count(name)) throw std::invalid_argument("param already registered: " + name);
    auto v = ag::param(std::move(init));
    params.emplace(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("unknown param: " + name);
    return it->second;
}

int64_t ParamStore::count() const {
    int64_t n = 0;
    for (const auto& [k, p] : params) n += p->val.numel();
    return n;
}

int64_t ParamStore::count_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [k, p] : params)
        if (k.rfind(prefix, 0) == 0) n += p->val.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [k, p] : params) p->grad = Tensor();
}

std::map<std::string, Tensor> ParamStore::dump() const {
    std::map<std::string, Tensor> out;
    for (const auto& [k, p] : params) out.emplace(k, p->val);
    return out;
}

void ParamStore::load(const std::map<std::string, Tensor>& src, bool allow_partial) {
    for (auto& [k, p] : params) {
        auto it = src.find(k);
        if (it == src.end()) {
            if (allow_partial) continue;
            throw std::runtime_error("checkpoint missing tensor: " + k);
        }
        if (it->second.shape != p->val.shape)
            throw std::runtime_error("checkpoint shape mismatch for " + k + ": " + it->second.shape_str() +
                                     " vs " + p->val.shape_str());
        p->val = it->second;
    }
}

void AdamW::step(ParamStore& ps) {
    ++t;
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (auto& [name, p] : ps.params) {
        if (p->grad.data.empty()) continue;
        Tensor& mm = m[name];
        Tensor& vv = v[name];
        if (mm.data.empty()) mm = Tensor::zeros(p->val.shape);
        if (vv.data.empty()) vv = Tensor::zeros(p->val.shape);
        float* pd = p->val.data.data();
        const float* gd = p->grad.data.data();
        float* md = mm.data.data();
        float* vd = vv.data.data();
        const int64_t n = p->val.numel();
        for (int64_t i = 0; i < n; ++i) {
            md[i] = beta1 * md[i] + (1.0f - beta1) * gd[i];
            vd[i] = beta2 * vd[i] + (1.0f - beta2) * gd[i] * gd[i];
            const float mhat = md[i] / bc1;
            const float vhat = vd[i] / bc2;
            pd[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * pd[i]);
        }
    }
}

std::map<std::string, Tensor> AdamW::dump_state() const {
    std::map<std::string, Tensor> out;
    for (const auto& [k, tm] : m) out.emplace("adam.m." + k, tm);
    for (const auto& [k, tv] : v) out.emplace("adam.v." + k, tv);
    return out;
}

void AdamW::load_state(const std::map<std::string, Tensor>& src) {
    m.clear();
    v.clear();
    for (const auto& [k, tv] : src) {
        if (k.rfind("adam.m.", 0) == 0) m[k.substr(7)] = tv;
        else if (k.rfind("adam.v.", 0) == 0) v[k.substr(7)] = tv;
    }
}

Tensor init_normal(std::vector<int> shape, Rng& rng, float stddev) {
    return Tensor::randn(std::move(shape), rng, stddev);
}

Linear::Linear(ParamStore& ps, const std::string& name, int din, int dout, Rng& rng, float init_std,
               bool bias) {
    const float sd = init_std < 0.0f ? 0.02f : init_std;
    w = ps.add(name + ".w", sd == 0.0f ? Tensor::zeros({din, dout}) : init_normal({din, dout}, rng, sd));
    if (bias) b = ps.add(name + ".b", Tensor::zeros({dout}));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int d) {
    g = ps.add(name + ".g", Tensor::full({d}, 1.0f));
    b = ps.add(name + ".b", Tensor::zeros({d}));
}

Mlp::Mlp(ParamStore& ps, const std::string& name, int d, int hidden, Rng& rng)
    : fc1(ps, name + ".fc1", d, hidden, rng), fc2(ps, name + ".fc2", hidden, d, rng) {}

Mha::Mha(ParamStore& ps, const std::string& name, int d, int nheads, Rng& rng)
    : wq(ps, name + ".wq", d, d, rng),
      wk(ps, name + ".wk", d, d, rng),
      wv(ps, name + ".wv", d, d, rng),
      wo(ps, name + ".wo", d, d, rng),
      heads(nheads) {}

Var Mha::fwd(const Var& x, ag::AttnMask mask, int split) const {
    Var q = wq.fwd(x);
    Var k = wk.fwd(x);
    Var v = wv.fwd(x);
    return wo.fwd(ag::attention(q, k, v, heads, mask, split));
}

}  // namespace wm::nn
