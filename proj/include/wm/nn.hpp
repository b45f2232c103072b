#ifndef WM_NN_HPP
#define WM_NN_HPP

#include <map>
#include <string>

#include "wm/autograd.hpp"
#include "wm/rng.hpp"

namespace wm::nn {

using ag::Var;

// Named parameter registry. std::map keeps iteration order stable, which
// makes optimizer updates and checkpoints deterministic.
struct ParamStore {
    std::map<std::string, Var> params;

    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    int64_t count() const;
    int64_t count_prefix(const std::string& prefix) const;
    void zero_grad();
    std::map<std::string, Tensor> dump() const;
    // Copies values for every matching name; throws on missing name or shape
    // mismatch. Names not present in `src` are left untouched when
    // `allow_partial`.
    void load(const std::map<std::string, Tensor>& src, bool allow_partial = false);
};

// Decoupled weight decay Adam. Parameters whose gradient was never touched in
// the current step are skipped entirely.
struct AdamW {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
    int64_t t = 0;
    std::map<std::string, Tensor> m, v;

    void step(ParamStore& ps);
    std::map<std::string, Tensor> dump_state() const;  // keys "adam.m.<p>", "adam.v.<p>"
    void load_state(const std::map<std::string, Tensor>& src);
};

struct Linear {
    Var w, b;
    Linear() = default;
    // init_std < 0 selects the default 0.02; init_std == 0 zero-initializes
    // the weight (adaLN-zero style heads).
    Linear(ParamStore& ps, const std::string& name, int din, int dout, Rng& rng, float init_std = -1.0f,
           bool bias = true);
    Var fwd(const Var& x) const { return ag::linear(x, w, b); }
};

struct LayerNorm {
    Var g, b;
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int d);
    Var fwd(const Var& x) const { return ag::layer_norm(x, g, b); }
};

struct Mlp {
    Linear fc1, fc2;
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, int d, int hidden, Rng& rng);
    Var fwd(const Var& x) const { return fc2.fwd(ag::gelu(fc1.fwd(x))); }
};

struct Mha {
    Linear wq, wk, wv, wo;
    int heads = 1;
    Mha() = default;
    Mha(ParamStore& ps, const std::string& name, int d, int heads, Rng& rng);
    // Self-attention over x: [B, S, D].
    Var fwd(const Var& x, ag::AttnMask mask, int split = 0) const;
};

Tensor init_normal(std::vector<int> shape, Rng& rng, float stddev);

}  // namespace wm::nn

#endif
