#include "wm/dit.hpp"

#include <cmath>
#include <stdexcept>

namespace wm::dit {

namespace ag = wm::ag;

void DitConfig::validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0)
        throw std::invalid_argument("dit config: d must be positive and divisible by heads");
    if (dual_blocks < 0 || single_blocks < 0 || dual_blocks + single_blocks < 1)
        throw std::invalid_argument("dit config: need at least one block");
    if (n_tokens < 1 || token_dim < 1 || cond_tokens < 1 || d_cond < 1)
        throw std::invalid_argument("dit config: bad token dims");
    if (t_feat < 2 || t_feat % 2 != 0) throw std::invalid_argument("dit config: t_feat must be even");
}

namespace {

void add_stream_block(nn::ParamStore& ps, const std::string& p, int d, Rng& rng) {
    nn::Mha(ps, p + ".attn", d, 1, rng);  // heads applied at call time; weights are plain d x d
    nn::Mlp(ps, p + ".mlp", d, 4 * d, rng);
    // zero-init modulation: 6 * d = (shift, scale, gate) for attn and mlp
    ps.add(p + ".mod.w", Tensor::zeros({d, 6 * d}));
    ps.add(p + ".mod.b", Tensor::zeros({6 * d}));
}

}  // namespace

DitHead::DitHead(nn::ParamStore& store, const std::string& name, const DitConfig& config, Rng& rng)
    : cfg(config), ps(&store), prefix(name) {
    cfg.validate();
    const int d = cfg.d;
    ps->add(prefix + ".cond_proj.w", nn::init_normal({cfg.d_cond, d}, rng, 0.02f));
    ps->add(prefix + ".cond_proj.b", Tensor::zeros({d}));
    ps->add(prefix + ".tok_in.w", nn::init_normal({cfg.token_dim, d}, rng, 0.02f));
    ps->add(prefix + ".tok_in.b", Tensor::zeros({d}));
    ps->add(prefix + ".pos_cond", nn::init_normal({cfg.cond_tokens, d}, rng, 0.02f));
    ps->add(prefix + ".pos_noise", nn::init_normal({cfg.n_tokens, d}, rng, 0.02f));

    ps->add(prefix + ".t_embed.fc1.w", nn::init_normal({cfg.t_feat, d}, rng, 0.02f));
    ps->add(prefix + ".t_embed.fc1.b", Tensor::zeros({d}));
    ps->add(prefix + ".t_embed.fc2.w", nn::init_normal({d, d}, rng, 0.02f));
    ps->add(prefix + ".t_embed.fc2.b", Tensor::zeros({d}));
    if (cfg.action_modulated) {
        ps->add(prefix + ".a_embed.fc1.w", nn::init_normal({3, d}, rng, 0.02f));
        ps->add(prefix + ".a_embed.fc1.b", Tensor::zeros({d}));
        ps->add(prefix + ".a_embed.fc2.w", nn::init_normal({d, d}, rng, 0.02f));
        ps->add(prefix + ".a_embed.fc2.b", Tensor::zeros({d}));
    }

    for (int i = 0; i < cfg.dual_blocks; ++i) {
        add_stream_block(*ps, prefix + ".dual" + std::to_string(i) + ".c", d, rng);
        add_stream_block(*ps, prefix + ".dual" + std::to_string(i) + ".x", d, rng);
    }
    for (int i = 0; i < cfg.single_blocks; ++i)
        add_stream_block(*ps, prefix + ".single" + std::to_string(i), d, rng);

    ps->add(prefix + ".final_mod.w", Tensor::zeros({d, 2 * d}));
    ps->add(prefix + ".final_mod.b", Tensor::zeros({2 * d}));
    ps->add(prefix + ".out.w", Tensor::zeros({d, cfg.token_dim}));
    ps->add(prefix + ".out.b", Tensor::zeros({cfg.token_dim}));
}

Tensor DitHead::time_features(float t) const {
    const int half = cfg.t_feat / 2;
    Tensor out({1, cfg.t_feat});
    const float ts = t * 1000.0f;
    for (int i = 0; i < half; ++i) {
        const float freq = std::exp(-std::log(10000.0f) * static_cast<float>(i) / static_cast<float>(half));
        out.data[i] = std::cos(ts * freq);
        out.data[half + i] = std::sin(ts * freq);
    }
    return out;
}

Var DitHead::velocity(const Tensor& noisy, float t, const Var& cond, const float* action3, DitFlags flags,
                      Var* hidden_out) const {
    if (noisy.rank() != 2 || noisy.shape[0] != cfg.n_tokens || noisy.shape[1] != cfg.token_dim)
        throw std::invalid_argument(prefix + ": expected noisy [" + std::to_string(cfg.n_tokens) + "," +
                                    std::to_string(cfg.token_dim) + "], got " + noisy.shape_str());
    if (cond->val.rank() != 2 || cond->val.shape[0] != cfg.cond_tokens || cond->val.shape[1] != cfg.d_cond)
        throw std::invalid_argument(prefix + ": condition shape mismatch: " + cond->val.shape_str());
    if (cfg.action_modulated && action3 == nullptr)
        throw std::invalid_argument(prefix + ": action required");
    if (!(t >= 0.0f && t <= 1.0f)) throw std::invalid_argument(prefix + ": t outside [0,1]");

    const int d = cfg.d;
    const int sc = cfg.cond_tokens, sx = cfg.n_tokens;

    // modulation vector from diffusion time (+ action)
    Var vec = ag::linear(ag::constant(time_features(t)), ps->get(prefix + ".t_embed.fc1.w"),
                         ps->get(prefix + ".t_embed.fc1.b"));
    vec = ag::silu(vec);
    vec = ag::linear(vec, ps->get(prefix + ".t_embed.fc2.w"), ps->get(prefix + ".t_embed.fc2.b"));
    if (cfg.action_modulated) {
        Tensor a({1, 3});
        a.data[0] = action3[0];
        a.data[1] = action3[1];
        a.data[2] = action3[2];
        Var av = ag::linear(ag::constant(a), ps->get(prefix + ".a_embed.fc1.w"),
                            ps->get(prefix + ".a_embed.fc1.b"));
        av = ag::silu(av);
        av = ag::linear(av, ps->get(prefix + ".a_embed.fc2.w"), ps->get(prefix + ".a_embed.fc2.b"));
        vec = ag::add(vec, av);
    }
    Var vec_act = ag::silu(vec);

    auto mod6 = [&](const std::string& p) {
        Var m = ag::linear(vec_act, ps->get(p + ".mod.w"), ps->get(p + ".mod.b"));  // [1, 6d]
        return ag::reshape(m, {6, d});
    };
    auto row = [&](const Var& m, int i) { return ag::reshape(ag::slice0(m, i, i + 1), {d}); };

    // stream block application on tokens [S, d]
    auto apply_attn = [&](const Var& x_tokens, const std::string& p, const Var& m, const Var& attn_slice) {
        // attn_slice: attention output rows for this stream, already [S, d]
        Var o = ag::linear(attn_slice, ps->get(p + ".attn.wo.w"), ps->get(p + ".attn.wo.b"));
        return ag::add(x_tokens, ag::gate(o, row(m, 2)));
    };
    auto apply_mlp = [&](const Var& x_tokens, const std::string& p, const Var& m) {
        Var h = ag::layer_norm(x_tokens, nullptr, nullptr);
        h = ag::modulate(h, row(m, 4), row(m, 3));
        h = ag::linear(h, ps->get(p + ".mlp.fc1.w"), ps->get(p + ".mlp.fc1.b"));
        h = ag::gelu(h);
        h = ag::linear(h, ps->get(p + ".mlp.fc2.w"), ps->get(p + ".mlp.fc2.b"));
        return ag::add(x_tokens, ag::gate(h, row(m, 5)));
    };
    auto qkv = [&](const Var& x_tokens, const std::string& p, const Var& m, Var& q, Var& k, Var& v) {
        Var h = ag::layer_norm(x_tokens, nullptr, nullptr);
        h = ag::modulate(h, row(m, 1), row(m, 0));
        q = ag::linear(h, ps->get(p + ".attn.wq.w"), ps->get(p + ".attn.wq.b"));
        k = ag::linear(h, ps->get(p + ".attn.wk.w"), ps->get(p + ".attn.wk.b"));
        v = ag::linear(h, ps->get(p + ".attn.wv.w"), ps->get(p + ".attn.wv.b"));
    };

    const ag::AttnMask mask = flags.disable_cross_stream ? ag::AttnMask::split_block : ag::AttnMask::full;

    Var c = ag::linear(cond, ps->get(prefix + ".cond_proj.w"), ps->get(prefix + ".cond_proj.b"));
    c = ag::add(c, ps->get(prefix + ".pos_cond"));
    Var x = ag::linear(ag::constant(noisy), ps->get(prefix + ".tok_in.w"), ps->get(prefix + ".tok_in.b"));
    x = ag::add(x, ps->get(prefix + ".pos_noise"));

    for (int i = 0; i < cfg.dual_blocks; ++i) {
        const std::string pc = prefix + ".dual" + std::to_string(i) + ".c";
        const std::string px = prefix + ".dual" + std::to_string(i) + ".x";
        Var mc = mod6(pc), mx = mod6(px);
        Var qc, kc, vc, qx, kx, vx;
        qkv(c, pc, mc, qc, kc, vc);
        qkv(x, px, mx, qx, kx, vx);
        Var q = ag::reshape(ag::concat0({qc, qx}), {1, sc + sx, d});
        Var k = ag::reshape(ag::concat0({kc, kx}), {1, sc + sx, d});
        Var v = ag::reshape(ag::concat0({vc, vx}), {1, sc + sx, d});
        Var a = ag::reshape(ag::attention(q, k, v, cfg.heads, mask, sc), {sc + sx, d});
        c = apply_attn(c, pc, mc, ag::slice0(a, 0, sc));
        x = apply_attn(x, px, mx, ag::slice0(a, sc, sc + sx));
        c = apply_mlp(c, pc, mc);
        x = apply_mlp(x, px, mx);
    }

    Var u = ag::concat0({c, x});
    for (int i = 0; i < cfg.single_blocks; ++i) {
        const std::string p = prefix + ".single" + std::to_string(i);
        Var m = mod6(p);
        Var q, k, v;
        qkv(u, p, m, q, k, v);
        Var a = ag::attention(ag::reshape(q, {1, sc + sx, d}), ag::reshape(k, {1, sc + sx, d}),
                              ag::reshape(v, {1, sc + sx, d}), cfg.heads, mask, sc);
        u = apply_attn(u, p, m, ag::reshape(a, {sc + sx, d}));
        u = apply_mlp(u, p, m);
    }

    Var xn = ag::slice0(u, sc, sc + sx);
    if (hidden_out) *hidden_out = xn;
    Var fm = ag::linear(vec_act, ps->get(prefix + ".final_mod.w"), ps->get(prefix + ".final_mod.b"));
    fm = ag::reshape(fm, {2, d});
    Var y = ag::layer_norm(xn, nullptr, nullptr);
    y = ag::modulate(y, row(fm, 1), row(fm, 0));
    return ag::linear(y, ps->get(prefix + ".out.w"), ps->get(prefix + ".out.b"));
}

}  // namespace wm::dit
