#include "wm/mst.hpp"

#include <stdexcept>

namespace wm::mst {

namespace ag = wm::ag;

void MstConfig::validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0)
        throw std::invalid_argument("mst config: d must be positive and divisible by heads");
    if (pairs < 1) throw std::invalid_argument("mst config: pairs must be >= 1");
    if (t_max < 1) throw std::invalid_argument("mst config: t_max must be >= 1");
    if (l_tokens < 1 || c_latent < 1) throw std::invalid_argument("mst config: bad token dims");
}

Mst::Mst(nn::ParamStore& store, const std::string& name, const MstConfig& config, Rng& rng)
    : cfg(config), ps(&store), prefix(name) {
    cfg.validate();
    const int d = cfg.d;
    ps->add(prefix + ".tok_proj.w", nn::init_normal({cfg.c_latent, d}, rng, 0.02f));
    ps->add(prefix + ".tok_proj.b", Tensor::zeros({d}));
    // each action scalar lifts through the same 1 -> D map, giving 3 tokens
    ps->add(prefix + ".act_lift.w", nn::init_normal({1, d}, rng, 0.02f));
    ps->add(prefix + ".act_lift.b", Tensor::zeros({d}));
    ps->add(prefix + ".pos_spatial", nn::init_normal({cfg.l_tokens + 3, d}, rng, 0.02f));
    ps->add(prefix + ".pos_temporal", nn::init_normal({cfg.t_max, d}, rng, 0.02f));
    for (int l = 0; l < cfg.pairs; ++l) {
        const std::string pt = prefix + ".pair" + std::to_string(l);
        for (const char* sub : {".temporal", ".spatial"}) {
            nn::LayerNorm(*ps, pt + sub + ".ln1", d);
            nn::Mha(*ps, pt + sub + ".attn", d, cfg.heads, rng);
            nn::LayerNorm(*ps, pt + sub + ".ln2", d);
            nn::Mlp(*ps, pt + sub + ".mlp", d, 4 * d, rng);
        }
    }
    nn::LayerNorm(*ps, prefix + ".final_ln", d);
}

Var Mst::embed_tokens(const Tensor& z, const Tensor& actions) const {
    if (z.rank() != 3 || z.shape[1] != cfg.l_tokens || z.shape[2] != cfg.c_latent)
        throw std::invalid_argument("embed_tokens: expected z [T," + std::to_string(cfg.l_tokens) + "," +
                                    std::to_string(cfg.c_latent) + "], got " + z.shape_str());
    const int t = z.shape[0];
    if (t < 1 || actions.rank() != 2 || actions.shape[0] != t || actions.shape[1] != 3)
        throw std::invalid_argument("embed_tokens: actions must be [T,3] matching z");
    if (t > cfg.t_max)
        throw std::invalid_argument("embed_tokens: T=" + std::to_string(t) + " exceeds t_max=" +
                                    std::to_string(cfg.t_max));

    const int l = cfg.l_tokens, d = cfg.d;
    // spatial tokens: [T*L, C] -> [T*L, D]
    Tensor zt = z;
    zt.shape = {t * l, cfg.c_latent};
    Var spatial = ag::linear(ag::constant(zt), ps->get(prefix + ".tok_proj.w"), ps->get(prefix + ".tok_proj.b"));
    spatial = ag::reshape(spatial, {t, l, d});
    // action tokens: each scalar through the shared lift -> [T*3, D]
    Tensor at = actions;
    at.shape = {t * 3, 1};
    Var act = ag::linear(ag::constant(at), ps->get(prefix + ".act_lift.w"), ps->get(prefix + ".act_lift.b"));
    act = ag::reshape(act, {t, 3, d});

    // concat per frame along the token axis: [T, L+3, D]
    std::vector<Var> frames;
    frames.reserve(t);
    for (int i = 0; i < t; ++i) {
        Var sf = ag::reshape(ag::slice0(spatial, i, i + 1), {l, d});
        Var af = ag::reshape(ag::slice0(act, i, i + 1), {3, d});
        frames.push_back(ag::reshape(ag::concat0({sf, af}), {1, l + 3, d}));
    }
    Var e0 = ag::concat0(frames);

    // positions: spatial table broadcast over frames, temporal rows broadcast
    // over tokens within each frame
    e0 = ag::add_broadcast0(e0, ps->get(prefix + ".pos_spatial"));
    Var pos_t = ag::slice0(ps->get(prefix + ".pos_temporal"), 0, t);  // [T, D]
    std::vector<Var> pt_rows;
    pt_rows.reserve(t);
    for (int i = 0; i < t; ++i) {
        Var row = ag::slice0(pos_t, i, i + 1);  // [1, D]
        // one frame: add row to all L+3 tokens
        Var frame = ag::reshape(ag::slice0(e0, i, i + 1), {l + 3, d});
        pt_rows.push_back(ag::reshape(ag::add_broadcast0(frame, ag::reshape(row, {d})), {1, l + 3, d}));
    }
    return ag::concat0(pt_rows);
}

Mst::Out Mst::forward(const Var& e0) const {
    if (e0->val.rank() != 3 || e0->val.shape[1] != width() || e0->val.shape[2] != cfg.d)
        throw std::invalid_argument("mst forward: expected [T," + std::to_string(width()) + "," +
                                    std::to_string(cfg.d) + "], got " + e0->val.shape_str());
    const int t = e0->val.shape[0];

    Var e = e0;
    for (int l = 0; l < cfg.pairs; ++l) {
        const std::string pt = prefix + ".pair" + std::to_string(l);
        auto block = [&](const Var& x, const std::string& sub, ag::AttnMask mask, bool temporal) {
            Var y = x;
            Var h = temporal ? ag::transpose01(y) : y;  // temporal: [S, T, D]
            Var ln1 = ag::layer_norm(h, ps->get(pt + sub + ".ln1.g"), ps->get(pt + sub + ".ln1.b"));
            Var q = ag::linear(ln1, ps->get(pt + sub + ".attn.wq.w"), ps->get(pt + sub + ".attn.wq.b"));
            Var k = ag::linear(ln1, ps->get(pt + sub + ".attn.wk.w"), ps->get(pt + sub + ".attn.wk.b"));
            Var v = ag::linear(ln1, ps->get(pt + sub + ".attn.wv.w"), ps->get(pt + sub + ".attn.wv.b"));
            Var a = ag::attention(q, k, v, cfg.heads, mask);
            a = ag::linear(a, ps->get(pt + sub + ".attn.wo.w"), ps->get(pt + sub + ".attn.wo.b"));
            h = ag::add(h, a);
            Var ln2 = ag::layer_norm(h, ps->get(pt + sub + ".ln2.g"), ps->get(pt + sub + ".ln2.b"));
            Var m = ag::linear(ln2, ps->get(pt + sub + ".mlp.fc1.w"), ps->get(pt + sub + ".mlp.fc1.b"));
            m = ag::gelu(m);
            m = ag::linear(m, ps->get(pt + sub + ".mlp.fc2.w"), ps->get(pt + sub + ".mlp.fc2.b"));
            h = ag::add(h, m);
            return temporal ? ag::transpose01(h) : h;
        };
        e = block(e, ".temporal", ag::AttnMask::causal, /*temporal=*/true);
        e = block(e, ".spatial", ag::AttnMask::full, /*temporal=*/false);
    }
    e = ag::layer_norm(e, ps->get(prefix + ".final_ln.g"), ps->get(prefix + ".final_ln.b"));

    Out out;
    out.per_frame = e;
    out.f = ag::reshape(ag::slice0(e, t - 1, t), {width(), cfg.d});
    return out;
}

Mst::Out Mst::encode(const Tensor& z, const Tensor& actions) const {
    return forward(embed_tokens(z, actions));
}

}  // namespace wm::mst
