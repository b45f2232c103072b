#ifndef WM_MST_HPP
#define WM_MST_HPP

#include "wm/nn.hpp"

namespace wm::mst {

using ag::Var;

struct MstConfig {
    int d = 256;
    int heads = 8;
    int pairs = 6;   // interleaved (causal temporal, multimodal spatial) layer pairs
    int t_max = 10;  // maximum conditioning frames
    int l_tokens = 128;
    int c_latent = 8;

    void validate() const;
};

// Context encoder: projects latent patches and actions into a shared token
// space, then alternates causal temporal attention (per token slot, across
// frames) with full spatial attention (within each frame, across both
// modalities). The last frame's embedding is the context F.
struct Mst {
    MstConfig cfg;
    nn::ParamStore* ps = nullptr;
    std::string prefix;

    Mst() = default;
    Mst(nn::ParamStore& store, const std::string& name, const MstConfig& config, Rng& rng);

    int width() const { return cfg.l_tokens + 3; }

    // z: [T, L, C], actions: [T, 3] -> E0: [T, L+3, D]
    Var embed_tokens(const Tensor& z, const Tensor& actions) const;

    struct Out {
        Var per_frame;  // [T, L+3, D]
        Var f;          // [L+3, D], last frame
    };
    Out forward(const Var& e0) const;

    // embed + forward
    Out encode(const Tensor& z, const Tensor& actions) const;
};

}  // namespace wm::mst

#endif
