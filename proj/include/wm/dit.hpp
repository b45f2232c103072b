#ifndef WM_DIT_HPP
#define WM_DIT_HPP

#include "wm/nn.hpp"

namespace wm::dit {

using ag::Var;

struct DitConfig {
    int d = 128;
    int heads = 4;
    int dual_blocks = 1;
    int single_blocks = 1;
    int d_cond = 256;     // width of incoming condition tokens
    int cond_tokens = 131;
    int n_tokens = 6;     // noise-stream tokens
    int token_dim = 3;    // per-token input/output channels
    int t_feat = 64;      // sinusoidal feature width for the diffusion time
    bool action_modulated = false;

    void validate() const;
};

struct DitFlags {
    // Restrict attention to within-stream in every phase; the noise stream
    // then never reads the condition tokens.
    bool disable_cross_stream = false;
};

// Dual-Single-Stream diffusion transformer. In the dual phase the condition
// and noise streams keep separate weights and meet only inside attention; the
// single phase runs the concatenated sequence through shared blocks.
// Diffusion time (and optionally the next action) enters through adaLN
// modulation with zero-initialized projections, so at initialization
// modulation is an exact identity and every block is a passthrough.
struct DitHead {
    DitConfig cfg;
    nn::ParamStore* ps = nullptr;
    std::string prefix;

    DitHead() = default;
    DitHead(nn::ParamStore& store, const std::string& name, const DitConfig& config, Rng& rng);

    // noisy: [n_tokens, token_dim]; cond: [cond_tokens, d_cond];
    // action3: 3 normalized scalars, required iff action_modulated.
    // hidden_out, when set, receives the noise-stream tokens entering the
    // final projection.
    Var velocity(const Tensor& noisy, float t, const Var& cond, const float* action3,
                 DitFlags flags = {}, Var* hidden_out = nullptr) const;

    Tensor time_features(float t) const;
};

}  // namespace wm::dit

#endif
