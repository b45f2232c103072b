#ifndef WM_CODEC_HPP
#define WM_CODEC_HPP

#include <string>
#include <vector>

#include "wm/nn.hpp"
#include "wm/serialize.hpp"
#include "wm/worldsim.hpp"

namespace wm::codec {

using ag::Var;

struct CodecConfig {
    int f = 8;        // spatial downsample factor (three stride-2 stages)
    int c_latent = 8; // latent channels
    int base = 16;    // encoder width; stages run base, 2*base, 3*base
    int temporal_window = 4;
    int d_temporal = 64;
    int temporal_layers = 2;
    int temporal_heads = 4;
};

struct TrainOpts {
    int steps = 2000;
    int batch = 8;
    float lr = 2e-3f;
    float weight_decay = 1e-4f;
};

struct FinetuneOpts {
    int steps = 800;
    int batch = 4;
    float lr = 1e-3f;
    // Fine-tuning perturbs clean latents with this noise so the temporal
    // module learns to reconstruct from imperfect, generated-like inputs.
    float latent_noise = 0.1f;
};

Tensor frame_to_tensor(const sim::Frame& fr);           // [H,W,3] in 0..1
sim::Frame tensor_to_frame(const Tensor& img);          // clamps and rounds

// Convolutional codec with a frozen-encoder temporal decoder variant:
// per-frame encoder/decoder plus an optional attention module over a short
// latent window applied before the decoder stack.
struct Codec {
    CodecConfig cfg;
    nn::ParamStore ps;
    Tensor norm_mean, norm_std;  // per-channel latent statistics
    std::string enc_digest;     // recorded when the encoder is frozen
    bool temporal_trained = false;

    Codec(const CodecConfig& config, uint64_t seed);

    int latent_h(int image_h) const { return image_h / cfg.f; }
    int latent_w(int image_w) const { return image_w / cfg.f; }

    // [H,W,3] float image -> normalized latent [h,w,C]
    Tensor encode_image(const Tensor& img) const;
    // frames -> [T, h, w, C]
    Tensor encode_frames(const std::vector<sim::Frame>& frames) const;

    // window of normalized latents [k,h,w,C] -> float frames [H,W,3] each
    std::vector<Tensor> decode_framewise(const Tensor& latents) const;
    std::vector<Tensor> decode_temporal(const Tensor& latents, bool temporal_self_mask = false) const;
    std::vector<Tensor> decode(const Tensor& latents) const;

    // Sliding-window decode of a whole latent sequence; frame i is decoded
    // from the window ending at i.
    std::vector<Tensor> decode_video(const Tensor& latents, bool temporal) const;

    std::vector<float> train(const std::vector<sim::Episode>& episodes, const TrainOpts& opts,
                             uint64_t seed);
    std::vector<float> finetune_temporal(const std::vector<sim::Episode>& episodes,
                                         const FinetuneOpts& opts, uint64_t seed);

    io::Container to_container() const;
    static Codec from_container(const io::Container& c);

    // graph builders (shared by ops and training)
    Var enc_forward(const Var& img_chw) const;  // [3,H,W] -> raw latent [C,h,w]
    Var dec_forward(const Var& lat_chw) const;  // [C,h,w] -> [3,H,W]
    // temporal correction over a window of normalized latents [k, L, C]
    Var temporal_forward(const Var& tokens, ag::AttnMask tmask) const;

    std::string compute_enc_digest() const;
};

}  // namespace wm::codec

#endif
