#include "wm/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wm::codec {

namespace ag = wm::ag;

Tensor frame_to_tensor(const sim::Frame& fr) {
    Tensor t({fr.height, fr.width, 3});
    for (size_t i = 0; i < fr.rgb.size(); ++i) t.data[i] = fr.rgb[i] / 255.0f;
    return t;
}

sim::Frame tensor_to_frame(const Tensor& img) {
    sim::Frame fr;
    fr.height = img.shape[0];
    fr.width = img.shape[1];
    fr.rgb.resize(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        const float v = std::clamp(img.data[i], 0.0f, 1.0f);
        fr.rgb[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    return fr;
}

namespace {

Tensor hwc_to_chw(const Tensor& x) {
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    Tensor out({c, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch) out.data[(static_cast<size_t>(ch) * h + i) * w + j] = x.at3(i, j, ch);
    return out;
}

Tensor chw_to_hwc(const Tensor& x) {
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor out({h, w, c});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.at3(i, j, ch) = x.data[(static_cast<size_t>(ch) * h + i) * w + j];
    return out;
}

}  // namespace

Codec::Codec(const CodecConfig& config, uint64_t seed) : cfg(config) {
    if (cfg.f != 8) throw std::invalid_argument("codec: only f = 8 is supported");
    if (cfg.c_latent < 1) throw std::invalid_argument("codec: c_latent must be >= 1");
    if (cfg.temporal_window < 1) throw std::invalid_argument("codec: temporal_window must be >= 1");
    Rng rng(Rng(seed).fork("codec").seed());

    const int b = cfg.base, c = cfg.c_latent;
    auto conv = [&](const std::string& name, int cin, int cout) {
        ps.add(name + ".w", nn::init_normal({cout, cin, 3, 3}, rng, 0.05f));
        ps.add(name + ".b", Tensor::zeros({cout}));
    };
    conv("codec.enc.c0", 3, b);
    conv("codec.enc.c1", b, 2 * b);      // stride 2
    conv("codec.enc.c2", 2 * b, 3 * b);  // stride 2
    conv("codec.enc.c3", 3 * b, 3 * b);  // stride 2
    conv("codec.enc.c4", 3 * b, c);
    conv("codec.dec.c0", c, 3 * b);
    conv("codec.dec.c1", 3 * b, 3 * b);
    conv("codec.dec.c2", 3 * b, 2 * b);
    conv("codec.dec.c3", 2 * b, b);
    conv("codec.dec.c4", b, 3);

    // temporal module: attention over a short window of latent tokens,
    // zero-init output projection so it starts as an exact no-op
    const int dt = cfg.d_temporal;
    ps.add("codec.tdec.proj_in.w", nn::init_normal({c, dt}, rng, 0.02f));
    ps.add("codec.tdec.proj_in.b", Tensor::zeros({dt}));
    for (int l = 0; l < cfg.temporal_layers; ++l) {
        const std::string p = "codec.tdec.layer" + std::to_string(l);
        nn::LayerNorm(ps, p + ".ln_s", dt);
        nn::Mha(ps, p + ".attn_s", dt, cfg.temporal_heads, rng);
        nn::LayerNorm(ps, p + ".ln_t", dt);
        nn::Mha(ps, p + ".attn_t", dt, cfg.temporal_heads, rng);
        nn::LayerNorm(ps, p + ".ln_m", dt);
        nn::Mlp(ps, p + ".mlp", dt, 2 * dt, rng);
    }
    ps.add("codec.tdec.proj_out.w", Tensor::zeros({dt, c}));
    ps.add("codec.tdec.proj_out.b", Tensor::zeros({c}));

    norm_mean = Tensor::zeros({c});
    norm_std = Tensor::full({c}, 1.0f);
}

Var Codec::enc_forward(const Var& img_chw) const {
    auto conv = [&](const Var& x, const std::string& name, int stride) {
        return ag::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, 1);
    };
    Var x = ag::silu(conv(img_chw, "codec.enc.c0", 1));
    x = ag::silu(conv(x, "codec.enc.c1", 2));
    x = ag::silu(conv(x, "codec.enc.c2", 2));
    x = ag::silu(conv(x, "codec.enc.c3", 2));
    return conv(x, "codec.enc.c4", 1);
}

Var Codec::dec_forward(const Var& lat_chw) const {
    auto conv = [&](const Var& x, const std::string& name) {
        return ag::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), 1, 1);
    };
    Var x = ag::silu(conv(lat_chw, "codec.dec.c0"));
    x = ag::silu(conv(ag::upsample2x(x), "codec.dec.c1"));
    x = ag::silu(conv(ag::upsample2x(x), "codec.dec.c2"));
    x = ag::silu(conv(ag::upsample2x(x), "codec.dec.c3"));
    return conv(x, "codec.dec.c4");
}

Var Codec::temporal_forward(const Var& tokens, ag::AttnMask tmask) const {
    Var x = ag::linear(tokens, ps.get("codec.tdec.proj_in.w"), ps.get("codec.tdec.proj_in.b"));
    for (int l = 0; l < cfg.temporal_layers; ++l) {
        const std::string p = "codec.tdec.layer" + std::to_string(l);
        auto ln = [&](const std::string& n, const Var& v) {
            return ag::layer_norm(v, ps.get(p + n + ".g"), ps.get(p + n + ".b"));
        };
        auto mha = [&](const std::string& n, const Var& v, ag::AttnMask mask) {
            Var q = ag::linear(v, ps.get(p + n + ".wq.w"), ps.get(p + n + ".wq.b"));
            Var kk = ag::linear(v, ps.get(p + n + ".wk.w"), ps.get(p + n + ".wk.b"));
            Var vv = ag::linear(v, ps.get(p + n + ".wv.w"), ps.get(p + n + ".wv.b"));
            Var o = ag::attention(q, kk, vv, cfg.temporal_heads, mask);
            return ag::linear(o, ps.get(p + n + ".wo.w"), ps.get(p + n + ".wo.b"));
        };
        x = ag::add(x, mha(".attn_s", ln(".ln_s", x), ag::AttnMask::full));
        Var xt = ag::transpose01(x);  // [L, k, dt]
        Var at = mha(".attn_t", ln(".ln_t", xt), tmask);
        x = ag::add(x, ag::transpose01(at));
        Var h = ln(".ln_m", x);
        h = ag::linear(h, ps.get(p + ".mlp.fc1.w"), ps.get(p + ".mlp.fc1.b"));
        h = ag::gelu(h);
        h = ag::linear(h, ps.get(p + ".mlp.fc2.w"), ps.get(p + ".mlp.fc2.b"));
        x = ag::add(x, h);
    }
    return ag::linear(x, ps.get("codec.tdec.proj_out.w"), ps.get("codec.tdec.proj_out.b"));
}

Tensor Codec::encode_image(const Tensor& img) const {
    if (img.rank() != 3 || img.shape[2] != 3) throw std::invalid_argument("encode: expected [H,W,3]");
    if (img.shape[0] % cfg.f != 0 || img.shape[1] % cfg.f != 0)
        throw std::invalid_argument("encode: image dims must be divisible by f=" + std::to_string(cfg.f));
    Var z = enc_forward(ag::constant(hwc_to_chw(img)));
    Tensor out = chw_to_hwc(z->val);  // [h,w,C]
    const int c = cfg.c_latent;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const int ch = static_cast<int>(i % c);
        out.data[i] = (out.data[i] - norm_mean.data[ch]) / norm_std.data[ch];
    }
    return out;
}

Tensor Codec::encode_frames(const std::vector<sim::Frame>& frames) const {
    if (frames.empty()) throw std::invalid_argument("encode: empty frame sequence");
    const int h = latent_h(frames[0].height), w = latent_w(frames[0].width);
    Tensor out({static_cast<int>(frames.size()), h, w, cfg.c_latent});
    const int64_t per = static_cast<int64_t>(h) * w * cfg.c_latent;
    for (size_t t = 0; t < frames.size(); ++t) {
        Tensor z = encode_image(frame_to_tensor(frames[t]));
        std::copy(z.data.begin(), z.data.end(), out.data.begin() + static_cast<int64_t>(t) * per);
    }
    return out;
}

namespace {

Tensor latent_slice(const Tensor& latents, int t) {
    const int h = latents.shape[1], w = latents.shape[2], c = latents.shape[3];
    Tensor out({h, w, c});
    const int64_t per = static_cast<int64_t>(h) * w * c;
    std::copy(latents.data.begin() + t * per, latents.data.begin() + (t + 1) * per, out.data.begin());
    return out;
}

}  // namespace

std::vector<Tensor> Codec::decode_framewise(const Tensor& latents) const {
    if (latents.rank() != 4 || latents.shape[0] < 1)
        throw std::invalid_argument("decode: expected non-empty [k,h,w,C]");
    std::vector<Tensor> out;
    for (int t = 0; t < latents.shape[0]; ++t) {
        Tensor z = latent_slice(latents, t);
        const int c = cfg.c_latent;
        for (int64_t i = 0; i < z.numel(); ++i) {
            const int ch = static_cast<int>(i % c);
            z.data[i] = z.data[i] * norm_std.data[ch] + norm_mean.data[ch];
        }
        Var img = dec_forward(ag::constant(hwc_to_chw(z)));
        out.push_back(chw_to_hwc(img->val));
    }
    return out;
}

std::vector<Tensor> Codec::decode_temporal(const Tensor& latents, bool temporal_self_mask) const {
    if (latents.rank() != 4 || latents.shape[0] < 1)
        throw std::invalid_argument("decode: expected non-empty [k,h,w,C]");
    const int k = latents.shape[0];
    if (k > cfg.temporal_window)
        throw std::invalid_argument("decode: window exceeds temporal_window");
    const int h = latents.shape[1], w = latents.shape[2], c = latents.shape[3];
    const int l_tokens = h * w;

    Tensor tok = latents;
    tok.shape = {k, l_tokens, c};
    Var corr = temporal_forward(ag::constant(tok),
                                temporal_self_mask ? ag::AttnMask::self_only : ag::AttnMask::full);
    Tensor corrected = tok;
    for (size_t i = 0; i < corrected.data.size(); ++i) corrected.data[i] += corr->val.data[i];

    std::vector<Tensor> out;
    for (int t = 0; t < k; ++t) {
        Tensor z({h, w, c});
        std::copy(corrected.data.begin() + static_cast<int64_t>(t) * l_tokens * c,
                  corrected.data.begin() + static_cast<int64_t>(t + 1) * l_tokens * c, z.data.begin());
        for (int64_t i = 0; i < z.numel(); ++i) {
            const int ch = static_cast<int>(i % c);
            z.data[i] = z.data[i] * norm_std.data[ch] + norm_mean.data[ch];
        }
        Var img = dec_forward(ag::constant(hwc_to_chw(z)));
        out.push_back(chw_to_hwc(img->val));
    }
    return out;
}

std::vector<Tensor> Codec::decode(const Tensor& latents) const {
    return temporal_trained ? decode_temporal(latents) : decode_framewise(latents);
}

std::vector<Tensor> Codec::decode_video(const Tensor& latents, bool temporal) const {
    const int t_total = latents.shape[0];
    std::vector<Tensor> out;
    if (!temporal) {
        return decode_framewise(latents);
    }
    const int h = latents.shape[1], w = latents.shape[2], c = latents.shape[3];
    const int64_t per = static_cast<int64_t>(h) * w * c;
    for (int t = 0; t < t_total; ++t) {
        const int k = std::min(cfg.temporal_window, t + 1);
        Tensor window({k, h, w, c});
        std::copy(latents.data.begin() + static_cast<int64_t>(t - k + 1) * per,
                  latents.data.begin() + static_cast<int64_t>(t + 1) * per, window.data.begin());
        out.push_back(decode_temporal(window).back());
    }
    return out;
}

std::vector<float> Codec::train(const std::vector<sim::Episode>& episodes, const TrainOpts& opts,
                                uint64_t seed) {
    if (episodes.empty()) throw std::invalid_argument("train_codec: empty dataset");
    std::vector<const sim::Frame*> frames;
    for (const auto& ep : episodes)
        for (const auto& fr : ep.frames) frames.push_back(&fr);

    // only the encoder/decoder train here
    for (auto& [name, p] : ps.params) p->requires_grad = name.rfind("codec.enc.", 0) == 0 || name.rfind("codec.dec.", 0) == 0;

    nn::AdamW opt;
    opt.lr = opts.lr;
    opt.weight_decay = opts.weight_decay;
    Rng rng = Rng(seed).fork("codec_train");
    std::vector<float> curve;

    for (int step = 0; step < opts.steps; ++step) {
        ps.zero_grad();
        std::vector<Var> losses;
        for (int b = 0; b < opts.batch; ++b) {
            const sim::Frame& fr = *frames[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(frames.size()) - 1))];
            Tensor img = hwc_to_chw(frame_to_tensor(fr));
            Var rec = dec_forward(enc_forward(ag::constant(img)));
            losses.push_back(ag::mse_loss(rec, img));
        }
        Var loss = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) loss = ag::add(loss, losses[i]);
        loss = ag::scale(loss, 1.0f / static_cast<float>(losses.size()));
        ag::backward(loss);
        opt.step(ps);
        curve.push_back(loss->val.data[0]);
    }

    for (auto& [name, p] : ps.params) p->requires_grad = true;

    // latent statistics over the training frames (raw encoder outputs)
    const int c = cfg.c_latent;
    std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
    int64_t count = 0;
    for (size_t i = 0; i < frames.size(); ++i) {
        Var z = enc_forward(ag::constant(hwc_to_chw(frame_to_tensor(*frames[i]))));
        const Tensor& zt = z->val;  // [C,h,w]
        const int64_t per = zt.numel() / c;
        for (int ch = 0; ch < c; ++ch) {
            const float* p = zt.data.data() + ch * per;
            for (int64_t j = 0; j < per; ++j) {
                sum[ch] += p[j];
                sumsq[ch] += static_cast<double>(p[j]) * p[j];
            }
        }
        count += per;
    }
    for (int ch = 0; ch < c; ++ch) {
        const double mean = sum[ch] / static_cast<double>(count);
        const double var = sumsq[ch] / static_cast<double>(count) - mean * mean;
        norm_mean.data[ch] = static_cast<float>(mean);
        norm_std.data[ch] = static_cast<float>(std::max(std::sqrt(std::max(var, 0.0)), 1e-3));
    }

    enc_digest = compute_enc_digest();
    return curve;
}

std::vector<float> Codec::finetune_temporal(const std::vector<sim::Episode>& episodes,
                                            const FinetuneOpts& opts, uint64_t seed) {
    if (episodes.empty()) throw std::invalid_argument("finetune_temporal: empty dataset");
    if (enc_digest.empty()) throw std::logic_error("finetune_temporal: codec has not been trained");
    if (compute_enc_digest() != enc_digest)
        throw std::logic_error("finetune_temporal: encoder digest mismatch (encoder must stay frozen)");

    // precompute normalized latents per episode
    std::vector<Tensor> latents;
    std::vector<std::vector<Tensor>> images;  // clean target frames (CHW)
    for (const auto& ep : episodes) {
        latents.push_back(encode_frames(ep.frames));
        std::vector<Tensor> imgs;
        for (const auto& fr : ep.frames) imgs.push_back(hwc_to_chw(frame_to_tensor(fr)));
        images.push_back(std::move(imgs));
    }

    for (auto& [name, p] : ps.params) p->requires_grad = name.rfind("codec.tdec.", 0) == 0;

    nn::AdamW opt;
    opt.lr = opts.lr;
    Rng rng = Rng(seed).fork("codec_finetune");
    std::vector<float> curve;
    const int wt = cfg.temporal_window;

    for (int step = 0; step < opts.steps; ++step) {
        ps.zero_grad();
        std::vector<Var> losses;
        for (int b = 0; b < opts.batch; ++b) {
            const int e = rng.uniform_int(0, static_cast<int>(latents.size()) - 1);
            const Tensor& lat = latents[e];
            const int t_total = lat.shape[0];
            const int k = std::min(wt, t_total);
            const int t0 = rng.uniform_int(0, t_total - k);
            const int h = lat.shape[1], w = lat.shape[2], c = lat.shape[3];
            const int l_tokens = h * w;
            const int64_t per = static_cast<int64_t>(l_tokens) * c;
            Tensor window({k, l_tokens, c});
            std::copy(lat.data.begin() + t0 * per, lat.data.begin() + (t0 + k) * per, window.data.begin());
            for (auto& v : window.data) v += opts.latent_noise * static_cast<float>(rng.normal());

            Var tok = ag::constant(window);
            Var corr = temporal_forward(tok, ag::AttnMask::full);
            Var corrected = ag::add(tok, corr);
            // tile of per-channel std for un-normalizing in graph
            Tensor std_tile({l_tokens, c});
            for (int r = 0; r < l_tokens; ++r)
                for (int ch = 0; ch < c; ++ch) std_tile.at2(r, ch) = norm_std.data[ch];
            for (int i = 0; i < k; ++i) {
                Var z = ag::reshape(ag::slice0(corrected, i, i + 1), {l_tokens, c});
                Var zum = ag::add_broadcast0(ag::mul(z, ag::constant(std_tile)), ag::constant(norm_mean));
                Var chw = ag::reshape(ag::transpose01(zum), {c, h, w});
                Var img = dec_forward(chw);
                losses.push_back(ag::mse_loss(img, images[e][t0 + i]));
            }
        }
        Var loss = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) loss = ag::add(loss, losses[i]);
        loss = ag::scale(loss, 1.0f / static_cast<float>(losses.size()));
        ag::backward(loss);
        opt.step(ps);
        curve.push_back(loss->val.data[0]);
    }

    for (auto& [name, p] : ps.params) p->requires_grad = true;
    if (compute_enc_digest() != enc_digest)
        throw std::logic_error("finetune_temporal: encoder changed during fine-tuning");
    temporal_trained = true;
    return curve;
}

std::string Codec::compute_enc_digest() const {
    std::map<std::string, Tensor> enc;
    for (const auto& [name, p] : ps.params)
        if (name.rfind("codec.enc.", 0) == 0) enc.emplace(name, p->val);
    return io::digest_tensors(enc, "codec.enc.");
}

io::Container Codec::to_container() const {
    io::Container c;
    c.tensors = ps.dump();
    c.tensors.emplace("codec.norm.mean", norm_mean);
    c.tensors.emplace("codec.norm.std", norm_std);
    c.meta["kind"] = "codec";
    c.meta["config"] = {{"f", cfg.f},
                        {"c_latent", cfg.c_latent},
                        {"base", cfg.base},
                        {"temporal_window", cfg.temporal_window},
                        {"d_temporal", cfg.d_temporal},
                        {"temporal_layers", cfg.temporal_layers},
                        {"temporal_heads", cfg.temporal_heads}};
    c.meta["enc_digest"] = enc_digest;
    c.meta["temporal_trained"] = temporal_trained;
    return c;
}

Codec Codec::from_container(const io::Container& c) {
    CodecConfig cfg;
    const auto& j = c.meta.at("config");
    cfg.f = j.at("f");
    cfg.c_latent = j.at("c_latent");
    cfg.base = j.at("base");
    cfg.temporal_window = j.at("temporal_window");
    cfg.d_temporal = j.at("d_temporal");
    cfg.temporal_layers = j.at("temporal_layers");
    cfg.temporal_heads = j.at("temporal_heads");
    Codec codec(cfg, 0);
    codec.ps.load(c.tensors, /*allow_partial=*/true);
    codec.norm_mean = c.tensors.at("codec.norm.mean");
    codec.norm_std = c.tensors.at("codec.norm.std");
    codec.enc_digest = c.meta.value("enc_digest", "");
    codec.temporal_trained = c.meta.value("temporal_trained", false);
    return codec;
}

}  // namespace wm::codec
