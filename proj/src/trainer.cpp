#include "wm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "wm/rectflow.hpp"

namespace wm::train {

namespace ag = wm::ag;

void WmConfig::finalize() {
    mst.l_tokens = latent_h * latent_w;
    mst.c_latent = c_latent;
    traj.d_cond = mst.d;
    traj.cond_tokens = mst.l_tokens + 3;
    traj.n_tokens = horizon;
    traj.token_dim = 3;
    traj.action_modulated = false;
    vis.d_cond = mst.d;
    vis.cond_tokens = mst.l_tokens + 3;
    vis.n_tokens = mst.l_tokens;
    vis.token_dim = c_latent;
    vis.action_modulated = true;
}

WorldModel::WorldModel(const WmConfig& config, uint64_t seed) : cfg(config) {
    cfg.finalize();
    Rng rng(Rng(seed).fork("world_model").seed());
    Rng r_mst = rng.fork("mst"), r_traj = rng.fork("trajdit"), r_vis = rng.fork("visdit");
    mst_enc = mst::Mst(ps, "mst", cfg.mst, r_mst);
    trajdit = dit::DitHead(ps, "trajdit", cfg.traj, r_traj);
    visdit = dit::DitHead(ps, "visdit", cfg.vis, r_vis);
    traj_mean = Tensor::zeros({cfg.horizon, 3});
    traj_std = Tensor::full({cfg.horizon, 3}, 1.0f);
}

WorldModel::WorldModel(WorldModel&& o) noexcept
    : cfg(std::move(o.cfg)),
      ps(std::move(o.ps)),
      mst_enc(std::move(o.mst_enc)),
      trajdit(std::move(o.trajdit)),
      visdit(std::move(o.visdit)),
      traj_mean(std::move(o.traj_mean)),
      traj_std(std::move(o.traj_std)) {
    mst_enc.ps = &ps;
    trajdit.ps = &ps;
    visdit.ps = &ps;
}

ag::Var WorldModel::encode_context(const Tensor& latents, const Tensor& actions) const {
    return mst_enc.encode(latents, actions).f;
}

ag::Var WorldModel::traj_velocity(const Tensor& noisy_norm, float t, const ag::Var& f, dit::DitFlags flags,
                                  ag::Var* hidden) const {
    if (noisy_norm.rank() != 2 || noisy_norm.shape[0] != cfg.horizon || noisy_norm.shape[1] != 3)
        throw std::invalid_argument("traj_velocity: expected [" + std::to_string(cfg.horizon) +
                                    ",3], got " + noisy_norm.shape_str());
    return trajdit.velocity(noisy_norm, t, f, nullptr, flags, hidden);
}

ag::Var WorldModel::vis_velocity(const Tensor& noisy, float t, const ag::Var& f, const sim::Action& action,
                                 dit::DitFlags flags, ag::Var* hidden) const {
    if (noisy.rank() != 3 || noisy.shape[0] != cfg.latent_h || noisy.shape[1] != cfg.latent_w ||
        noisy.shape[2] != cfg.c_latent)
        throw std::invalid_argument("vis_velocity: expected [" + std::to_string(cfg.latent_h) + "," +
                                    std::to_string(cfg.latent_w) + "," + std::to_string(cfg.c_latent) +
                                    "], got " + noisy.shape_str());
    if (!std::isfinite(action.dtheta) || !std::isfinite(action.dx) || !std::isfinite(action.dy))
        throw std::invalid_argument("vis_velocity: action must be finite");
    float a3[3];
    normalized_action(action, a3);
    Tensor tokens = noisy;
    tokens.shape = {l_tokens(), cfg.c_latent};
    ag::Var v = visdit.velocity(tokens, t, f, a3, flags, hidden);
    return ag::reshape(v, {cfg.latent_h, cfg.latent_w, cfg.c_latent});
}

Tensor WorldModel::normalize_traj(const sim::Trajectory& tr) const {
    if (tr.horizon() != cfg.horizon)
        throw std::invalid_argument("normalize_traj: horizon mismatch");
    Tensor out({cfg.horizon, 3});
    for (int i = 0; i < cfg.horizon; ++i) {
        const double raw[3] = {tr.rows[i].dtheta, tr.rows[i].dx, tr.rows[i].dy};
        for (int j = 0; j < 3; ++j)
            out.at2(i, j) = (static_cast<float>(raw[j]) - traj_mean.at2(i, j)) / traj_std.at2(i, j);
    }
    return out;
}

sim::Trajectory WorldModel::denormalize_traj(const Tensor& rows) const {
    sim::Trajectory tr;
    for (int i = 0; i < cfg.horizon; ++i) {
        sim::Action a;
        a.dtheta = rows.at2(i, 0) * traj_std.at2(i, 0) + traj_mean.at2(i, 0);
        a.dx = rows.at2(i, 1) * traj_std.at2(i, 1) + traj_mean.at2(i, 1);
        a.dy = rows.at2(i, 2) * traj_std.at2(i, 2) + traj_mean.at2(i, 2);
        tr.rows.push_back(a);
    }
    return tr;
}

void WorldModel::normalized_action(const sim::Action& a, float out[3]) const {
    // first-row statistics double as the per-step action normalizer
    out[0] = (static_cast<float>(a.dtheta) - traj_mean.at2(0, 0)) / traj_std.at2(0, 0);
    out[1] = (static_cast<float>(a.dx) - traj_mean.at2(0, 1)) / traj_std.at2(0, 1);
    out[2] = (static_cast<float>(a.dy) - traj_mean.at2(0, 2)) / traj_std.at2(0, 2);
}

namespace {

nlohmann::json wm_config_json(const WmConfig& c) {
    return nlohmann::json{{"mst_d", c.mst.d},
                          {"mst_heads", c.mst.heads},
                          {"mst_pairs", c.mst.pairs},
                          {"t_max", c.mst.t_max},
                          {"traj_d", c.traj.d},
                          {"traj_heads", c.traj.heads},
                          {"traj_dual", c.traj.dual_blocks},
                          {"traj_single", c.traj.single_blocks},
                          {"vis_d", c.vis.d},
                          {"vis_heads", c.vis.heads},
                          {"vis_dual", c.vis.dual_blocks},
                          {"vis_single", c.vis.single_blocks},
                          {"horizon", c.horizon},
                          {"latent_h", c.latent_h},
                          {"latent_w", c.latent_w},
                          {"c_latent", c.c_latent}};
}

WmConfig wm_config_from_json(const nlohmann::json& j) {
    WmConfig c;
    c.mst.d = j.at("mst_d");
    c.mst.heads = j.at("mst_heads");
    c.mst.pairs = j.at("mst_pairs");
    c.mst.t_max = j.at("t_max");
    c.traj.d = j.at("traj_d");
    c.traj.heads = j.at("traj_heads");
    c.traj.dual_blocks = j.at("traj_dual");
    c.traj.single_blocks = j.at("traj_single");
    c.vis.d = j.at("vis_d");
    c.vis.heads = j.at("vis_heads");
    c.vis.dual_blocks = j.at("vis_dual");
    c.vis.single_blocks = j.at("vis_single");
    c.horizon = j.at("horizon");
    c.latent_h = j.at("latent_h");
    c.latent_w = j.at("latent_w");
    c.c_latent = j.at("c_latent");
    c.finalize();
    return c;
}

}  // namespace

io::Container WorldModel::to_container() const {
    io::Container c;
    c.tensors = ps.dump();
    c.tensors.emplace("traj_norm.mean", traj_mean);
    c.tensors.emplace("traj_norm.std", traj_std);
    c.meta["kind"] = "world_model";
    c.meta["config"] = wm_config_json(cfg);
    return c;
}

WorldModel WorldModel::from_container(const io::Container& c) {
    WorldModel m(wm_config_from_json(c.meta.at("config")), 0);
    m.ps.load(c.tensors, /*allow_partial=*/true);
    m.traj_mean = c.tensors.at("traj_norm.mean");
    m.traj_std = c.tensors.at("traj_norm.std");
    return m;
}

LatentDataset encode_dataset(const codec::Codec& codec, const std::vector<sim::Episode>& episodes) {
    if (episodes.empty()) throw std::invalid_argument("encode_dataset: empty dataset");
    LatentDataset out;
    for (const auto& ep : episodes) {
        LatentEpisode le;
        Tensor z = codec.encode_frames(ep.frames);  // [T, h, w, C]
        out.h = z.shape[1];
        out.w = z.shape[2];
        out.c = z.shape[3];
        z.shape = {z.shape[0], z.shape[1] * z.shape[2], z.shape[3]};
        le.latents = std::move(z);
        le.actions = ep.actions;
        le.actions_raw = Tensor({static_cast<int>(ep.actions.size()), 3});
        for (size_t i = 0; i < ep.actions.size(); ++i) {
            le.actions_raw.at2(static_cast<int>(i), 0) = static_cast<float>(ep.actions[i].dtheta);
            le.actions_raw.at2(static_cast<int>(i), 1) = static_cast<float>(ep.actions[i].dx);
            le.actions_raw.at2(static_cast<int>(i), 2) = static_cast<float>(ep.actions[i].dy);
        }
        out.eps.push_back(std::move(le));
    }
    return out;
}

void fit_traj_norm(WorldModel& model, const LatentDataset& data) {
    const int n = model.cfg.horizon;
    std::vector<double> sum(n * 3, 0.0), sumsq(n * 3, 0.0);
    int64_t count = 0;
    for (const auto& ep : data.eps) {
        const int len = static_cast<int>(ep.actions.size());
        for (int first = 1; first + n <= len; ++first) {
            sim::Trajectory tr = sim::trajectory_from_actions(ep.actions, first, n);
            for (int i = 0; i < n; ++i) {
                const double raw[3] = {tr.rows[i].dtheta, tr.rows[i].dx, tr.rows[i].dy};
                for (int j = 0; j < 3; ++j) {
                    sum[i * 3 + j] += raw[j];
                    sumsq[i * 3 + j] += raw[j] * raw[j];
                }
            }
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("fit_traj_norm: dataset episodes shorter than horizon");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) {
            const double mean = sum[i * 3 + j] / static_cast<double>(count);
            const double var = sumsq[i * 3 + j] / static_cast<double>(count) - mean * mean;
            model.traj_mean.at2(i, j) = static_cast<float>(mean);
            model.traj_std.at2(i, j) = static_cast<float>(std::max(std::sqrt(std::max(var, 0.0)), 0.02));
        }
}

void TrainConfig::validate() const {
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (total_steps < 1) throw std::invalid_argument("train config: total_steps must be >= 1");
    if (cof_period < 1) throw std::invalid_argument("train config: cof_period must be >= 1");
    if (cof_enabled && cof_passes < 2)
        throw std::invalid_argument("train config: cof_passes must be >= 2 when chain-of-forward is enabled");
    if (ctx_min < 1 || ctx_max < ctx_min) throw std::invalid_argument("train config: bad context range");
}

Trainer::Trainer(WorldModel& m, LatentDataset& d, const TrainConfig& c)
    : model(m), data(d), cfg(c), rng(Rng(c.seed).fork("trainer")) {
    cfg.validate();
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
}

BatchItem Trainer::sample_item(int passes) {
    const int n = model.cfg.horizon;
    const int t_ctx = rng.uniform_int(cfg.ctx_min, cfg.ctx_max);
    // need t0 + t_ctx + (passes - 1) + n <= len
    for (int attempt = 0; attempt < 64; ++attempt) {
        const int e = rng.uniform_int(0, static_cast<int>(data.eps.size()) - 1);
        const LatentEpisode& ep = data.eps[e];
        const int len = ep.latents.shape[0];
        const int t0_max = len - t_ctx - (passes - 1) - n;
        if (t0_max < 0) continue;
        const int t0 = rng.uniform_int(0, t0_max);

        BatchItem item;
        const int l = data.l(), c = data.c;
        item.ctx_latents = Tensor({t_ctx, l, c});
        const int64_t per = static_cast<int64_t>(l) * c;
        std::copy(ep.latents.data.begin() + t0 * per, ep.latents.data.begin() + (t0 + t_ctx) * per,
                  item.ctx_latents.data.begin());
        item.ctx_actions = Tensor({t_ctx, 3});
        for (int i = 0; i < t_ctx; ++i)
            for (int j = 0; j < 3; ++j) item.ctx_actions.at2(i, j) = ep.actions_raw.at2(t0 + i, j);

        for (int j = 1; j <= passes; ++j) {
            const int tgt = t0 + t_ctx + j - 1;
            Tensor lat({data.h, data.w, c});
            std::copy(ep.latents.data.begin() + tgt * per, ep.latents.data.begin() + (tgt + 1) * per,
                      lat.data.begin());
            item.tgt_latent.push_back(std::move(lat));
            item.tgt_traj.push_back(
                model.normalize_traj(sim::trajectory_from_actions(ep.actions, tgt, n)));
            item.next_action.push_back(ep.actions[tgt]);
        }
        return item;
    }
    throw std::invalid_argument("trainer: episodes too short for context + chain-of-forward + horizon");
}

std::vector<BatchItem> Trainer::sample_batch(int passes) {
    std::vector<BatchItem> items;
    for (int b = 0; b < cfg.batch; ++b) items.push_back(sample_item(passes));
    return items;
}

StepLosses Trainer::run_step(const std::vector<BatchItem>& items, int passes, CofDiag* diag) {
    if (items.empty()) throw std::invalid_argument("trainer: empty batch");
    const int l = data.l(), c = data.c;
    const int t_max = model.cfg.mst.t_max;
    model.ps.zero_grad();

    std::vector<ag::Var> traj_losses, vis_losses;
    if (diag) {
        diag->passes.clear();
        diag->probe = ag::param(Tensor::full({l, c}, 1.0f));
    }

    for (const auto& item : items) {
        if (static_cast<int>(item.tgt_latent.size()) < passes)
            throw std::invalid_argument("trainer: batch item lacks future targets for requested passes");
        // rolling context as flat token rows
        std::vector<Tensor> ctx_lat;
        std::vector<std::array<float, 3>> ctx_act;
        std::vector<bool> ctx_self;
        const int t_ctx = item.ctx_latents.shape[0];
        const int64_t per = static_cast<int64_t>(l) * c;
        for (int i = 0; i < t_ctx; ++i) {
            Tensor z({l, c});
            std::copy(item.ctx_latents.data.begin() + i * per, item.ctx_latents.data.begin() + (i + 1) * per,
                      z.data.begin());
            ctx_lat.push_back(std::move(z));
            ctx_act.push_back({item.ctx_actions.at2(i, 0), item.ctx_actions.at2(i, 1),
                               item.ctx_actions.at2(i, 2)});
            ctx_self.push_back(false);
        }

        for (int j = 0; j < passes; ++j) {
            const int from = std::max(0, static_cast<int>(ctx_lat.size()) - t_max);
            const int t_cur = static_cast<int>(ctx_lat.size()) - from;
            Tensor lat({t_cur, l, c}), act({t_cur, 3});
            int self_frames = 0;
            for (int i = 0; i < t_cur; ++i) {
                std::copy(ctx_lat[from + i].data.begin(), ctx_lat[from + i].data.end(),
                          lat.data.begin() + static_cast<int64_t>(i) * per);
                for (int k = 0; k < 3; ++k) act.at2(i, k) = ctx_act[from + i][k];
                if (ctx_self[from + i]) ++self_frames;
            }

            ag::Var f = model.encode_context(lat, act);

            // trajectory head
            const float t_tr = static_cast<float>(rng.uniform());
            Tensor eps_tr = flow::sample_noise({model.cfg.horizon, 3}, rng);
            Tensor xt_tr = flow::add_noise(item.tgt_traj[j], eps_tr, t_tr);
            ag::Var v_tr;
            if (stub_perfect_heads) {
                v_tr = ag::constant(flow::velocity_target(item.tgt_traj[j], eps_tr));
            } else {
                v_tr = model.traj_velocity(xt_tr, t_tr, f);
            }
            traj_losses.push_back(ag::mse_loss(v_tr, flow::velocity_target(item.tgt_traj[j], eps_tr)));

            // next-frame head
            const float t_v = static_cast<float>(rng.uniform());
            Tensor eps_v = flow::sample_noise({data.h, data.w, c}, rng);
            Tensor xt_v = flow::add_noise(item.tgt_latent[j], eps_v, t_v);
            ag::Var v_v;
            if (stub_perfect_heads) {
                v_v = ag::constant(flow::velocity_target(item.tgt_latent[j], eps_v));
            } else {
                v_v = model.vis_velocity(xt_v, t_v, f, item.next_action[j]);
            }
            vis_losses.push_back(ag::mse_loss(v_v, flow::velocity_target(item.tgt_latent[j], eps_v)));

            if (j + 1 < passes) {
                // one-step denoised estimate, appended to the context with the
                // graph edge severed (gradients stop at the estimate)
                Tensor appended;
                if (diag) {
                    Tensor xt_flat = xt_v;
                    xt_flat.shape = {l, c};
                    ag::Var est = ag::add(ag::constant(xt_flat),
                                          ag::scale(ag::reshape(v_v, {l, c}), t_v));
                    est = ag::mul(est, diag->probe);
                    appended = est->val;
                    CofDiag::Pass p;
                    p.context_len = t_cur;
                    p.self_frames = self_frames;
                    p.xt_vis = xt_v;
                    p.t_vis = t_v;
                    p.v_vis = v_v->val;
                    p.appended = appended;
                    diag->passes.push_back(std::move(p));
                } else {
                    appended = flow::one_step_estimate(xt_v, t_v, v_v->val);
                    appended.shape = {l, c};
                }
                ctx_lat.push_back(appended);
                ctx_act.push_back({static_cast<float>(item.next_action[j].dtheta),
                                   static_cast<float>(item.next_action[j].dx),
                                   static_cast<float>(item.next_action[j].dy)});
                ctx_self.push_back(true);
            } else if (diag) {
                CofDiag::Pass p;
                p.context_len = t_cur;
                p.self_frames = self_frames;
                diag->passes.push_back(std::move(p));
            }
        }
    }

    auto mean_of = [](const std::vector<ag::Var>& xs) {
        double acc = 0;
        for (const auto& x : xs) acc += x->val.data[0];
        return static_cast<float>(acc / static_cast<double>(xs.size()));
    };
    StepLosses out;
    out.l_traj = mean_of(traj_losses);
    out.l_vis = mean_of(vis_losses);
    out.total = out.l_traj + out.l_vis;

    ag::Var loss = ag::add(traj_losses[0], vis_losses[0]);
    for (size_t i = 1; i < traj_losses.size(); ++i)
        loss = ag::add(loss, ag::add(traj_losses[i], vis_losses[i]));
    loss = ag::scale(loss, 1.0f / static_cast<float>(traj_losses.size()));
    ag::backward(loss);
    opt.step(model.ps);
    return out;
}

StepLosses Trainer::teacher_forcing_step(const std::vector<BatchItem>& items) {
    return run_step(items, 1, nullptr);
}

StepLosses Trainer::chain_of_forward_step(const std::vector<BatchItem>& items, CofDiag* diag) {
    return run_step(items, cfg.cof_passes, diag);
}

const std::vector<LossRow>& Trainer::train(const std::string& checkpoint_path,
                                           const std::string& loss_csv_path) {
    for (int s = 0; s < cfg.total_steps; ++s) {
        step_index = s;
        const bool cof = cfg.cof_enabled && (s % cfg.cof_period == 0);
        const int passes = cof ? cfg.cof_passes : 1;
        std::vector<BatchItem> items = sample_batch(cfg.cof_passes);  // fixed draw count per step
        StepLosses losses = run_step(items, passes, nullptr);
        history.push_back({s, losses.l_traj, losses.l_vis, losses.total, cof});
        if (cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 && !checkpoint_path.empty())
            save_train_state(checkpoint_path, model, opt, s + 1, history);
    }
    if (!checkpoint_path.empty()) save_train_state(checkpoint_path, model, opt, cfg.total_steps, history);
    if (!loss_csv_path.empty()) write_loss_csv(loss_csv_path, history);
    return history;
}

void save_train_state(const std::string& path, const WorldModel& model, const nn::AdamW& opt,
                      int step_index, const std::vector<LossRow>& history) {
    io::Container c = model.to_container();
    for (auto& [k, t] : opt.dump_state()) c.tensors.emplace(k, t);
    c.meta["step_index"] = step_index;
    c.meta["opt_t"] = opt.t;
    c.meta["opt_lr"] = opt.lr;
    c.meta["opt_weight_decay"] = opt.weight_decay;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& row : history)
        hist.push_back({row.step, row.l_traj, row.l_vis, row.total, row.cof});
    c.meta["history"] = hist;
    io::save_container(path, c);
}

TrainState load_train_state(const std::string& path) {
    io::Container c = io::load_container(path);
    TrainState st{WorldModel::from_container(c), nn::AdamW{}, 0, {}};
    st.opt.load_state(c.tensors);
    st.opt.t = c.meta.value("opt_t", 0);
    st.opt.lr = c.meta.value("opt_lr", 1e-4f);
    st.opt.weight_decay = c.meta.value("opt_weight_decay", 0.0f);
    st.step_index = c.meta.value("step_index", 0);
    if (c.meta.contains("history"))
        for (const auto& row : c.meta["history"])
            st.history.push_back({row[0], row[1], row[2], row[3], row[4]});
    return st;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& history) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("trainer: cannot write loss csv: " + path);
    f << "step,l_traj,l_vis,total,cof_flag\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%d\n", row.step, row.l_traj, row.l_vis,
                      row.total, row.cof ? 1 : 0);
        f << buf;
    }
}

}  // namespace wm::train
