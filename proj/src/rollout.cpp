#include "wm/rollout.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "wm/rectflow.hpp"

namespace wm::roll {

namespace {
using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}
}  // namespace

Mode mode_from_string(const std::string& s) {
    if (s == "full") return Mode::full;
    if (s == "video") return Mode::video;
    if (s == "plan") return Mode::plan;
    throw std::invalid_argument("unknown rollout mode: " + s + " (expected full|video|plan)");
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::video: return "video";
        default: return "plan";
    }
}

void ContextBuf::push(Tensor lat, const sim::Action& a, int t_max) {
    latents.push_back(std::move(lat));
    actions.push_back(a);
    while (static_cast<int>(latents.size()) > t_max) {
        latents.erase(latents.begin());
        actions.erase(actions.begin());
    }
}

ContextBuf context_from_episode(const train::WorldModel& model, const codec::Codec& codec,
                                const sim::Episode& ep, int prefix_len) {
    if (prefix_len < 1 || prefix_len > static_cast<int>(ep.frames.size()))
        throw std::invalid_argument("context_from_episode: bad prefix length");
    std::vector<sim::Frame> frames(ep.frames.begin(), ep.frames.begin() + prefix_len);
    Tensor z = codec.encode_frames(frames);  // [T, h, w, C]
    const int l = z.shape[1] * z.shape[2], c = z.shape[3];
    ContextBuf ctx;
    const int64_t per = static_cast<int64_t>(l) * c;
    for (int t = 0; t < prefix_len; ++t) {
        Tensor row({l, c});
        std::copy(z.data.begin() + t * per, z.data.begin() + (t + 1) * per, row.data.begin());
        ctx.push(std::move(row), ep.actions[t], model.cfg.mst.t_max);
    }
    return ctx;
}

ContextBuf context_from_latents(const Tensor& latents, const std::vector<sim::Action>& actions, int t_max) {
    if (latents.rank() != 3 || latents.shape[0] != static_cast<int>(actions.size()))
        throw std::invalid_argument("context_from_latents: shape mismatch");
    ContextBuf ctx;
    const int l = latents.shape[1], c = latents.shape[2];
    const int64_t per = static_cast<int64_t>(l) * c;
    for (int t = 0; t < latents.shape[0]; ++t) {
        Tensor row({l, c});
        std::copy(latents.data.begin() + t * per, latents.data.begin() + (t + 1) * per, row.data.begin());
        ctx.push(std::move(row), actions[t], t_max);
    }
    return ctx;
}

namespace {

// Assembles [T, L, C] and [T, 3] tensors from the buffer.
void context_tensors(const ContextBuf& ctx, int l, int c, Tensor& lat, Tensor& act) {
    const int t = ctx.size();
    lat = Tensor({t, l, c});
    act = Tensor({t, 3});
    const int64_t per = static_cast<int64_t>(l) * c;
    for (int i = 0; i < t; ++i) {
        std::copy(ctx.latents[i].data.begin(), ctx.latents[i].data.end(),
                  lat.data.begin() + static_cast<int64_t>(i) * per);
        act.at2(i, 0) = static_cast<float>(ctx.actions[i].dtheta);
        act.at2(i, 1) = static_cast<float>(ctx.actions[i].dx);
        act.at2(i, 2) = static_cast<float>(ctx.actions[i].dy);
    }
}

}  // namespace

sim::Trajectory plan(const train::WorldModel& model, const ContextBuf& ctx, int sampler_steps,
                     uint64_t seed, PlanTiming* timing) {
    if (ctx.size() < 1) throw std::invalid_argument("plan: empty context");
    const auto t_total = Clock::now();
    Tensor lat, act;
    context_tensors(ctx, model.l_tokens(), model.cfg.c_latent, lat, act);

    const auto t_mst = Clock::now();
    ag::Var f = model.encode_context(lat, act);
    const double mst_s = seconds_since(t_mst);

    Rng rng = Rng(seed).fork("plan_sampler");
    const auto t_samp = Clock::now();
    Tensor rows = flow::euler_sample(
        [&](const Tensor& x, float t) { return model.traj_velocity(x, t, f)->val; },
        {model.cfg.horizon, 3}, sampler_steps, rng);
    const double sampler_s = seconds_since(t_samp);

    if (timing) {
        timing->mst_s = mst_s;
        timing->sampler_s = sampler_s;
        timing->total_s = seconds_since(t_total);
    }
    return model.denormalize_traj(rows);
}

sim::Trajectory constant_velocity_plan(const ContextBuf& ctx, int horizon) {
    if (ctx.size() < 1) throw std::invalid_argument("constant_velocity_plan: empty context");
    const sim::Action last = ctx.actions.back();
    sim::Trajectory tr;
    sim::Action acc{};
    for (int i = 0; i < horizon; ++i) {
        acc = sim::se2_compose(acc, last);
        tr.rows.push_back(acc);
    }
    return tr;
}

RolloutResult rollout(const train::WorldModel& model, const codec::Codec& codec, ContextBuf ctx,
                      const RolloutRequest& req) {
    if (req.mode == Mode::video && req.external_actions == nullptr)
        throw std::invalid_argument("rollout: video mode requires external actions");
    if (req.mode != Mode::plan && req.horizon < 1)
        throw std::invalid_argument("rollout: horizon must be >= 1");
    if (req.mode == Mode::video &&
        static_cast<int>(req.external_actions->size()) < req.horizon)
        throw std::invalid_argument("rollout: not enough external actions for the horizon");
    if (ctx.size() < 1) throw std::invalid_argument("rollout: empty context");

    const int l = model.l_tokens(), c = model.cfg.c_latent;
    const int h = model.cfg.latent_h, w = model.cfg.latent_w;
    const int t_max = model.cfg.mst.t_max;

    RolloutResult res;
    Rng rng = Rng(req.seed).fork("rollout");

    if (req.mode == Mode::plan) {
        PlanTiming pt;
        sim::Trajectory tr = plan(model, ctx, req.sampler_steps, rng.next_u64(), &pt);
        res.plans.push_back(tr);
        StepTiming st;
        st.mst_s = pt.mst_s;
        st.traj_sampler_s = pt.sampler_s;
        res.timings.push_back(st);
        res.window_sizes.push_back(ctx.size());
        res.trajdit_calls += req.sampler_steps;
        return res;
    }

    res.latents = Tensor({req.horizon, h, w, c});
    const int64_t per = static_cast<int64_t>(l) * c;

    for (int stepi = 0; stepi < req.horizon; ++stepi) {
        StepTiming st;
        res.window_sizes.push_back(ctx.size());

        Tensor lat, act;
        context_tensors(ctx, l, c, lat, act);
        const auto t_mst = Clock::now();
        ag::Var f = model.encode_context(lat, act);
        st.mst_s = seconds_since(t_mst);

        sim::Action a_next;
        if (req.mode == Mode::full) {
            const auto t_tr = Clock::now();
            Tensor rows = flow::euler_sample(
                [&](const Tensor& x, float t) { return model.traj_velocity(x, t, f)->val; },
                {model.cfg.horizon, 3}, req.sampler_steps, rng);
            st.traj_sampler_s = seconds_since(t_tr);
            res.trajdit_calls += req.sampler_steps;
            sim::Trajectory tr = model.denormalize_traj(rows);
            res.plans.push_back(tr);
            a_next = tr.rows[0];  // a_{T -> T+1}
        } else {
            a_next = (*req.external_actions)[stepi];
        }
        res.chosen_actions.push_back(a_next);

        const auto t_vis = Clock::now();
        Tensor z_next = flow::euler_sample(
            [&](const Tensor& x, float t) { return model.vis_velocity(x, t, f, a_next)->val; },
            {h, w, c}, req.sampler_steps, rng);
        st.vis_sampler_s = seconds_since(t_vis);
        res.visdit_calls += req.sampler_steps;

        std::copy(z_next.data.begin(), z_next.data.end(),
                  res.latents.data.begin() + static_cast<int64_t>(stepi) * per);
        Tensor row = z_next;
        row.shape = {l, c};
        ctx.push(std::move(row), a_next, t_max);
        res.timings.push_back(st);
    }

    if (req.decode_frames) {
        const auto t_dec = Clock::now();
        res.frames_float = codec.decode_video(res.latents, req.use_temporal_decoder && codec.temporal_trained);
        res.decoder_calls += req.horizon;
        for (const auto& ff : res.frames_float) res.frames.push_back(codec::tensor_to_frame(ff));
        if (!res.timings.empty()) res.timings.back().decode_s = seconds_since(t_dec);
    }
    return res;
}

ProbePair make_signal_probe(uint64_t seed, int context_len, sim::WorldConfig cfg) {
    if (context_len < 2) throw std::invalid_argument("make_signal_probe: context_len must be >= 2");
    cfg.n_obstacles = 0;
    cfg.signal_period = 400;  // long phases so the color is constant across the probe
    Rng rng = Rng(seed).fork("probe");

    // forced approach: decelerate toward the signal, ending within stop range
    std::vector<sim::Action> sched;
    sched.push_back(sim::Action{});
    double v0 = rng.uniform(0.55, 0.75) * cfg.cruise_speed;
    double v1 = 0.3 * cfg.cruise_speed;
    for (int t = 1; t < context_len; ++t) {
        const double a = static_cast<double>(t - 1) / std::max(1, context_len - 2);
        const double v = v0 + (v1 - v0) * a;
        sched.push_back(sim::Action{0.0, static_cast<double>(static_cast<float>(v)), 0.0});
    }
    double travelled = 0;
    for (const auto& a : sched) travelled += a.dx;
    const double gap = rng.uniform(1.2, 2.4);  // final distance to the stop line

    auto build = [&](bool red) {
        sim::Episode ep;
        ep.seed = seed;
        ep.fps = cfg.fps;
        ep.height = cfg.height;
        ep.width = cfg.width;
        sim::WorldState s = sim::new_world(seed, cfg);
        s.ego_x = 0.0;
        s.ego_y = -cfg.lane_offset;
        s.ego_theta = 0.0;
        s.signal.base_x = travelled + gap;
        s.signal.phase = red ? 0 : cfg.signal_period / 2;
        s.signal.red = sim::signal_red_at(cfg, s.signal, 0);
        ep.states.push_back(s);
        ep.frames.push_back(sim::render(s));
        ep.actions.push_back(sim::Action{});
        for (int t = 1; t < context_len; ++t) {
            s = sim::step(s, sched[t]);
            ep.states.push_back(s);
            ep.frames.push_back(sim::render(s));
            ep.actions.push_back(sched[t]);
        }
        return ep;
    };

    ProbePair pair;
    pair.red_ep = build(true);
    pair.green_ep = build(false);
    return pair;
}

ComplianceResult signal_compliance(const train::WorldModel& model, const codec::Codec& codec,
                                   const std::vector<ProbePair>& probes, int sampler_steps,
                                   uint64_t seed) {
    ComplianceResult out;
    if (probes.empty()) return out;
    double red_acc = 0, green_acc = 0;
    for (size_t i = 0; i < probes.size(); ++i) {
        ContextBuf red_ctx = context_from_episode(model, codec, probes[i].red_ep,
                                                  static_cast<int>(probes[i].red_ep.frames.size()));
        ContextBuf green_ctx = context_from_episode(model, codec, probes[i].green_ep,
                                                    static_cast<int>(probes[i].green_ep.frames.size()));
        sim::Trajectory red_tr = plan(model, red_ctx, sampler_steps, seed + 2 * i, nullptr);
        sim::Trajectory green_tr = plan(model, green_ctx, sampler_steps, seed + 2 * i + 1, nullptr);
        red_acc += red_tr.rows[0].dx;
        green_acc += green_tr.rows[0].dx;
    }
    out.red_mean = red_acc / static_cast<double>(probes.size());
    out.green_mean = green_acc / static_cast<double>(probes.size());
    return out;
}

}  // namespace wm::roll
