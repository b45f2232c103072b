// Command-line surface: data generation, training stages, rollout, planning,
// evaluation and plot emission. Exit codes: 0 success, 2 argument/config
// error, 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "bmp.hpp"
#include "wm/codec.hpp"
#include "wm/config.hpp"
#include "wm/manifest.hpp"
#include "wm/metrics.hpp"
#include "wm/rectflow.hpp"
#include "wm/rollout.hpp"
#include "wm/trainer.hpp"
#include "wm/worldsim.hpp"

namespace fs = std::filesystem;
using namespace wm;

namespace {

sim::WorldConfig world_config_from(const KvConfig& cfg) {
    sim::WorldConfig w;
    w.height = cfg.get_int("world", "height", w.height);
    w.width = cfg.get_int("world", "width", w.width);
    w.view_span = cfg.get_num("world", "view_span", w.view_span);
    w.road_half_width = cfg.get_num("world", "road_half_width", w.road_half_width);
    w.lane_offset = cfg.get_num("world", "lane_offset", w.lane_offset);
    w.n_obstacles = cfg.get_int("world", "n_obstacles", w.n_obstacles);
    w.corridor_len = cfg.get_num("world", "corridor_len", w.corridor_len);
    w.signal_spacing = cfg.get_num("world", "signal_spacing", w.signal_spacing);
    w.signal_period = cfg.get_int("world", "signal_period", w.signal_period);
    w.d_stop = cfg.get_num("world", "d_stop", w.d_stop);
    w.cruise_speed = cfg.get_num("world", "cruise_speed", w.cruise_speed);
    w.accel_max = cfg.get_num("world", "accel_max", w.accel_max);
    w.ego_radius = cfg.get_num("world", "ego_radius", w.ego_radius);
    w.fps = cfg.get_num("world", "fps", w.fps);
    return w;
}

codec::CodecConfig codec_config_from(const KvConfig& cfg) {
    codec::CodecConfig c;
    c.f = cfg.get_int("codec", "f", c.f);
    c.c_latent = cfg.get_int("codec", "c_latent", c.c_latent);
    c.base = cfg.get_int("codec", "base", c.base);
    c.temporal_window = cfg.get_int("codec", "temporal_window", c.temporal_window);
    c.d_temporal = cfg.get_int("codec", "d_temporal", c.d_temporal);
    c.temporal_layers = cfg.get_int("codec", "temporal_layers", c.temporal_layers);
    c.temporal_heads = cfg.get_int("codec", "temporal_heads", c.temporal_heads);
    return c;
}

train::WmConfig wm_config_from(const KvConfig& cfg, int image_h, int image_w,
                               const codec::CodecConfig& cc) {
    train::WmConfig c;
    c.mst.d = cfg.get_int("mst", "d", 256);
    c.mst.heads = cfg.get_int("mst", "heads", 8);
    c.mst.pairs = cfg.get_int("mst", "pairs", 6);
    c.mst.t_max = cfg.get_int("mst", "t_max", 10);
    c.traj.d = cfg.get_int("trajdit", "d", 96);
    c.traj.heads = cfg.get_int("trajdit", "heads", 4);
    c.traj.dual_blocks = cfg.get_int("trajdit", "dual_blocks", 1);
    c.traj.single_blocks = cfg.get_int("trajdit", "single_blocks", 1);
    c.vis.d = cfg.get_int("visdit", "d", 256);
    c.vis.heads = cfg.get_int("visdit", "heads", 8);
    c.vis.dual_blocks = cfg.get_int("visdit", "dual_blocks", 2);
    c.vis.single_blocks = cfg.get_int("visdit", "single_blocks", 4);
    c.horizon = cfg.get_int("trainer", "horizon", 6);
    c.latent_h = image_h / cc.f;
    c.latent_w = image_w / cc.f;
    c.c_latent = cc.c_latent;
    c.finalize();
    return c;
}

train::TrainConfig train_config_from(const KvConfig& cfg) {
    train::TrainConfig t;
    t.total_steps = cfg.get_int("trainer", "total_steps");  // required
    t.batch = cfg.get_int("trainer", "batch", t.batch);
    t.lr = static_cast<float>(cfg.get_num("trainer", "lr", t.lr));
    t.weight_decay = static_cast<float>(cfg.get_num("trainer", "weight_decay", t.weight_decay));
    t.cof_period = cfg.get_int("trainer", "cof_period", t.cof_period);
    t.cof_passes = cfg.get_int("trainer", "cof_passes", t.cof_passes);
    t.cof_enabled = cfg.get_bool("trainer", "cof_enabled", t.cof_enabled);
    t.seed = cfg.get_u64("trainer", "seed", t.seed);
    t.deterministic = cfg.get_bool("trainer", "deterministic", t.deterministic);
    t.ctx_min = cfg.get_int("trainer", "ctx_min", t.ctx_min);
    t.ctx_max = cfg.get_int("trainer", "ctx_max", t.ctx_max);
    t.checkpoint_every = cfg.get_int("trainer", "checkpoint_every", t.checkpoint_every);
    return t;
}

codec::Codec load_codec(const std::string& path) {
    return codec::Codec::from_container(io::load_container(path));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write: " + path);
    f << text;
}

void write_curve_csv(const std::string& path, const std::vector<float>& curve) {
    std::ostringstream csv;
    csv << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, curve[i]);
        csv << buf;
    }
    write_text(path, csv.str());
}

// ---------------------------------------------------------------------------
// generate-data
// ---------------------------------------------------------------------------

struct GenArgs {
    int episodes = 8;
    int length = 64;
    uint64_t seed = 0;
    std::string out;
    std::string policy = "scripted";
    std::string config_path;
    int height = 0, width = 0;
};

void cmd_generate_data(const GenArgs& a) {
    KvConfig cfg = a.config_path.empty() ? KvConfig{} : KvConfig::parse_file(a.config_path);
    sim::WorldConfig wc = world_config_from(cfg);
    if (a.height > 0) wc.height = a.height;
    if (a.width > 0) wc.width = a.width;
    const sim::Policy policy = sim::policy_from_string(a.policy);

    std::vector<sim::Episode> eps;
    for (int i = 0; i < a.episodes; ++i)
        eps.push_back(sim::generate_episode(Rng(a.seed).fork("episode", i).seed(), a.length, policy, wc));
    sim::write_dataset(eps, a.out);
    append_run_manifest(a.out,
                        make_run_record("generate-data", a.config_path, cfg.dump(), a.seed, a.out));
    std::cout << "wrote " << a.episodes << " episodes of " << a.length << " frames to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::string data;
    std::string out;
    std::string stage = "world";
    std::string codec_path;
};

void cmd_train(const TrainArgs& a) {
    KvConfig cfg = KvConfig::parse_file(a.config_path);
    fs::create_directories(a.out);
    std::vector<sim::Episode> eps = sim::read_dataset(a.data);
    if (eps.empty()) throw std::invalid_argument("train: dataset is empty");

    if (a.stage == "codec") {
        codec::CodecConfig cc = codec_config_from(cfg);
        codec::TrainOpts opts;
        opts.steps = cfg.get_int("codec", "steps");  // required
        opts.batch = cfg.get_int("codec", "batch", opts.batch);
        opts.lr = static_cast<float>(cfg.get_num("codec", "lr", opts.lr));
        const uint64_t seed = cfg.get_u64("codec", "seed", 0);
        codec::Codec codec(cc, seed);
        std::vector<float> curve = codec.train(eps, opts, seed);
        io::save_container((fs::path(a.out) / "codec.ntc").string(), codec.to_container());
        write_curve_csv((fs::path(a.out) / "codec_loss.csv").string(), curve);
        std::cout << "codec: initial loss " << curve.front() << ", final loss " << curve.back() << "\n";
    } else if (a.stage == "decoder") {
        if (a.codec_path.empty())
            throw std::invalid_argument("train: --codec is required for stage decoder");
        codec::Codec codec = load_codec(a.codec_path);
        codec::FinetuneOpts opts;
        opts.steps = cfg.get_int("decoder", "steps");  // required
        opts.batch = cfg.get_int("decoder", "batch", opts.batch);
        opts.lr = static_cast<float>(cfg.get_num("decoder", "lr", opts.lr));
        opts.latent_noise = static_cast<float>(cfg.get_num("decoder", "latent_noise", opts.latent_noise));
        const uint64_t seed = cfg.get_u64("decoder", "seed", 0);
        std::vector<float> curve = codec.finetune_temporal(eps, opts, seed);
        io::save_container((fs::path(a.out) / "codec.ntc").string(), codec.to_container());
        write_curve_csv((fs::path(a.out) / "decoder_loss.csv").string(), curve);
        std::cout << "decoder: fine-tuned temporal module, final loss " << curve.back() << "\n";
    } else if (a.stage == "world") {
        if (a.codec_path.empty())
            throw std::invalid_argument("train: --codec is required for stage world");
        codec::Codec codec = load_codec(a.codec_path);
        train::LatentDataset data = train::encode_dataset(codec, eps);
        train::WmConfig wc = wm_config_from(cfg, eps[0].height, eps[0].width, codec.cfg);
        train::TrainConfig tc = train_config_from(cfg);
        train::WorldModel model(wc, tc.seed);
        train::fit_traj_norm(model, data);
        train::Trainer trainer(model, data, tc);
        trainer.train((fs::path(a.out) / "model.ntc").string(), (fs::path(a.out) / "loss.csv").string());
        std::cout << "world model: " << tc.total_steps << " steps, final total loss "
                  << trainer.history.back().total << "\n";
    } else {
        throw std::invalid_argument("train: unknown stage " + a.stage + " (expected codec|decoder|world)");
    }
    append_run_manifest(a.out, make_run_record("train --stage " + a.stage, a.config_path, cfg.dump(),
                                               cfg.get_u64("trainer", "seed", 0), a.out));
}

// ---------------------------------------------------------------------------
// rollout / plan
// ---------------------------------------------------------------------------

struct RolloutArgs {
    std::string model_path, codec_path, data, out;
    int episode = 0;
    int context = 10;
    std::string mode = "full";
    int horizon = 10;
    int steps = 100;
    uint64_t seed = 0;
    bool temporal_decoder = false;
};

void write_plans_csv(const std::string& path, const std::vector<sim::Trajectory>& plans) {
    std::ostringstream csv;
    csv << "step,row,dtheta,dx,dy\n";
    for (size_t s = 0; s < plans.size(); ++s)
        for (size_t r = 0; r < plans[s].rows.size(); ++r) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g\n", s, r, plans[s].rows[r].dtheta,
                          plans[s].rows[r].dx, plans[s].rows[r].dy);
            csv << buf;
        }
    write_text(path, csv.str());
}

void write_timings_csv(const std::string& path, const roll::RolloutResult& res) {
    std::ostringstream csv;
    csv << "step,window,mst_s,traj_sampler_s,vis_sampler_s,decode_s\n";
    for (size_t s = 0; s < res.timings.size(); ++s) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%.6f,%.6f,%.6f\n", s, res.window_sizes[s],
                      res.timings[s].mst_s, res.timings[s].traj_sampler_s, res.timings[s].vis_sampler_s,
                      res.timings[s].decode_s);
        csv << buf;
    }
    write_text(path, csv.str());
}

void cmd_rollout(const RolloutArgs& a) {
    train::WorldModel model = train::WorldModel::from_container(io::load_container(a.model_path));
    codec::Codec codec = load_codec(a.codec_path);
    std::vector<sim::Episode> eps = sim::read_dataset(a.data);
    if (a.episode < 0 || a.episode >= static_cast<int>(eps.size()))
        throw std::invalid_argument("rollout: episode index out of range");
    const sim::Episode& ep = eps[a.episode];

    roll::RolloutRequest req;
    req.mode = roll::mode_from_string(a.mode);
    req.horizon = a.horizon;
    req.sampler_steps = a.steps;
    req.seed = a.seed;
    req.use_temporal_decoder = a.temporal_decoder;
    std::vector<sim::Action> external;
    if (req.mode == roll::Mode::video) {
        if (a.context + a.horizon > static_cast<int>(ep.actions.size()))
            throw std::invalid_argument("rollout: episode too short for context + horizon");
        external.assign(ep.actions.begin() + a.context, ep.actions.begin() + a.context + a.horizon);
        req.external_actions = &external;
    }

    roll::ContextBuf ctx = roll::context_from_episode(model, codec, ep, a.context);
    roll::RolloutResult res = roll::rollout(model, codec, ctx, req);

    fs::create_directories(a.out);
    if (!res.frames.empty()) {
        sim::Episode out_ep;
        out_ep.frames = res.frames;
        out_ep.actions.assign(res.frames.size(), sim::Action{});
        for (size_t i = 0; i < res.chosen_actions.size() && i < out_ep.actions.size(); ++i)
            out_ep.actions[i] = res.chosen_actions[i];
        out_ep.states.assign(res.frames.size(), ep.states[0]);
        out_ep.height = res.frames[0].height;
        out_ep.width = res.frames[0].width;
        out_ep.fps = ep.fps;
        out_ep.seed = a.seed;
        sim::write_dataset({out_ep}, (fs::path(a.out) / "generated").string());
    }
    write_plans_csv((fs::path(a.out) / "plans.csv").string(), res.plans);
    write_timings_csv((fs::path(a.out) / "timings.csv").string(), res);
    nlohmann::json counters{{"visdit_calls", res.visdit_calls},
                            {"trajdit_calls", res.trajdit_calls},
                            {"decoder_calls", res.decoder_calls}};
    write_text((fs::path(a.out) / "counters.json").string(), counters.dump(1) + "\n");
    append_run_manifest(a.out, make_run_record("rollout --mode " + a.mode, "", "", a.seed, a.out));
    std::cout << "rollout: mode " << a.mode << ", visdit_calls " << res.visdit_calls
              << ", decoder_calls " << res.decoder_calls << "\n";
}

struct PlanArgs {
    std::string model_path, codec_path, data, out;
    int episode = 0;
    int context = 10;
    std::vector<int> steps{100};
    uint64_t seed = 0;
};

void cmd_plan(const PlanArgs& a) {
    train::WorldModel model = train::WorldModel::from_container(io::load_container(a.model_path));
    codec::Codec codec = load_codec(a.codec_path);
    std::vector<sim::Episode> eps = sim::read_dataset(a.data);
    if (a.episode < 0 || a.episode >= static_cast<int>(eps.size()))
        throw std::invalid_argument("plan: episode index out of range");
    roll::ContextBuf ctx = roll::context_from_episode(model, codec, eps[a.episode], a.context);

    fs::create_directories(a.out);
    std::ostringstream lat_csv;
    lat_csv << "sampler_steps,mst_s,traj_sampler_s,total_s\n";
    std::vector<sim::Trajectory> plans;
    for (int steps : a.steps) {
        roll::PlanTiming t;
        plans.push_back(roll::plan(model, ctx, steps, a.seed, &t));
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", steps, t.mst_s, t.sampler_s, t.total_s);
        lat_csv << buf;
    }
    write_plans_csv((fs::path(a.out) / "plan.csv").string(), {plans.back()});
    write_text((fs::path(a.out) / "latency.csv").string(), lat_csv.str());
    append_run_manifest(a.out, make_run_record("plan", "", "", a.seed, a.out));
    std::cout << "plan: emitted " << a.steps.size() << " latency rows to " << a.out << "/latency.csv\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string model_path, codec_path, data, out;
    std::string metrics = "l2,collision";
    std::string planner = "model";  // model | const | gt
    int scenes = 50;
    int context = 10;
    int steps = 50;
    int drift_horizon = 25;
    uint64_t seed = 0;
};

void cmd_eval(const EvalArgs& a) {
    codec::Codec codec = load_codec(a.codec_path);
    std::vector<sim::Episode> eps = sim::read_dataset(a.data);
    if (eps.empty()) throw std::invalid_argument("eval: dataset is empty");
    auto has = [&](const char* m) { return a.metrics.find(m) != std::string::npos; };
    std::unique_ptr<train::WorldModel> model;
    if (a.planner == "model" || has("drift") || has("compliance")) {
        if (a.model_path.empty()) throw std::invalid_argument("eval: --model required for these metrics");
        model = std::make_unique<train::WorldModel>(
            train::WorldModel::from_container(io::load_container(a.model_path)));
    }

    fs::create_directories(a.out);
    std::ostringstream summary;
    const double fps = eps[0].fps;
    const int n = model ? model->cfg.horizon : 6;
    const std::vector<double> horizons{1.0, 2.0, 3.0};

    if (has("l2") || has("collision")) {
        std::vector<sim::Trajectory> preds, gts;
        std::vector<std::vector<sim::WorldState>> slices;
        Rng rng = Rng(a.seed).fork("eval_scenes");
        int made = 0;
        std::ostringstream rows;
        rows << "scene,episode,t0,l2_1s,l2_2s,l2_3s,l2_avg\n";
        for (int attempt = 0; attempt < a.scenes * 20 && made < a.scenes; ++attempt) {
            const int e = rng.uniform_int(0, static_cast<int>(eps.size()) - 1);
            const sim::Episode& ep = eps[e];
            const int len = static_cast<int>(ep.frames.size());
            if (len < a.context + n + 1) continue;
            const int t0 = rng.uniform_int(0, len - a.context - n - 1);
            const int anchor = t0 + a.context - 1;
            sim::Trajectory gt = sim::trajectory_from_actions(ep.actions, anchor + 1, n);
            sim::Trajectory pred;
            if (a.planner == "gt") {
                pred = gt;
            } else {
                std::vector<sim::Frame> frames(ep.frames.begin() + t0, ep.frames.begin() + t0 + a.context);
                Tensor z = codec.encode_frames(frames);
                z.shape = {a.context, z.shape[1] * z.shape[2], z.shape[3]};
                std::vector<sim::Action> acts(ep.actions.begin() + t0, ep.actions.begin() + t0 + a.context);
                roll::ContextBuf ctx =
                    roll::context_from_latents(z, acts, model ? model->cfg.mst.t_max : a.context);
                pred = a.planner == "const" ? roll::constant_velocity_plan(ctx, n)
                                            : roll::plan(*model, ctx, a.steps, a.seed + made, nullptr);
            }
            metrics::L2Result l2 = metrics::traj_l2(pred, gt, horizons, fps);
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.6f,%.6f\n", made, e, t0, l2.at_horizon[0],
                          l2.at_horizon[1], l2.at_horizon[2], l2.average);
            rows << buf;
            preds.push_back(pred);
            gts.push_back(gt);
            slices.emplace_back(ep.states.begin() + anchor, ep.states.begin() + anchor + n + 1);
            ++made;
        }
        write_text((fs::path(a.out) / "l2.csv").string(), rows.str());
        double avg = 0;
        for (size_t i = 0; i < preds.size(); ++i) avg += metrics::traj_l2(preds[i], gts[i], horizons, fps).average;
        avg /= std::max<size_t>(1, preds.size());
        summary << "planner=" << a.planner << " scenes=" << made << " l2_avg=" << avg << "\n";
        if (has("collision")) {
            std::vector<double> rates = metrics::collision_rate(preds, slices, horizons, fps);
            summary << "collision_rate_1s=" << rates[0] << " 2s=" << rates[1] << " 3s=" << rates[2] << "\n";
        }
    }

    if (has("drift")) {
        std::ostringstream rows;
        rows << "step,mse\n";
        std::vector<double> acc(a.drift_horizon, 0.0);
        int count = 0;
        for (size_t e = 0; e < eps.size() && count < 10; ++e) {
            const sim::Episode& ep = eps[e];
            if (static_cast<int>(ep.frames.size()) < a.context + a.drift_horizon) continue;
            std::vector<sim::Action> acts(ep.actions.begin() + a.context,
                                          ep.actions.begin() + a.context + a.drift_horizon);
            roll::RolloutRequest req;
            req.mode = roll::Mode::video;
            req.horizon = a.drift_horizon;
            req.sampler_steps = a.steps;
            req.seed = a.seed + e;
            req.external_actions = &acts;
            roll::RolloutResult res = roll::rollout(
                *model, codec, roll::context_from_episode(*model, codec, ep, a.context), req);
            std::vector<Tensor> gt_frames;
            for (int t = 0; t < a.drift_horizon; ++t)
                gt_frames.push_back(codec::frame_to_tensor(ep.frames[a.context + t]));
            std::vector<double> curve = metrics::drift_curve(res.frames_float, gt_frames);
            for (int t = 0; t < a.drift_horizon; ++t) acc[t] += curve[t];
            ++count;
        }
        for (int t = 0; t < a.drift_horizon; ++t) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%.8f\n", t, acc[t] / std::max(1, count));
            rows << buf;
        }
        write_text((fs::path(a.out) / "drift.csv").string(), rows.str());
        summary << "drift episodes=" << count
                << " final_mse=" << acc[a.drift_horizon - 1] / std::max(1, count) << "\n";
    }

    if (has("flicker")) {
        double improvement = 0;
        int count = 0;
        Rng rng = Rng(a.seed).fork("eval_flicker");
        for (size_t e = 0; e < eps.size() && count < 8; ++e) {
            const sim::Episode& ep = eps[e];
            Tensor z = codec.encode_frames(ep.frames);
            for (auto& v : z.data) v += 0.1f * static_cast<float>(rng.normal());
            std::vector<Tensor> gt_frames;
            for (const auto& fr : ep.frames) gt_frames.push_back(codec::frame_to_tensor(fr));
            const double ex_frame =
                metrics::excess_flicker(codec.decode_video(z, /*temporal=*/false), gt_frames);
            const double ex_temp =
                metrics::excess_flicker(codec.decode_video(z, /*temporal=*/true), gt_frames);
            improvement += ex_frame - ex_temp;
            ++count;
        }
        summary << "flicker episodes=" << count
                << " mean_excess_improvement=" << improvement / std::max(1, count) << "\n";
    }

    if (has("compliance")) {
        std::vector<roll::ProbePair> probes;
        for (int i = 0; i < 12; ++i)
            probes.push_back(roll::make_signal_probe(a.seed + i, a.context, eps[0].states[0].config));
        roll::ComplianceResult r = roll::signal_compliance(*model, codec, probes, a.steps, a.seed);
        summary << "compliance red_mean=" << r.red_mean << " green_mean=" << r.green_mean << "\n";
    }

    write_text((fs::path(a.out) / "summary.txt").string(), summary.str());
    append_run_manifest(a.out, make_run_record("eval", "", "", a.seed, a.out));
    std::cout << summary.str();
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotArgs {
    std::string csv, out;
    int ycol = 1;
};

void cmd_plot(const PlotArgs& a) {
    std::ifstream f(a.csv);
    if (!f) throw std::runtime_error("plot: cannot open: " + a.csv);
    std::string header;
    std::getline(f, header);
    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                cols.push_back(std::stod(cell));
            } catch (...) {
                cols.push_back(0.0);
            }
        }
        if (static_cast<int>(cols.size()) <= a.ycol) continue;
        xs.push_back(cols[0]);
        ys.push_back(cols[a.ycol]);
    }
    if (ys.empty()) throw std::invalid_argument("plot: no rows with column " + std::to_string(a.ycol));

    const int w = 640, h = 400, ml = 48, mb = 32, mt = 16, mr = 16;
    std::vector<uint8_t> img(static_cast<size_t>(w) * h * 3, 250);
    double ymin = ys[0], ymax = ys[0], xmin = xs[0], xmax = xs[0];
    for (size_t i = 0; i < ys.size(); ++i) {
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
    }
    if (ymax == ymin) ymax = ymin + 1;
    if (xmax == xmin) xmax = xmin + 1;
    auto put = [&](int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const size_t i = (static_cast<size_t>(y) * w + x) * 3;
        img[i] = r;
        img[i + 1] = g;
        img[i + 2] = b;
    };
    for (int x = ml; x < w - mr; ++x) put(x, h - mb, 40, 40, 40);
    for (int y = mt; y < h - mb; ++y) put(ml, y, 40, 40, 40);
    auto px = [&](double x) { return ml + static_cast<int>((x - xmin) / (xmax - xmin) * (w - ml - mr - 1)); };
    auto py = [&](double y) {
        return h - mb - 1 - static_cast<int>((y - ymin) / (ymax - ymin) * (h - mt - mb - 1));
    };
    for (size_t i = 1; i < ys.size(); ++i) {
        int x0 = px(xs[i - 1]), y0 = py(ys[i - 1]), x1 = px(xs[i]), y1 = py(ys[i]);
        const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
        for (int s = 0; s <= steps; ++s) {
            const int x = x0 + (x1 - x0) * s / steps;
            const int y = y0 + (y1 - y0) * s / steps;
            put(x, y, 200, 60, 40);
            put(x, y + 1, 200, 60, 40);
        }
    }
    fs::create_directories(a.out);
    tools::write_bmp((fs::path(a.out) / "plot.bmp").string(), w, h, img);
    double mean = 0;
    for (double v : ys) mean += v;
    mean /= static_cast<double>(ys.size());
    std::ostringstream s;
    s << "rows: " << ys.size() << "\nycol: " << a.ycol << "\nmin: " << ymin << "\nmax: " << ymax
      << "\nmean: " << mean << "\nfirst: " << ys.front() << "\nlast: " << ys.back() << "\n";
    write_text((fs::path(a.out) / "plot_summary.txt").string(), s.str());
    append_run_manifest(a.out, make_run_record("plot", a.csv, "", 0, a.out));
    std::cout << "plot: " << ys.size() << " points -> " << a.out << "/plot.bmp\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale autoregressive diffusion world model"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("generate-data", "generate a synthetic driving dataset");
    g->add_option("--episodes", gen.episodes);
    g->add_option("--length", gen.length);
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out)->required();
    g->add_option("--policy", gen.policy);
    g->add_option("--config", gen.config_path);
    g->add_option("--height", gen.height);
    g->add_option("--width", gen.width);
    g->callback([&] { cmd_generate_data(gen); });

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train codec, temporal decoder, or the world model");
    t->add_option("--config", tr.config_path)->required();
    t->add_option("--data", tr.data)->required();
    t->add_option("--out", tr.out)->required();
    t->add_option("--stage", tr.stage);
    t->add_option("--codec", tr.codec_path);
    t->callback([&] { cmd_train(tr); });

    RolloutArgs ro;
    auto* r = app.add_subcommand("rollout", "autoregressive generation (full | video | plan)");
    r->add_option("--model", ro.model_path)->required();
    r->add_option("--codec", ro.codec_path)->required();
    r->add_option("--data", ro.data)->required();
    r->add_option("--out", ro.out)->required();
    r->add_option("--episode", ro.episode);
    r->add_option("--context", ro.context);
    r->add_option("--mode", ro.mode);
    r->add_option("--horizon", ro.horizon);
    r->add_option("--steps", ro.steps);
    r->add_option("--seed", ro.seed);
    r->add_flag("--temporal-decoder", ro.temporal_decoder);
    r->callback([&] { cmd_rollout(ro); });

    PlanArgs pl;
    auto* p = app.add_subcommand("plan", "planner-only inference with latency rows");
    p->add_option("--model", pl.model_path)->required();
    p->add_option("--codec", pl.codec_path)->required();
    p->add_option("--data", pl.data)->required();
    p->add_option("--out", pl.out)->required();
    p->add_option("--episode", pl.episode);
    p->add_option("--context", pl.context);
    p->add_option("--steps", pl.steps);
    p->add_option("--seed", pl.seed);
    p->callback([&] { cmd_plan(pl); });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "planner and generation metrics");
    e->add_option("--model", ev.model_path);
    e->add_option("--codec", ev.codec_path)->required();
    e->add_option("--data", ev.data)->required();
    e->add_option("--out", ev.out)->required();
    e->add_option("--metrics", ev.metrics);
    e->add_option("--planner", ev.planner);
    e->add_option("--scenes", ev.scenes);
    e->add_option("--context", ev.context);
    e->add_option("--steps", ev.steps);
    e->add_option("--drift-horizon", ev.drift_horizon);
    e->add_option("--seed", ev.seed);
    e->callback([&] { cmd_eval(ev); });

    PlotArgs plt;
    auto* pb = app.add_subcommand("plot", "render a CSV column as a line plot");
    pb->add_option("--csv", plt.csv)->required();
    pb->add_option("--out", plt.out)->required();
    pb->add_option("--ycol", plt.ycol);
    pb->callback([&] { cmd_plot(plt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e2) {
        return app.exit(e2);
    } catch (const CLI::ParseError& e2) {
        app.exit(e2);
        return 2;
    } catch (const std::invalid_argument& e2) {
        std::cerr << "error: " << e2.what() << "\n";
        return 2;
    } catch (const std::logic_error& e2) {
        std::cerr << "error: " << e2.what() << "\n";
        return 2;
    } catch (const std::exception& e2) {
        std::cerr << "error: " << e2.what() << "\n";
        return 3;
    }
    return 0;
}
