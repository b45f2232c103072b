#ifndef WM_TRAINER_HPP
#define WM_TRAINER_HPP

#include "wm/codec.hpp"
#include "wm/dit.hpp"
#include "wm/mst.hpp"
#include "wm/serialize.hpp"
#include "wm/worldsim.hpp"

namespace wm::train {

struct WmConfig {
    mst::MstConfig mst;
    dit::DitConfig traj;
    dit::DitConfig vis;
    int horizon = 6;  // trajectory rows N
    int latent_h = 8;
    int latent_w = 16;
    int c_latent = 8;

    // Fills the dependent head fields (cond width/tokens, token dims) from
    // the mst/latent dims.
    void finalize();
};

// MST + both diffusion heads over one parameter store, plus the trajectory
// normalization affine used by flow matching.
struct WorldModel {
    WmConfig cfg;
    nn::ParamStore ps;
    mst::Mst mst_enc;
    dit::DitHead trajdit;
    dit::DitHead visdit;
    Tensor traj_mean, traj_std;  // [N, 3]

    WorldModel(const WmConfig& config, uint64_t seed);
    // Submodules keep a pointer into `ps`; fix it up on move.
    WorldModel(WorldModel&& o) noexcept;
    WorldModel(const WorldModel&) = delete;
    WorldModel& operator=(const WorldModel&) = delete;
    WorldModel& operator=(WorldModel&&) = delete;

    int l_tokens() const { return cfg.latent_h * cfg.latent_w; }

    // latents: [T, L, C] normalized; actions: [T, 3] raw
    ag::Var encode_context(const Tensor& latents, const Tensor& actions) const;

    ag::Var traj_velocity(const Tensor& noisy_norm, float t, const ag::Var& f, dit::DitFlags flags = {},
                          ag::Var* hidden = nullptr) const;
    // noisy: [h, w, C] normalized latent
    ag::Var vis_velocity(const Tensor& noisy, float t, const ag::Var& f, const sim::Action& action,
                         dit::DitFlags flags = {}, ag::Var* hidden = nullptr) const;

    Tensor normalize_traj(const sim::Trajectory& tr) const;  // [N, 3]
    sim::Trajectory denormalize_traj(const Tensor& rows) const;
    void normalized_action(const sim::Action& a, float out[3]) const;

    io::Container to_container() const;
    static WorldModel from_container(const io::Container& c);
};

// Dataset of codec latents; world-model training never touches pixels.
struct LatentEpisode {
    Tensor latents;  // [T, L, C] normalized
    std::vector<sim::Action> actions;
    Tensor actions_raw;  // [T, 3]
};

struct LatentDataset {
    std::vector<LatentEpisode> eps;
    int h = 0, w = 0, c = 0;
    int l() const { return h * w; }
};

LatentDataset encode_dataset(const codec::Codec& codec, const std::vector<sim::Episode>& episodes);
// Per-(row, component) statistics of cumulative trajectories over the dataset.
void fit_traj_norm(WorldModel& model, const LatentDataset& data);

struct TrainConfig {
    int batch = 8;
    float lr = 1e-4f;
    float weight_decay = 5e-2f;
    int cof_period = 10;  // K: chain-of-forward every K steps
    int cof_passes = 3;   // M: forward passes per chain-of-forward step
    bool cof_enabled = true;
    int total_steps = 1000;
    uint64_t seed = 0;
    bool deterministic = true;
    int ctx_min = 10, ctx_max = 10;  // context length range sampled per item
    int checkpoint_every = 0;        // 0: only final

    void validate() const;
};

struct BatchItem {
    Tensor ctx_latents;  // [T, L, C]
    Tensor ctx_actions;  // [T, 3] raw
    std::vector<Tensor> tgt_latent;        // per pass: [h, w, C]
    std::vector<Tensor> tgt_traj;          // per pass: [N, 3] normalized
    std::vector<sim::Action> next_action;  // per pass: a_{T_j -> T_j + 1}
};

struct StepLosses {
    float l_traj = 0, l_vis = 0, total = 0;
};

struct LossRow {
    int step;
    float l_traj, l_vis, total;
    bool cof;
};

// Diagnostics for the chain-of-forward plumbing tests.
struct CofDiag {
    struct Pass {
        int context_len = 0;
        int self_frames = 0;
        Tensor xt_vis;
        float t_vis = 0;
        Tensor v_vis;
        Tensor appended;  // the latent appended to the next pass's context
    };
    std::vector<Pass> passes;
    ag::Var probe;  // ones placed on the estimate path before the detach
};

struct Trainer {
    WorldModel& model;
    LatentDataset& data;
    TrainConfig cfg;
    nn::AdamW opt;
    Rng rng;
    std::vector<LossRow> history;
    int step_index = 0;
    bool stub_perfect_heads = false;  // test hook: heads return the exact target velocity

    Trainer(WorldModel& m, LatentDataset& d, const TrainConfig& c);

    BatchItem sample_item(int passes);
    std::vector<BatchItem> sample_batch(int passes);

    StepLosses teacher_forcing_step(const std::vector<BatchItem>& items);
    StepLosses chain_of_forward_step(const std::vector<BatchItem>& items, CofDiag* diag = nullptr);

    // Runs total_steps, applying chain-of-forward on steps where
    // step_index % cof_period == 0. Returns the loss history.
    const std::vector<LossRow>& train(const std::string& checkpoint_path = "",
                                      const std::string& loss_csv_path = "");

    StepLosses run_step(const std::vector<BatchItem>& items, int passes, CofDiag* diag);
};

void save_train_state(const std::string& path, const WorldModel& model, const nn::AdamW& opt,
                      int step_index, const std::vector<LossRow>& history);
struct TrainState {
    WorldModel model;
    nn::AdamW opt;
    int step_index = 0;
    std::vector<LossRow> history;
};
TrainState load_train_state(const std::string& path);

void write_loss_csv(const std::string& path, const std::vector<LossRow>& history);

}  // namespace wm::train

#endif
