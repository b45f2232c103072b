#ifndef WM_ROLLOUT_HPP
#define WM_ROLLOUT_HPP

#include "wm/trainer.hpp"

namespace wm::roll {

enum class Mode { full, video, plan };
Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

// Most recent <= t_max (latent, action) pairs; oldest entries slide out.
struct ContextBuf {
    std::vector<Tensor> latents;  // each [L, C] normalized
    std::vector<sim::Action> actions;

    void push(Tensor lat, const sim::Action& a, int t_max);
    int size() const { return static_cast<int>(latents.size()); }
};

ContextBuf context_from_episode(const train::WorldModel& model, const codec::Codec& codec,
                                const sim::Episode& ep, int prefix_len);
ContextBuf context_from_latents(const Tensor& latents /*[T,L,C]*/,
                                const std::vector<sim::Action>& actions, int t_max);

struct RolloutRequest {
    Mode mode = Mode::full;
    int horizon = 1;           // frames to generate (full/video)
    int sampler_steps = 100;
    uint64_t seed = 0;
    const std::vector<sim::Action>* external_actions = nullptr;  // required in video mode
    bool use_temporal_decoder = false;
    bool decode_frames = true;
};

struct StepTiming {
    double mst_s = 0, traj_sampler_s = 0, vis_sampler_s = 0, decode_s = 0;
};

struct RolloutResult {
    Tensor latents;  // [H, h, w, C] generated, normalized
    std::vector<Tensor> frames_float;  // decoded [H_img, W_img, 3], 0..1
    std::vector<sim::Frame> frames;
    std::vector<sim::Trajectory> plans;
    std::vector<sim::Action> chosen_actions;
    std::vector<StepTiming> timings;
    std::vector<int> window_sizes;  // context length fed to the MST per step
    int64_t visdit_calls = 0;       // velocity-network forward invocations
    int64_t trajdit_calls = 0;
    int64_t decoder_calls = 0;
};

RolloutResult rollout(const train::WorldModel& model, const codec::Codec& codec, ContextBuf ctx,
                      const RolloutRequest& req);

struct PlanTiming {
    double mst_s = 0;
    double sampler_s = 0;  // the steps-proportional TrajDiT denoising loop
    double total_s = 0;
};

sim::Trajectory plan(const train::WorldModel& model, const ContextBuf& ctx, int sampler_steps,
                     uint64_t seed, PlanTiming* timing = nullptr);

// Constant-velocity baseline: extrapolates the last context action.
sim::Trajectory constant_velocity_plan(const ContextBuf& ctx, int horizon);

// ---- signal-compliance probe ----
// Two scenes identical up to the signal color: ego is driven toward the
// signal with a forced deceleration schedule and ends within stop distance.
struct ProbePair {
    sim::Episode red_ep, green_ep;
};
ProbePair make_signal_probe(uint64_t seed, int context_len, sim::WorldConfig cfg);

struct ComplianceResult {
    double red_mean = 0, green_mean = 0;
};
ComplianceResult signal_compliance(const train::WorldModel& model, const codec::Codec& codec,
                                   const std::vector<ProbePair>& probes, int sampler_steps, uint64_t seed);

}  // namespace wm::roll

#endif
