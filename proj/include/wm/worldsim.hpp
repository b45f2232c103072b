#ifndef WM_WORLDSIM_HPP
#define WM_WORLDSIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wm/rng.hpp"

namespace wm::sim {

// SE(2) ego motion: orientation change plus displacement in the ego frame at
// the source timestep. The identity action is (0,0,0).
struct Action {
    double dtheta = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};

double wrap_angle(double a);  // -> (-pi, pi]
Action se2_compose(const Action& a, const Action& b);
Action se2_inverse(const Action& a);

struct WorldConfig {
    int height = 64;
    int width = 128;
    double view_span = 32.0;       // meters across the image width
    double road_half_width = 4.0;  // road occupies |y| <= this
    double lane_offset = 2.0;      // ego lane y = -lane_offset, oncoming +lane_offset
    int n_obstacles = 6;
    double corridor_len = 220.0;   // obstacles are placed in x in [0, corridor_len]
    double signal_spacing = 40.0;  // signals repeat every spacing meters
    int signal_period = 40;        // steps per full cycle; red during the first half
    double d_stop = 3.0;           // hard-stop zone before a red signal
    double cruise_speed = 1.0;     // m per step
    double accel_max = 0.25;       // m per step^2
    double max_dtheta = 3.14159265358979323846;
    double max_dx = 2.0;
    double max_dy = 1.0;
    double ego_radius = 0.8;
    double fps = 2.0;

    void validate() const;  // throws std::invalid_argument naming the field
};

struct Obstacle {
    double x = 0.0, y = 0.0, theta = 0.0;
    double radius = 1.0;
    double vx = 0.0;  // world-frame velocity along the road, m per step
    int lane = 0;     // 0 = ego lane, 1 = oncoming
};

struct SignalState {
    bool red = false;
    double base_x = 20.0;  // signals sit at base_x + k * signal_spacing
    int phase = 0;         // offset into the period at step 0
};

struct WorldState {
    double ego_x = 0.0, ego_y = 0.0, ego_theta = 0.0;
    std::vector<Obstacle> obstacles;
    SignalState signal;
    uint64_t rng_seed = 0;
    uint64_t rng_counter = 0;
    int step_index = 0;
    bool clamp_warning = false;
    WorldConfig config;
};

WorldState new_world(uint64_t seed, const WorldConfig& cfg = WorldConfig{});
WorldState step(const WorldState& s, const Action& a);

bool signal_red_at(const WorldConfig& cfg, const SignalState& sig, int step_index);
// x of the nearest signal at or ahead of `x`.
double next_signal_x(const WorldConfig& cfg, const SignalState& sig, double x);

struct Frame {
    int height = 0, width = 0;
    std::vector<uint8_t> rgb;  // height * width * 3, row-major
};

Frame render(const WorldState& s);
// Geometry helpers shared with tests: map between world and pixel coords.
void world_to_px(const WorldState& s, double wx, double wy, double& px, double& py);
void px_to_world(const WorldState& s, double px, double py, double& wx, double& wy);
// True when the color of the world point depends on the signal state (signal
// box or stop line band).
bool signal_colored_point(const WorldState& s, double wx, double wy);

struct Episode {
    std::vector<Frame> frames;
    std::vector<Action> actions;  // actions[0] == (0,0,0); actions[t] moves t-1 -> t
    std::vector<WorldState> states;
    uint64_t seed = 0;
    double fps = 2.0;
    int height = 0, width = 0;
};

enum class Policy { scripted_lane_follow, random_smooth };
Policy policy_from_string(const std::string& name);
std::string policy_to_string(Policy p);

Episode generate_episode(uint64_t seed, int length, Policy policy, const WorldConfig& cfg = WorldConfig{});

// N cumulative displacements a_{T -> T+i} in the ego frame at T.
struct Trajectory {
    std::vector<Action> rows;
    int horizon() const { return static_cast<int>(rows.size()); }
};

// Cumulative trajectory over `horizon` future steps given per-step actions;
// `first` indexes the action moving T -> T+1.
Trajectory trajectory_from_actions(const std::vector<Action>& actions, int first, int horizon);
// Per-step action i -> i+1 recovered from cumulative rows.
std::vector<Action> per_step_actions(const Trajectory& traj);

// states[0] is the anchor frame T; states[i] supplies obstacles at T+i.
// Result[i] is true when the ego disc, displaced by rows[i] (the cumulative
// move T -> T+i+1), intersects any obstacle footprint at time T+i+1.
// Requires states.size() >= rows.size() + 1.
std::vector<bool> collision_check(const std::vector<WorldState>& states, const Trajectory& traj);

// ---- dataset io ----
// Layout: dir/manifest.json plus ep%04d/{frames.bin,actions.bin,states.json}.
void write_dataset(const std::vector<Episode>& episodes, const std::string& dir);
std::vector<Episode> read_dataset(const std::string& dir);

}  // namespace wm::sim

#endif
