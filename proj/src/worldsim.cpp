#include "wm/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace wm::sim {

// ---------------------------------------------------------------------------
// SE(2)
// ---------------------------------------------------------------------------

double wrap_angle(double a) {
    constexpr double kPi = 3.14159265358979323846;
    constexpr double kTwoPi = 2.0 * kPi;
    a = std::fmod(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    if (a > kPi) a -= kTwoPi;
    return a;
}

Action se2_compose(const Action& a, const Action& b) {
    const double c = std::cos(a.dtheta);
    const double s = std::sin(a.dtheta);
    return Action{wrap_angle(a.dtheta + b.dtheta), a.dx + c * b.dx - s * b.dy, a.dy + s * b.dx + c * b.dy};
}

Action se2_inverse(const Action& a) {
    const double c = std::cos(a.dtheta);
    const double s = std::sin(a.dtheta);
    // R(-theta) * (-t)
    return Action{wrap_angle(-a.dtheta), -(c * a.dx + s * a.dy), -(-s * a.dx + c * a.dy)};
}

// ---------------------------------------------------------------------------
// world construction and stepping
// ---------------------------------------------------------------------------

void WorldConfig::validate() const {
    auto fail = [](const std::string& field) {
        throw std::invalid_argument("worldsim config: invalid " + field);
    };
    if (height < 8 || width < 8) fail("resolution");
    if (view_span <= 0) fail("view_span");
    if (road_half_width <= 0) fail("road_half_width");
    if (lane_offset <= 0 || lane_offset >= road_half_width) fail("lane_offset");
    if (n_obstacles < 0) fail("n_obstacles");
    if (corridor_len <= 0) fail("corridor_len");
    if (signal_spacing <= 0) fail("signal_spacing");
    if (signal_period < 2) fail("signal_period");
    if (d_stop <= 0) fail("d_stop");
    if (cruise_speed <= 0) fail("cruise_speed");
    if (accel_max <= 0) fail("accel_max");
    if (ego_radius <= 0) fail("ego_radius");
    if (fps <= 0) fail("fps");
}

bool signal_red_at(const WorldConfig& cfg, const SignalState& sig, int step_index) {
    const int m = ((step_index + sig.phase) % cfg.signal_period + cfg.signal_period) % cfg.signal_period;
    return m < cfg.signal_period / 2;
}

double next_signal_x(const WorldConfig& cfg, const SignalState& sig, double x) {
    const double k = std::ceil((x - sig.base_x) / cfg.signal_spacing);
    return sig.base_x + k * cfg.signal_spacing;
}

WorldState new_world(uint64_t seed, const WorldConfig& cfg) {
    cfg.validate();
    WorldState s;
    s.config = cfg;
    Rng base(seed);

    Rng ego_rng = base.fork("ego");
    s.ego_x = 0.0;
    s.ego_y = -cfg.lane_offset + ego_rng.uniform(-0.3, 0.3);
    s.ego_theta = ego_rng.uniform(-0.06, 0.06);

    Rng sig_rng = base.fork("signal");
    s.signal.base_x = sig_rng.uniform(12.0, 12.0 + cfg.signal_spacing);
    s.signal.phase = sig_rng.uniform_int(0, cfg.signal_period - 1);
    s.signal.red = signal_red_at(cfg, s.signal, 0);

    const int n_same = cfg.n_obstacles / 2;
    Rng obs_rng = base.fork("obstacles");
    double x_cursor = 15.0 + obs_rng.uniform(0.0, 12.0);
    for (int i = 0; i < cfg.n_obstacles; ++i) {
        Obstacle o;
        if (i < n_same) {
            o.lane = 0;
            o.x = x_cursor;
            x_cursor += obs_rng.uniform(18.0, 34.0);
            o.y = -cfg.lane_offset + obs_rng.uniform(-0.2, 0.2);
            o.vx = obs_rng.uniform(0.25, 0.6) * cfg.cruise_speed;
            o.theta = 0.0;
        } else {
            o.lane = 1;
            o.x = obs_rng.uniform(10.0, cfg.corridor_len);
            o.y = cfg.lane_offset + obs_rng.uniform(-0.2, 0.2);
            o.vx = -obs_rng.uniform(0.4, 0.9) * cfg.cruise_speed;
            o.theta = 3.14159265358979323846;
        }
        o.radius = obs_rng.uniform(0.8, 1.1);
        s.obstacles.push_back(o);
    }

    s.rng_seed = seed;
    s.rng_counter = 0;
    s.step_index = 0;
    return s;
}

WorldState step(const WorldState& s, const Action& a) {
    Action ac = a;
    bool clamped = false;
    auto clamp = [&](double v, double lim) {
        if (v > lim) { clamped = true; return lim; }
        if (v < -lim) { clamped = true; return -lim; }
        return v;
    };
    ac.dtheta = clamp(ac.dtheta, s.config.max_dtheta);
    ac.dx = clamp(ac.dx, s.config.max_dx);
    ac.dy = clamp(ac.dy, s.config.max_dy);

    WorldState out = s;
    const Action pose{s.ego_theta, s.ego_x, s.ego_y};
    const Action moved = se2_compose(pose, ac);
    out.ego_theta = moved.dtheta;
    out.ego_x = moved.dx;
    out.ego_y = moved.dy;
    for (auto& o : out.obstacles) o.x += o.vx;
    out.step_index = s.step_index + 1;
    out.signal.red = signal_red_at(s.config, s.signal, out.step_index);
    out.clamp_warning = clamped;
    return out;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace {

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kOffroad{34, 58, 30};
constexpr Rgb kRoad{52, 52, 56};
constexpr Rgb kEdge{150, 150, 150};
constexpr Rgb kDash{215, 215, 215};
constexpr Rgb kStopRed{205, 60, 60};
constexpr Rgb kStopGreen{225, 225, 225};
constexpr Rgb kBoxRed{230, 40, 40};
constexpr Rgb kBoxGreen{40, 210, 80};
constexpr Rgb kPost{110, 110, 110};
constexpr Rgb kObsSame{215, 140, 50};
constexpr Rgb kObsOncoming{70, 120, 215};
constexpr Rgb kEgo{240, 240, 240};
constexpr Rgb kEgoNose{30, 30, 30};

double fmodpos(double x, double p) { return x - std::floor(x / p) * p; }

double anchor_col(const WorldConfig& cfg) { return cfg.width / 4.0; }
double anchor_row(const WorldConfig& cfg) { return cfg.height / 2.0; }
double px_per_m(const WorldConfig& cfg) { return cfg.width / cfg.view_span; }

}  // namespace

void world_to_px(const WorldState& s, double wx, double wy, double& px, double& py) {
    const double c = std::cos(s.ego_theta), sn = std::sin(s.ego_theta);
    const double dx = wx - s.ego_x, dy = wy - s.ego_y;
    const double xr = c * dx + sn * dy;
    const double yr = -sn * dx + c * dy;
    const double sc = px_per_m(s.config);
    px = anchor_col(s.config) + xr * sc;
    py = anchor_row(s.config) - yr * sc;
}

void px_to_world(const WorldState& s, double px, double py, double& wx, double& wy) {
    const double sc = px_per_m(s.config);
    const double xr = (px - anchor_col(s.config)) / sc;
    const double yr = (anchor_row(s.config) - py) / sc;
    const double c = std::cos(s.ego_theta), sn = std::sin(s.ego_theta);
    wx = s.ego_x + c * xr - sn * yr;
    wy = s.ego_y + sn * xr + c * yr;
}

bool signal_colored_point(const WorldState& s, double wx, double wy) {
    const WorldConfig& cfg = s.config;
    const double k = std::round((wx - s.signal.base_x) / cfg.signal_spacing);
    const double sx = s.signal.base_x + k * cfg.signal_spacing;
    const bool stop_line = std::abs(wx - sx) <= 0.3 && std::abs(wy) <= cfg.road_half_width;
    const double box_cy = cfg.road_half_width + 2.4;
    const bool box = std::abs(wx - sx) <= 1.3 && std::abs(wy - box_cy) <= 1.3;
    return stop_line || box;
}

Frame render(const WorldState& s) {
    const WorldConfig& cfg = s.config;
    Frame fr;
    fr.height = cfg.height;
    fr.width = cfg.width;
    fr.rgb.resize(static_cast<size_t>(cfg.height) * cfg.width * 3);

    const double sc = px_per_m(cfg);
    const double ax = anchor_col(cfg), ay = anchor_row(cfg);
    const double c = std::cos(s.ego_theta), sn = std::sin(s.ego_theta);

    for (int row = 0; row < cfg.height; ++row) {
        for (int col = 0; col < cfg.width; ++col) {
            const double xr = (col + 0.5 - ax) / sc;
            const double yr = (ay - (row + 0.5)) / sc;
            const double wx = s.ego_x + c * xr - sn * yr;
            const double wy = s.ego_y + sn * xr + c * yr;

            Rgb px = kOffroad;
            const double k = std::round((wx - s.signal.base_x) / cfg.signal_spacing);
            const double sx = s.signal.base_x + k * cfg.signal_spacing;

            if (std::abs(wy) <= cfg.road_half_width) {
                px = kRoad;
                const double ey = std::abs(wy);
                if (ey >= cfg.road_half_width - 0.45 && ey <= cfg.road_half_width - 0.15) px = kEdge;
                if (std::abs(wy) <= 0.15 && fmodpos(wx, 4.0) < 2.0) px = kDash;
                if (std::abs(wx - sx) <= 0.3) px = s.signal.red ? kStopRed : kStopGreen;
            } else {
                if (std::abs(wy) >= cfg.road_half_width + 0.8 && std::abs(wy) <= cfg.road_half_width + 1.4 &&
                    fmodpos(wx, 8.0) < 0.5)
                    px = kPost;
                const double box_cy = cfg.road_half_width + 2.4;
                if (std::abs(wx - sx) <= 1.3 && std::abs(wy - box_cy) <= 1.3)
                    px = s.signal.red ? kBoxRed : kBoxGreen;
            }

            for (const auto& o : s.obstacles) {
                const double dox = wx - o.x, doy = wy - o.y;
                if (dox * dox + doy * doy <= o.radius * o.radius)
                    px = o.lane == 0 ? kObsSame : kObsOncoming;
            }

            // ego marker lives in the ego frame, so it is identical in every frame
            if (xr >= -1.0 && xr <= 1.0 && yr >= -0.5 && yr <= 0.5)
                px = xr >= 0.45 ? kEgoNose : kEgo;

            uint8_t* out = fr.rgb.data() + (static_cast<size_t>(row) * cfg.width + col) * 3;
            out[0] = px.r;
            out[1] = px.g;
            out[2] = px.b;
        }
    }
    return fr;
}

// ---------------------------------------------------------------------------
// policies and episode generation
// ---------------------------------------------------------------------------

Policy policy_from_string(const std::string& name) {
    if (name == "scripted" || name == "scripted-lane-follow") return Policy::scripted_lane_follow;
    if (name == "random" || name == "random-smooth") return Policy::random_smooth;
    throw std::invalid_argument("unknown policy: " + name + " (expected scripted|random)");
}

std::string policy_to_string(Policy p) {
    return p == Policy::scripted_lane_follow ? "scripted" : "random";
}

namespace {

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Action quantize(const Action& a) {
    return Action{quantize_f32(a.dtheta), quantize_f32(a.dx), quantize_f32(a.dy)};
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

struct ScriptedDriver {
    double v;
    double cruise;
    double accel;

    ScriptedDriver(Rng& rng, const WorldConfig& cfg) {
        cruise = cfg.cruise_speed * rng.uniform(0.75, 1.15);
        accel = cfg.accel_max * rng.uniform(0.85, 1.2);
        v = rng.uniform(0.3, cruise);
    }

    Action act(const WorldState& s) {
        const WorldConfig& cfg = s.config;
        const double lane_y = -cfg.lane_offset;
        const double gap_sig = next_signal_x(cfg, s.signal, s.ego_x) - s.ego_x;

        double target = cruise;
        if (s.signal.red) {
            if (gap_sig <= cfg.d_stop) target = 0.0;
            else target = std::min(target, 0.6 * (gap_sig - cfg.d_stop));
        }
        for (const auto& o : s.obstacles) {
            if (o.lane != 0) continue;
            const double gap = o.x - s.ego_x - (cfg.ego_radius + o.radius + 0.4);
            if (gap < -1.0) continue;
            if (gap <= cfg.d_stop) target = std::min(target, std::max(0.0, o.vx * 0.8));
            else target = std::min(target, o.vx + 0.5 * (gap - cfg.d_stop));
        }

        v += clampd(target - v, -accel, accel);
        v = clampd(v, 0.0, cruise * 1.2);
        // contract: zero forward motion while red inside the stop zone
        if (s.signal.red && gap_sig >= 0.0 && gap_sig <= cfg.d_stop) v = 0.0;

        const double dy_err = lane_y - s.ego_y;
        const double heading_target = clampd(0.3 * dy_err, -0.3, 0.3);
        const double dtheta = clampd(0.5 * (heading_target - s.ego_theta), -0.08, 0.08);
        const double dy = clampd(0.15 * dy_err, -0.08, 0.08);
        return Action{dtheta, v, dy};
    }
};

struct SmoothRandomDriver {
    double vx, vth, vy;
    Rng rng;

    SmoothRandomDriver(Rng r, const WorldConfig& cfg) : rng(r) {
        vx = 0.55 * cfg.cruise_speed;
        vth = 0.0;
        vy = 0.0;
    }

    Action act(const WorldState& s) {
        const WorldConfig& cfg = s.config;
        vx += 0.25 * (0.55 * cfg.cruise_speed - vx) + 0.18 * rng.normal();
        vx = clampd(vx, 0.0, 1.2 * cfg.cruise_speed);
        vth += 0.3 * (-0.3 * s.ego_theta - vth) + 0.05 * rng.normal();
        vth = clampd(vth, -0.12, 0.12);
        const double recenter = clampd(-0.1 * (s.ego_y + cfg.lane_offset), -0.06, 0.06);
        vy += 0.3 * (recenter - vy) + 0.05 * rng.normal();
        vy = clampd(vy, -0.15, 0.15);
        return Action{vth, vx, vy};
    }
};

}  // namespace

Episode generate_episode(uint64_t seed, int length, Policy policy, const WorldConfig& cfg) {
    if (length < 2) throw std::invalid_argument("generate_episode: length must be >= 2");
    Episode ep;
    ep.seed = seed;
    ep.fps = cfg.fps;
    ep.height = cfg.height;
    ep.width = cfg.width;

    WorldState s = new_world(seed, cfg);
    ep.states.push_back(s);
    ep.frames.push_back(render(s));
    ep.actions.push_back(Action{});

    Rng policy_rng = Rng(seed).fork("policy");
    ScriptedDriver scripted(policy_rng, cfg);
    SmoothRandomDriver smooth(policy_rng.fork("smooth"), cfg);

    for (int t = 1; t < length; ++t) {
        Action a = policy == Policy::scripted_lane_follow ? scripted.act(s) : smooth.act(s);
        a = quantize(a);
        s = step(s, a);
        ep.actions.push_back(a);
        ep.states.push_back(s);
        ep.frames.push_back(render(s));
    }
    return ep;
}

// ---------------------------------------------------------------------------
// trajectories and collisions
// ---------------------------------------------------------------------------

Trajectory trajectory_from_actions(const std::vector<Action>& actions, int first, int horizon) {
    if (first < 0 || first + horizon > static_cast<int>(actions.size()))
        throw std::invalid_argument("trajectory_from_actions: range out of bounds");
    Trajectory tr;
    Action acc{};
    for (int i = 0; i < horizon; ++i) {
        acc = se2_compose(acc, actions[first + i]);
        tr.rows.push_back(acc);
    }
    return tr;
}

std::vector<Action> per_step_actions(const Trajectory& traj) {
    std::vector<Action> out;
    Action prev{};
    for (const auto& row : traj.rows) {
        out.push_back(se2_compose(se2_inverse(prev), row));
        prev = row;
    }
    return out;
}

std::vector<bool> collision_check(const std::vector<WorldState>& states, const Trajectory& traj) {
    if (states.empty()) throw std::invalid_argument("collision_check: empty state sequence");
    if (traj.rows.size() + 1 > states.size())
        throw std::invalid_argument("collision_check: horizon exceeds simulated states");
    const WorldState& anchor = states[0];
    const Action pose{anchor.ego_theta, anchor.ego_x, anchor.ego_y};
    std::vector<bool> out(traj.rows.size(), false);
    for (size_t i = 0; i < traj.rows.size(); ++i) {
        const Action p = se2_compose(pose, traj.rows[i]);
        const WorldState& w = states[i + 1];
        for (const auto& o : w.obstacles) {
            const double dx = p.dx - o.x, dy = p.dy - o.y;
            const double rr = anchor.config.ego_radius + o.radius;
            if (dx * dx + dy * dy < rr * rr) {
                out[i] = true;
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset io
// ---------------------------------------------------------------------------

namespace {

void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("dataset: truncated file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

json config_to_json(const WorldConfig& c) {
    return json{{"height", c.height},
                {"width", c.width},
                {"view_span", c.view_span},
                {"road_half_width", c.road_half_width},
                {"lane_offset", c.lane_offset},
                {"n_obstacles", c.n_obstacles},
                {"corridor_len", c.corridor_len},
                {"signal_spacing", c.signal_spacing},
                {"signal_period", c.signal_period},
                {"d_stop", c.d_stop},
                {"cruise_speed", c.cruise_speed},
                {"accel_max", c.accel_max},
                {"max_dtheta", c.max_dtheta},
                {"max_dx", c.max_dx},
                {"max_dy", c.max_dy},
                {"ego_radius", c.ego_radius},
                {"fps", c.fps}};
}

WorldConfig config_from_json(const json& j) {
    WorldConfig c;
    c.height = j.at("height");
    c.width = j.at("width");
    c.view_span = j.at("view_span");
    c.road_half_width = j.at("road_half_width");
    c.lane_offset = j.at("lane_offset");
    c.n_obstacles = j.at("n_obstacles");
    c.corridor_len = j.at("corridor_len");
    c.signal_spacing = j.at("signal_spacing");
    c.signal_period = j.at("signal_period");
    c.d_stop = j.at("d_stop");
    c.cruise_speed = j.at("cruise_speed");
    c.accel_max = j.at("accel_max");
    c.max_dtheta = j.at("max_dtheta");
    c.max_dx = j.at("max_dx");
    c.max_dy = j.at("max_dy");
    c.ego_radius = j.at("ego_radius");
    c.fps = j.at("fps");
    return c;
}

json state_to_json(const WorldState& s) {
    json obstacles = json::array();
    for (const auto& o : s.obstacles)
        obstacles.push_back(json{{"x", o.x}, {"y", o.y}, {"theta", o.theta}, {"radius", o.radius},
                                 {"vx", o.vx}, {"lane", o.lane}});
    return json{{"ego", {s.ego_x, s.ego_y, s.ego_theta}},
                {"obstacles", obstacles},
                {"signal", {{"red", s.signal.red}, {"base_x", s.signal.base_x}, {"phase", s.signal.phase}}},
                {"rng_seed", std::to_string(s.rng_seed)},
                {"rng_counter", std::to_string(s.rng_counter)},
                {"step", s.step_index},
                {"clamp_warning", s.clamp_warning}};
}

WorldState state_from_json(const json& j, const WorldConfig& cfg) {
    WorldState s;
    s.config = cfg;
    s.ego_x = j.at("ego")[0];
    s.ego_y = j.at("ego")[1];
    s.ego_theta = j.at("ego")[2];
    for (const auto& oj : j.at("obstacles")) {
        Obstacle o;
        o.x = oj.at("x");
        o.y = oj.at("y");
        o.theta = oj.at("theta");
        o.radius = oj.at("radius");
        o.vx = oj.at("vx");
        o.lane = oj.at("lane");
        s.obstacles.push_back(o);
    }
    s.signal.red = j.at("signal").at("red");
    s.signal.base_x = j.at("signal").at("base_x");
    s.signal.phase = j.at("signal").at("phase");
    s.rng_seed = std::stoull(j.at("rng_seed").get<std::string>());
    s.rng_counter = std::stoull(j.at("rng_counter").get<std::string>());
    s.step_index = j.at("step");
    s.clamp_warning = j.at("clamp_warning");
    return s;
}

std::string ep_dir_name(int idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ep%04d", idx);
    return buf;
}

}  // namespace

void write_dataset(const std::vector<Episode>& episodes, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["count"] = episodes.size();
    manifest["fps"] = episodes.empty() ? 2.0 : episodes[0].fps;
    manifest["resolution"] = {episodes.empty() ? 0 : episodes[0].height,
                              episodes.empty() ? 0 : episodes[0].width};
    manifest["seed"] = episodes.empty() ? "0" : std::to_string(episodes[0].seed);
    json list = json::array();

    for (size_t i = 0; i < episodes.size(); ++i) {
        const Episode& ep = episodes[i];
        const std::string sub = ep_dir_name(static_cast<int>(i));
        fs::create_directories(fs::path(dir) / sub);
        list.push_back(json{{"id", sub}, {"length", ep.frames.size()}, {"seed", std::to_string(ep.seed)}});

        {
            std::ofstream f(fs::path(dir) / sub / "frames.bin", std::ios::binary);
            if (!f) throw std::runtime_error("dataset: cannot write frames.bin in " + dir);
            f.write("EPND", 4);
            write_u32(f, 1);  // version
            write_u32(f, static_cast<uint32_t>(ep.frames.size()));
            write_u32(f, static_cast<uint32_t>(ep.height));
            write_u32(f, static_cast<uint32_t>(ep.width));
            write_u32(f, 3);
            for (const auto& fr : ep.frames)
                f.write(reinterpret_cast<const char*>(fr.rgb.data()), static_cast<std::streamsize>(fr.rgb.size()));
        }
        {
            std::ofstream f(fs::path(dir) / sub / "actions.bin", std::ios::binary);
            if (!f) throw std::runtime_error("dataset: cannot write actions.bin in " + dir);
            f.write("EPNA", 4);
            write_u32(f, static_cast<uint32_t>(ep.actions.size()));
            write_u32(f, 3);
            for (const auto& a : ep.actions) {
                float row[3] = {static_cast<float>(a.dtheta), static_cast<float>(a.dx),
                                static_cast<float>(a.dy)};
                f.write(reinterpret_cast<const char*>(row), sizeof(row));
            }
        }
        {
            json sj;
            sj["seed"] = std::to_string(ep.seed);
            sj["fps"] = ep.fps;
            sj["config"] = config_to_json(ep.states.empty() ? WorldConfig{} : ep.states[0].config);
            json arr = json::array();
            for (const auto& st : ep.states) arr.push_back(state_to_json(st));
            sj["states"] = arr;
            std::ofstream f(fs::path(dir) / sub / "states.json");
            if (!f) throw std::runtime_error("dataset: cannot write states.json in " + dir);
            f << sj.dump(1) << "\n";
        }
    }

    manifest["episodes"] = list;
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("dataset: cannot write manifest.json in " + dir);
    f << manifest.dump(1) << "\n";
}

std::vector<Episode> read_dataset(const std::string& dir) {
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    std::ifstream mf(mpath);
    if (!mf) throw std::runtime_error("dataset: missing manifest: " + mpath);
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: corrupt manifest " + mpath + ": " + e.what());
    }

    std::vector<Episode> out;
    for (const auto& entry : manifest.at("episodes")) {
        const std::string sub = entry.at("id");
        Episode ep;

        const std::string fpath = (fs::path(dir) / sub / "frames.bin").string();
        {
            std::ifstream f(fpath, std::ios::binary);
            if (!f) throw std::runtime_error("dataset: missing file: " + fpath);
            char magic[4];
            f.read(magic, 4);
            if (!f || std::memcmp(magic, "EPND", 4) != 0)
                throw std::runtime_error("dataset: bad frames magic: " + fpath);
            const uint32_t version = read_u32(f, fpath);
            if (version != 1) throw std::runtime_error("dataset: unsupported frames version: " + fpath);
            const uint32_t t = read_u32(f, fpath);
            const uint32_t h = read_u32(f, fpath);
            const uint32_t w = read_u32(f, fpath);
            const uint32_t ch = read_u32(f, fpath);
            if (ch != 3) throw std::runtime_error("dataset: expected 3 channels: " + fpath);
            ep.height = static_cast<int>(h);
            ep.width = static_cast<int>(w);
            for (uint32_t i = 0; i < t; ++i) {
                Frame fr;
                fr.height = ep.height;
                fr.width = ep.width;
                fr.rgb.resize(static_cast<size_t>(h) * w * 3);
                f.read(reinterpret_cast<char*>(fr.rgb.data()), static_cast<std::streamsize>(fr.rgb.size()));
                if (!f) throw std::runtime_error("dataset: truncated frames payload: " + fpath);
                ep.frames.push_back(std::move(fr));
            }
        }

        const std::string apath = (fs::path(dir) / sub / "actions.bin").string();
        {
            std::ifstream f(apath, std::ios::binary);
            if (!f) throw std::runtime_error("dataset: missing file: " + apath);
            char magic[4];
            f.read(magic, 4);
            if (!f || std::memcmp(magic, "EPNA", 4) != 0)
                throw std::runtime_error("dataset: bad actions magic: " + apath);
            const uint32_t t = read_u32(f, apath);
            const uint32_t c = read_u32(f, apath);
            if (c != 3) throw std::runtime_error("dataset: expected 3 action components: " + apath);
            for (uint32_t i = 0; i < t; ++i) {
                float row[3];
                f.read(reinterpret_cast<char*>(row), sizeof(row));
                if (!f) throw std::runtime_error("dataset: truncated actions payload: " + apath);
                ep.actions.push_back(Action{row[0], row[1], row[2]});
            }
        }

        const std::string spath = (fs::path(dir) / sub / "states.json").string();
        {
            std::ifstream f(spath);
            if (!f) throw std::runtime_error("dataset: missing file: " + spath);
            json sj;
            try {
                sj = json::parse(f);
            } catch (const json::exception& e) {
                throw std::runtime_error("dataset: corrupt states " + spath + ": " + e.what());
            }
            ep.seed = std::stoull(sj.at("seed").get<std::string>());
            ep.fps = sj.at("fps");
            const WorldConfig cfg = config_from_json(sj.at("config"));
            for (const auto& stj : sj.at("states")) ep.states.push_back(state_from_json(stj, cfg));
        }

        if (ep.frames.size() != ep.actions.size() || ep.frames.size() != ep.states.size())
            throw std::runtime_error("dataset: inconsistent episode lengths in " + sub);
        out.push_back(std::move(ep));
    }
    return out;
}

}  // namespace wm::sim
