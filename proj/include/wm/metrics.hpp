#ifndef WM_METRICS_HPP
#define WM_METRICS_HPP

#include "wm/tensor.hpp"
#include "wm/worldsim.hpp"

#include <vector>

namespace wm::metrics {

struct L2Result {
    std::vector<double> at_horizon;
    double average = 0;
};

// Euclidean distance on (dx, dy) of cumulative rows at each horizon (seconds);
// orientation is excluded. Row index for horizon h is round(h * fps) - 1.
L2Result traj_l2(const sim::Trajectory& pred, const sim::Trajectory& gt,
                 const std::vector<double>& horizons_s, double fps);

// Fraction of trajectories with any collision up to each horizon. states[k]
// is the per-trajectory state slice (anchor first).
std::vector<double> collision_rate(const std::vector<sim::Trajectory>& preds,
                                   const std::vector<std::vector<sim::WorldState>>& state_slices,
                                   const std::vector<double>& horizons_s, double fps);

// Per-step pixel MSE between generated and ground-truth frames (0..1 floats).
std::vector<double> drift_curve(const std::vector<Tensor>& generated, const std::vector<Tensor>& truth);

// Mean absolute difference between consecutive frames, in normalized units.
double flicker(const std::vector<Tensor>& frames);
// flicker(generated) - flicker(truth)
double excess_flicker(const std::vector<Tensor>& generated, const std::vector<Tensor>& truth);

}  // namespace wm::metrics

#endif
