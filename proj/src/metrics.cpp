#include "wm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace wm::metrics {

namespace {
int horizon_row(double h_seconds, double fps, int n_rows) {
    const int idx = static_cast<int>(std::lround(h_seconds * fps)) - 1;
    if (idx < 0 || idx >= n_rows)
        throw std::invalid_argument("metric: horizon " + std::to_string(h_seconds) +
                                    "s is outside the trajectory (" + std::to_string(n_rows) + " rows at " +
                                    std::to_string(fps) + " fps)");
    return idx;
}
}  // namespace

L2Result traj_l2(const sim::Trajectory& pred, const sim::Trajectory& gt,
                 const std::vector<double>& horizons_s, double fps) {
    if (pred.horizon() != gt.horizon()) throw std::invalid_argument("traj_l2: horizon mismatch");
    L2Result out;
    double acc = 0;
    for (double h : horizons_s) {
        const int i = horizon_row(h, fps, pred.horizon());
        const double dx = pred.rows[i].dx - gt.rows[i].dx;
        const double dy = pred.rows[i].dy - gt.rows[i].dy;
        const double d = std::sqrt(dx * dx + dy * dy);
        out.at_horizon.push_back(d);
        acc += d;
    }
    out.average = horizons_s.empty() ? 0.0 : acc / static_cast<double>(horizons_s.size());
    return out;
}

std::vector<double> collision_rate(const std::vector<sim::Trajectory>& preds,
                                   const std::vector<std::vector<sim::WorldState>>& state_slices,
                                   const std::vector<double>& horizons_s, double fps) {
    if (preds.size() != state_slices.size())
        throw std::invalid_argument("collision_rate: trajectory/state count mismatch");
    std::vector<double> rates;
    for (double h : horizons_s) {
        int hits = 0;
        for (size_t k = 0; k < preds.size(); ++k) {
            const int upto = horizon_row(h, fps, preds[k].horizon());
            const std::vector<bool> c = sim::collision_check(state_slices[k], preds[k]);
            bool any = false;
            for (int i = 0; i <= upto; ++i) any = any || c[i];
            hits += any ? 1 : 0;
        }
        rates.push_back(preds.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(preds.size()));
    }
    return rates;
}

std::vector<double> drift_curve(const std::vector<Tensor>& generated, const std::vector<Tensor>& truth) {
    if (generated.size() != truth.size() || generated.empty())
        throw std::invalid_argument("drift_curve: length mismatch");
    std::vector<double> out;
    for (size_t t = 0; t < generated.size(); ++t) {
        if (!generated[t].same_shape(truth[t])) throw std::invalid_argument("drift_curve: frame shape mismatch");
        double acc = 0;
        for (size_t i = 0; i < generated[t].data.size(); ++i) {
            const double d = static_cast<double>(generated[t].data[i]) - truth[t].data[i];
            acc += d * d;
        }
        out.push_back(acc / static_cast<double>(generated[t].data.size()));
    }
    return out;
}

double flicker(const std::vector<Tensor>& frames) {
    if (frames.size() < 2) throw std::invalid_argument("flicker: need at least 2 frames");
    double acc = 0;
    int64_t count = 0;
    for (size_t t = 1; t < frames.size(); ++t) {
        if (!frames[t].same_shape(frames[t - 1])) throw std::invalid_argument("flicker: frame shape mismatch");
        for (size_t i = 0; i < frames[t].data.size(); ++i)
            acc += std::abs(static_cast<double>(frames[t].data[i]) - frames[t - 1].data[i]);
        count += frames[t].numel();
    }
    return acc / static_cast<double>(count);
}

double excess_flicker(const std::vector<Tensor>& generated, const std::vector<Tensor>& truth) {
    return flicker(generated) - flicker(truth);
}

}  // namespace wm::metrics
