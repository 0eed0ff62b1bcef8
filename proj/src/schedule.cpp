#include "noisemix/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace noisemix {

ImageGrid::ImageGrid(int w, int h, double fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("ImageGrid: dimensions must be positive");
    values.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

ImageGrid::ImageGrid(int w, int h, std::vector<double> v) : width(w), height(h), values(std::move(v)) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("ImageGrid: dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
        throw std::invalid_argument("ImageGrid: value count does not match dimensions");
}

bool ImageGrid::all_finite() const noexcept {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": grid dimensions differ (" +
                                    std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
}

Schedule::Schedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2) throw std::invalid_argument("Schedule: need at least one step");
    if (alpha_bar_.front() != 1.0) throw std::invalid_argument("Schedule: alpha_bar_0 must be 1");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] < alpha_bar_[t - 1]))
            throw std::invalid_argument("Schedule: alpha_bar must be positive and strictly decreasing");
    }
    signal_.reserve(alpha_bar_.size());
    noise_.reserve(alpha_bar_.size());
    for (double ab : alpha_bar_) {
        signal_.push_back(std::sqrt(ab));
        noise_.push_back(std::sqrt(1.0 - ab));
    }
}

Schedule make_cosine_schedule(int num_steps) {
    if (num_steps < 2) throw std::invalid_argument("make_cosine_schedule: T must be at least 2");
    const double s = kCosineOffset;
    const double T = static_cast<double>(num_steps);
    auto raw = [&](int t) {
        const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    const double norm = raw(0);

    std::vector<double> ab(static_cast<std::size_t>(num_steps) + 1);
    int last_raw = num_steps;
    for (int t = 0; t <= num_steps; ++t) {
        const double v = std::min(raw(t) / norm, 1.0);
        ab[t] = v;
        if (v < kAlphaBarFloor && last_raw == num_steps) last_raw = t - 1;
    }
    ab[0] = 1.0;
    ab[num_steps] = std::max(ab[num_steps], kAlphaBarFloor);
    if (last_raw < num_steps) {
        // Tail under the floor: geometric fill from ab[last_raw] down to the floor.
        const double lo = std::log(kAlphaBarFloor);
        const double hi = std::log(ab[last_raw]);
        const int span = num_steps - last_raw;
        for (int t = last_raw + 1; t < num_steps; ++t)
            ab[t] = std::exp(hi + (lo - hi) * (t - last_raw) / span);
        ab[num_steps] = kAlphaBarFloor;
    }
    return Schedule(std::move(ab));
}

ImageGrid forward_noise(const ImageGrid& x0, const ImageGrid& eps, int t, const Schedule& sched) {
    require_same_shape(x0, eps, "forward_noise");
    if (t < 0 || t > sched.num_steps()) throw std::invalid_argument("forward_noise: step out of range");
    const double a = sched.signal(t);
    const double sigma = sched.noise(t);
    ImageGrid out = x0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + sigma * eps[i];
    return out;
}

ImageGrid cfg_combine(const ImageGrid& eps_cond, const ImageGrid& eps_uncond, double scale) {
    require_same_shape(eps_cond, eps_uncond, "cfg_combine");
    ImageGrid out = eps_uncond;
    // Written as (1 - s) * u + s * c so that s = 1 and s = 0 reproduce the inputs bit-exactly.
    const double keep = 1.0 - scale;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * eps_uncond[i] + scale * eps_cond[i];
    return out;
}

}  // namespace noisemix
