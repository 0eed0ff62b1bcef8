#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace noisemix {

/// Single-channel W x H grid of reals, row-major (index = y * width + x).
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0);
    ImageGrid(int w, int h, std::vector<double> v);

    std::size_t size() const noexcept { return values.size(); }
    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool same_shape(const ImageGrid& other) const noexcept {
        return width == other.width && height == other.height;
    }
    bool all_finite() const noexcept;

    friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

/// Throws std::invalid_argument naming `what` when the grids differ in shape.
void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what);

/// Discrete variance-preserving schedule. alpha_bar[t] is the cumulative signal
/// retention at step t, with alpha_bar[0] = 1 and strictly decreasing values.
class Schedule {
public:
    explicit Schedule(std::vector<double> alpha_bar);

    int num_steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    /// Signal scale sqrt(alpha_bar_t).
    double signal(int t) const { return signal_.at(static_cast<std::size_t>(t)); }
    /// Noise scale sqrt(1 - alpha_bar_t).
    double noise(int t) const { return noise_.at(static_cast<std::size_t>(t)); }
    std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

private:
    std::vector<double> alpha_bar_;
    std::vector<double> signal_;
    std::vector<double> noise_;
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kAlphaBarFloor = 1e-5;

/// Cosine schedule cos^2(((t/T + s)/(1 + s)) * pi/2), normalized so that
/// alpha_bar_0 = 1 and floored at kAlphaBarFloor. Steps whose raw value falls
/// under the floor are filled log-linearly between the last raw value and the
/// floor at t = T, which keeps the sequence strictly decreasing.
Schedule make_cosine_schedule(int num_steps);

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
ImageGrid forward_noise(const ImageGrid& x0, const ImageGrid& eps, int t, const Schedule& sched);

/// Classifier-free guidance: eps_uncond + scale * (eps_cond - eps_uncond).
ImageGrid cfg_combine(const ImageGrid& eps_cond, const ImageGrid& eps_uncond, double scale);

}  // namespace noisemix
