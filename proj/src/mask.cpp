#include "noisemix/mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace noisemix {

int SoftLabel::argmax() const {
    if (probs.empty()) throw std::invalid_argument("SoftLabel::argmax: empty label");
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

bool SoftLabel::on_simplex(double tol) const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

SoftLabel SoftLabel::one_hot(int class_id, int num_classes) {
    if (num_classes < 1 || class_id < 0 || class_id >= num_classes)
        throw std::invalid_argument("one_hot: class index out of range");
    SoftLabel y{std::vector<double>(static_cast<std::size_t>(num_classes), 0.0)};
    y.probs[static_cast<std::size_t>(class_id)] = 1.0;
    return y;
}

SoftLabel blend_labels(const SoftLabel& a, const SoftLabel& b, double lambda) {
    if (a.probs.size() != b.probs.size()) throw std::invalid_argument("blend_labels: label sizes differ");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("blend_labels: lambda outside [0, 1]");
    SoftLabel out{std::vector<double>(a.probs.size())};
    const double rest = 1.0 - lambda;
    for (std::size_t k = 0; k < out.probs.size(); ++k) out.probs[k] = lambda * a.probs[k] + rest * b.probs[k];
    return out;
}

SoftLabel mix_labels(int y_a, int y_b, double lambda_real, int num_classes) {
    if (y_a < 0 || y_b < 0 || y_a >= num_classes || y_b >= num_classes)
        throw std::invalid_argument("mix_labels: class index out of range");
    if (!(lambda_real >= 0.0 && lambda_real <= 1.0))
        throw std::invalid_argument("mix_labels: lambda outside [0, 1]");
    if (y_a == y_b) return SoftLabel::one_hot(y_a, num_classes);
    SoftLabel y{std::vector<double>(static_cast<std::size_t>(num_classes), 0.0)};
    y.probs[static_cast<std::size_t>(y_a)] = lambda_real;
    y.probs[static_cast<std::size_t>(y_b)] = 1.0 - lambda_real;
    return y;
}

double sample_log_gamma(double shape, Rng& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw std::invalid_argument("sample_gamma: shape must be positive");
    if (shape < 1.0) {
        // G(a) = G(a + 1) * U^(1/a)
        return sample_log_gamma(shape + 1.0, rng) + std::log(rng.uniform_open0()) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open0();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
}

double sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("sample_lambda: alpha must be positive");
    const double lg1 = sample_log_gamma(alpha, rng);
    const double lg2 = sample_log_gamma(alpha, rng);
    // G1 / (G1 + G2) = 1 / (1 + exp(lg2 - lg1))
    return 1.0 / (1.0 + std::exp(lg2 - lg1));
}

std::size_t MaskSpec::zero_count() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

double realized_lambda(std::size_t zeros, int width, int height) noexcept {
    return 1.0 - static_cast<double>(zeros) / (static_cast<double>(width) * static_cast<double>(height));
}

MaskSpec mask_from_cells(int width, int height, int col_begin, int col_end, int row_begin, int row_end,
                         double lambda_sampled) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("mask: dimensions must be positive");
    col_begin = std::clamp(col_begin, 0, width);
    col_end = std::clamp(col_end, col_begin, width);
    row_begin = std::clamp(row_begin, 0, height);
    row_end = std::clamp(row_end, row_begin, height);

    MaskSpec m;
    m.width = width;
    m.height = height;
    m.lambda_sampled = lambda_sampled;
    m.rect.center_x = 0.5 * (col_begin + col_end);
    m.rect.center_y = 0.5 * (row_begin + row_end);
    m.rect.width = col_end - col_begin;
    m.rect.height = row_end - row_begin;
    m.rect.col_begin = col_begin;
    m.rect.col_end = col_end;
    m.rect.row_begin = row_begin;
    m.rect.row_end = row_end;
    m.mask.assign(static_cast<std::size_t>(width) * height, 1);
    for (int y = row_begin; y < row_end; ++y)
        for (int x = col_begin; x < col_end; ++x) m.mask[static_cast<std::size_t>(y) * width + x] = 0;
    m.lambda_real = realized_lambda(m.zero_count(), width, height);
    return m;
}

MaskSpec full_mask(int width, int height) { return mask_from_cells(width, height, 0, 0, 0, 0, 1.0); }

namespace {

// Cells whose centers (i + 0.5) lie in [lo, hi).
std::pair<int, int> covered_range(double lo, double hi, int n) {
    int begin = static_cast<int>(std::ceil(lo - 0.5));
    int end = static_cast<int>(std::ceil(hi - 0.5));
    begin = std::clamp(begin, 0, n);
    end = std::clamp(end, begin, n);
    return {begin, end};
}

}  // namespace

MaskSpec sample_mask(int width, int height, double lambda, Rng& rng) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("sample_mask: dimensions must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("sample_mask: lambda outside [0, 1]");
    const double cx = rng.uniform() * width;
    const double cy = rng.uniform() * height;
    const double cut = std::sqrt(1.0 - lambda);
    const double rw = width * cut;
    const double rh = height * cut;

    const auto [c0, c1] = covered_range(cx - rw / 2.0, cx + rw / 2.0, width);
    const auto [r0, r1] = covered_range(cy - rh / 2.0, cy + rh / 2.0, height);
    MaskSpec m = mask_from_cells(width, height, c0, c1, r0, r1, lambda);
    m.rect.center_x = cx;
    m.rect.center_y = cy;
    m.rect.width = rw;
    m.rect.height = rh;
    return m;
}

}  // namespace noisemix
