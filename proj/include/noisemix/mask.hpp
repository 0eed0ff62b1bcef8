#pragma once

#include <cstdint>
#include <vector>

#include "noisemix/rng.hpp"

namespace noisemix {

/// Probability vector over K classes.
struct SoftLabel {
    std::vector<double> probs;

    int num_classes() const noexcept { return static_cast<int>(probs.size()); }
    /// Index of the largest entry; ties resolve to the lowest index.
    int argmax() const;
    bool on_simplex(double tol = 1e-12) const;

    static SoftLabel one_hot(int class_id, int num_classes);

    friend bool operator==(const SoftLabel&, const SoftLabel&) = default;
};

/// lambda * a + (1 - lambda) * b for two labels over the same classes.
SoftLabel blend_labels(const SoftLabel& a, const SoftLabel& b, double lambda);

/// Area-weighted label: one_hot(y_a) * lambda + one_hot(y_b) * (1 - lambda).
/// Identical classes collapse to an exact one-hot vector.
SoftLabel mix_labels(int y_a, int y_b, double lambda_real, int num_classes);

/// Gamma(shape, 1) variate by Marsaglia-Tsang, boosted for shape < 1. Returned
/// as a log so that tiny variates at small shapes do not underflow.
double sample_log_gamma(double shape, Rng& rng);

/// Beta(alpha, alpha) variate as G1 / (G1 + G2).
double sample_lambda(double alpha, Rng& rng);

/// Cut rectangle: sampled center and size, and the covered cell ranges after
/// clipping to the grid ([col_begin, col_end) x [row_begin, row_end)).
struct CutRect {
    double center_x = 0.0;
    double center_y = 0.0;
    double width = 0.0;
    double height = 0.0;
    int col_begin = 0;
    int col_end = 0;
    int row_begin = 0;
    int row_end = 0;

    int covered_cells() const noexcept { return (col_end - col_begin) * (row_end - row_begin); }
};

/// Binary mixing mask. mask[y * width + x] is 1 where the first source is kept
/// and 0 inside the cut rectangle.
struct MaskSpec {
    int width = 0;
    int height = 0;
    double lambda_sampled = 1.0;
    CutRect rect;
    std::vector<std::uint8_t> mask;
    double lambda_real = 1.0;

    std::size_t zero_count() const noexcept;
};

/// Mask whose zero cells are exactly the given cell ranges. Also used to force
/// specific masks in tests and experiments.
MaskSpec mask_from_cells(int width, int height, int col_begin, int col_end, int row_begin, int row_end,
                         double lambda_sampled = 1.0);

/// All-ones mask (lambda_real = 1).
MaskSpec full_mask(int width, int height);

/// Samples the rectangle center uniformly, sizes it W*sqrt(1-lambda) by
/// H*sqrt(1-lambda), clips it to the grid and zeroes every cell whose center
/// falls inside. lambda_real is recomputed from the realized zero area.
MaskSpec sample_mask(int width, int height, double lambda, Rng& rng);

/// 1 - zeros / (W * H).
double realized_lambda(std::size_t zeros, int width, int height) noexcept;

}  // namespace noisemix
