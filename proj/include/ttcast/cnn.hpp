#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/grid2d.hpp"

namespace ttcast {

// ---------------------------------------------------------------------------
// Didactic corridor CNN
//
// Fixed-size network over a 3x3 travel-time window (rows = segments 1..3,
// columns = intervals j-2, j-1, j): one 2x2 filter slid over the four valid
// positions with an untied bias per position, linear activations, and a
// 4-weight linear output unit. Small enough that every update rule is
// written out by hand and checkable against finite differences.
// ---------------------------------------------------------------------------

struct DidacticCnnParams {
    // Filter weights in the order w1..w4. Weight i pairs with the window cell
    // at (segment offset SEG_OFF[i], time offset TIME_OFF[i]) of each 2x2
    // patch; see didactic_forward.
    std::array<double, 4> filter{};
    std::array<double, 4> conv_biases{}; // untied: one bias per patch position
    std::array<double, 4> out_weights{};
    double out_bias = 0.0;
    double learning_rate = 0.01;

    static constexpr std::size_t parameter_count = 13;
};

namespace didactic {

// Pairing of the four filter weights within a 2x2 patch, and of the four
// hidden units over patch anchor positions. Both run segment-offset first:
// index 0 -> (+0 seg, +0 time), 1 -> (+1, +0), 2 -> (+0, +1), 3 -> (+1, +1).
inline constexpr std::size_t SEG_OFF[4] = {0, 1, 0, 1};
inline constexpr std::size_t TIME_OFF[4] = {0, 0, 1, 1};

} // namespace didactic

struct DidacticForward {
    double prediction = 0.0;       // T'
    std::array<double, 4> hidden{}; // h1..h4
};

inline DidacticForward didactic_forward(const Grid& window, const DidacticCnnParams& p) {
    if (window.rows() != 3 || window.cols() != 3)
        throw config_error("didactic model expects a 3x3 window");
    if (!window.all_finite())
        throw config_error("non-finite value in input window");

    DidacticForward out;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t a = didactic::SEG_OFF[k];  // patch anchor, segment axis
        const std::size_t b = didactic::TIME_OFF[k]; // patch anchor, time axis
        double h = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            h += p.filter[i] * window(a + didactic::SEG_OFF[i], b + didactic::TIME_OFF[i]);
        out.hidden[k] = h + p.conv_biases[k];
    }
    double pred = 0.0;
    for (std::size_t k = 0; k < 4; ++k) pred += p.out_weights[k] * out.hidden[k];
    out.prediction = pred + p.out_bias;
    return out;
}

// Squared-error loss F = (T' - T)^2 / 2.
inline double didactic_loss(double prediction, double target) {
    const double delta = prediction - target;
    return 0.5 * delta * delta;
}

// All thirteen partials of the loss at the current parameters. The residual
// delta = T' - T drives every term:
//   dF/dw2_k = delta * h_k            dF/db2   = delta
//   dF/dw1_i = delta * sum_k w2_k * (window cell paired with w1_i in patch k)
//   dF/db1_k = delta * w2_k
struct DidacticGradients {
    std::array<double, 4> filter{};
    std::array<double, 4> conv_biases{};
    std::array<double, 4> out_weights{};
    double out_bias = 0.0;
    double delta = 0.0;

    std::array<double, DidacticCnnParams::parameter_count> flat() const {
        return {filter[0],      filter[1],      filter[2],      filter[3],
                conv_biases[0], conv_biases[1], conv_biases[2], conv_biases[3],
                out_weights[0], out_weights[1], out_weights[2], out_weights[3],
                out_bias};
    }
};

inline DidacticGradients didactic_gradients(const Grid& window, double target,
                                            const DidacticCnnParams& p) {
    const DidacticForward fwd = didactic_forward(window, p);
    DidacticGradients g;
    g.delta = fwd.prediction - target;
    for (std::size_t k = 0; k < 4; ++k) {
        g.out_weights[k] = g.delta * fwd.hidden[k];
        g.conv_biases[k] = g.delta * p.out_weights[k];
    }
    g.out_bias = g.delta;
    for (std::size_t i = 0; i < 4; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            const std::size_t a = didactic::SEG_OFF[k];
            const std::size_t b = didactic::TIME_OFF[k];
            acc += p.out_weights[k] *
                   window(a + didactic::SEG_OFF[i], b + didactic::TIME_OFF[i]);
        }
        g.filter[i] = g.delta * acc;
    }
    return g;
}

// One stochastic gradient step. Every gradient is evaluated at the
// pre-update parameter values, then all thirteen parameters move at once.
inline DidacticCnnParams didactic_sgd_step(const Grid& window, double target,
                                           const DidacticCnnParams& p) {
    const DidacticGradients g = didactic_gradients(window, target, p);
    DidacticCnnParams next = p;
    for (std::size_t i = 0; i < 4; ++i) {
        next.filter[i] = p.filter[i] - p.learning_rate * g.filter[i];
        next.conv_biases[i] = p.conv_biases[i] - p.learning_rate * g.conv_biases[i];
        next.out_weights[i] = p.out_weights[i] - p.learning_rate * g.out_weights[i];
    }
    next.out_bias = p.out_bias - p.learning_rate * g.out_bias;

    bool finite = std::isfinite(next.out_bias);
    for (std::size_t i = 0; finite && i < 4; ++i)
        finite = std::isfinite(next.filter[i]) && std::isfinite(next.conv_biases[i]) &&
                 std::isfinite(next.out_weights[i]);
    if (!finite)
        throw divergence_error("didactic update diverged", 0);
    return next;
}

struct DidacticTrainResult {
    DidacticCnnParams params;
    std::vector<double> epoch_mean_loss;
};

// Per-sample updates in the given sample order, one pass per epoch.
inline DidacticTrainResult didactic_train(const std::vector<TrainingSample>& samples,
                                          const DidacticCnnParams& initial, long epochs) {
    if (samples.empty())
        throw data_error("no training samples");
    DidacticTrainResult result;
    result.params = initial;
    for (long epoch = 0; epoch < epochs; ++epoch) {
        double loss_sum = 0.0;
        for (const auto& s : samples) {
            try {
                result.params = didactic_sgd_step(s.window, s.target, result.params);
            } catch (const divergence_error&) {
                throw divergence_error("didactic training diverged", epoch);
            }
            loss_sum += didactic_loss(didactic_forward(s.window, result.params).prediction,
                                      s.target);
        }
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(samples.size()));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Generic building blocks
// ---------------------------------------------------------------------------

enum class BiasMode { Shared, Untied };

// Valid 2x2 cross-correlation: the kernel (row-major k00,k01,k10,k11) is
// applied only at positions fully inside the input, so the output shrinks by
// one along each axis. Untied mode consumes one bias per output position in
// row-major order; shared mode consumes a single bias.
inline Grid conv2d_valid(const Grid& input, const std::array<double, 4>& kernel,
                         std::span<const double> biases, BiasMode mode) {
    if (input.rows() < 2 || input.cols() < 2)
        throw config_error("conv2d_valid needs at least a 2x2 input");
    const std::size_t out_r = input.rows() - 1, out_c = input.cols() - 1;
    const std::size_t want = mode == BiasMode::Shared ? 1 : out_r * out_c;
    if (biases.size() != want)
        throw config_error("bias count does not match bias mode");

    Grid out(out_r, out_c);
    for (std::size_t r = 0; r < out_r; ++r) {
        for (std::size_t c = 0; c < out_c; ++c) {
            double acc = kernel[0] * input(r, c) + kernel[1] * input(r, c + 1) +
                         kernel[2] * input(r + 1, c) + kernel[3] * input(r + 1, c + 1);
            acc += mode == BiasMode::Shared ? biases[0] : biases[r * out_c + c];
            out(r, c) = acc;
        }
    }
    return out;
}

enum class PoolMode { Max, Mean };

// 2x2 pooling with stride 2. Odd extents are handled by edge replication:
// the out-of-range row/column of the last block reuses the edge cell, which
// then contributes twice to a mean block.
inline Grid pool(const Grid& input, PoolMode mode) {
    if (input.rows() == 0 || input.cols() == 0)
        throw config_error("cannot pool an empty grid");
    const std::size_t out_r = (input.rows() + 1) / 2, out_c = (input.cols() + 1) / 2;
    Grid out(out_r, out_c);
    for (std::size_t r = 0; r < out_r; ++r) {
        for (std::size_t c = 0; c < out_c; ++c) {
            double acc = mode == PoolMode::Max ? -std::numeric_limits<double>::infinity()
                                               : 0.0;
            for (std::size_t dr = 0; dr < 2; ++dr) {
                for (std::size_t dc = 0; dc < 2; ++dc) {
                    const std::size_t rr = std::min(2 * r + dr, input.rows() - 1);
                    const std::size_t cc = std::min(2 * c + dc, input.cols() - 1);
                    if (mode == PoolMode::Max)
                        acc = std::max(acc, input(rr, cc));
                    else
                        acc += 0.25 * input(rr, cc);
                }
            }
            out(r, c) = acc;
        }
    }
    return out;
}

} // namespace ttcast
