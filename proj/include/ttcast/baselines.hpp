#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/grid2d.hpp"
#include "ttcast/linalg.hpp"

namespace ttcast {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Shared settings for the gradient-descent trainers. All training here is
// full batch: one parameter update per epoch from the mean loss gradient.
struct GdConfig {
    double learning_rate = 0.5;
    long epochs = 2000;
    std::uint64_t seed = 1;
};

// Mean loss per epoch, recorded by the trainers.
struct FitTrace {
    std::vector<double> mean_loss;
};

namespace detail {

inline std::vector<double> flatten(const Grid& window) {
    return window.data();
}

inline void init_uniform(std::vector<double>& params, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& p : params) p = dist(rng);
}

inline void check_shape(std::size_t weights, std::size_t window) {
    if (weights != window)
        throw config_error("window size does not match model weight count");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Unweighted average
// ---------------------------------------------------------------------------

// Plain mean of the target segment's history; the no-neighbors baseline.
inline double predict_unweighted_average(std::span<const double> history) {
    if (history.empty())
        throw data_error("empty history");
    double sum = 0.0;
    for (double v : history) sum += v;
    return sum / static_cast<double>(history.size());
}

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

struct LinearModel {
    std::vector<double> weights; // one per flattened window cell
    double bias = 0.0;
};

// Ordinary least squares on flattened windows, solved in closed form via the
// normal equations. A tiny ridge term keeps duplicate-column designs
// solvable.
inline LinearModel fit_linear(const std::vector<TrainingSample>& samples,
                              double ridge = 1e-8) {
    if (samples.empty())
        throw data_error("no training samples");
    const std::size_t d = samples.front().window.size();
    const std::size_t p = d + 1; // weights + bias
    if (samples.size() < p)
        throw config_error("underdetermined linear fit: need at least " +
                           std::to_string(p) + " samples");

    // Normal equations X^T X beta = X^T y with the bias as a trailing
    // all-ones column.
    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    std::vector<double> row(p, 1.0);
    for (const auto& s : samples) {
        if (s.window.size() != d)
            throw config_error("inconsistent window shapes in training set");
        const auto& w = s.window.data();
        for (std::size_t i = 0; i < d; ++i) row[i] = w[i];
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = i; j < p; ++j) xtx[i * p + j] += row[i] * row[j];
            xty[i] += row[i] * s.target;
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < i; ++j) xtx[i * p + j] = xtx[j * p + i];
        xtx[i * p + i] += ridge;
    }
    std::vector<double> beta = solve_dense(std::move(xtx), std::move(xty), p);

    LinearModel model;
    model.weights.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(d));
    model.bias = beta[d];
    return model;
}

inline double predict_linear(const LinearModel& model, const Grid& window) {
    detail::check_shape(model.weights.size(), window.size());
    double acc = model.bias;
    const auto& w = window.data();
    for (std::size_t i = 0; i < w.size(); ++i) acc += model.weights[i] * w[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Logistic regression (as a bounded regressor)
// ---------------------------------------------------------------------------

// A sigmoid over raw travel times would saturate at 1, so this model works
// on min-max normalized targets and denormalizes its predictions.
struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    NormalizationParams normalization;
};

inline double predict_logistic_normalized(const LogisticModel& model, const Grid& window) {
    detail::check_shape(model.weights.size(), window.size());
    double acc = model.bias;
    const auto& w = window.data();
    for (std::size_t i = 0; i < w.size(); ++i) acc += model.weights[i] * w[i];
    return sigmoid(acc);
}

inline double predict_logistic(const LogisticModel& model, const Grid& window) {
    return model.normalization.denormalize(predict_logistic_normalized(model, window));
}

// Mean squared-error loss and its gradient at the given parameters, over
// normalized samples. Parameter order: weights then bias.
inline double logistic_gradients(const LogisticModel& model,
                                 const std::vector<TrainingSample>& samples,
                                 std::vector<double>& grad) {
    const std::size_t d = model.weights.size();
    grad.assign(d + 1, 0.0);
    double loss = 0.0;
    for (const auto& s : samples) {
        const double out = predict_logistic_normalized(model, s.window);
        const double delta = out - s.target;
        loss += 0.5 * delta * delta;
        const double dpre = delta * out * (1.0 - out);
        const auto& w = s.window.data();
        for (std::size_t i = 0; i < d; ++i) grad[i] += dpre * w[i];
        grad[d] += dpre;
    }
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (double& g : grad) g *= inv_n;
    return loss * inv_n;
}

inline LogisticModel fit_logistic(const std::vector<TrainingSample>& samples,
                                  const NormalizationParams& normalization,
                                  const GdConfig& config, FitTrace* trace = nullptr) {
    if (samples.empty())
        throw data_error("no training samples");
    normalization.validate();

    LogisticModel model;
    model.normalization = normalization;
    model.weights.assign(samples.front().window.size(), 0.0);
    std::mt19937_64 rng(config.seed);
    detail::init_uniform(model.weights, rng);
    model.bias = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);

    std::vector<double> grad;
    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = logistic_gradients(model, samples, grad);
        if (!std::isfinite(loss))
            throw divergence_error("logistic training diverged", epoch);
        if (trace) trace->mean_loss.push_back(loss);
        for (std::size_t i = 0; i < model.weights.size(); ++i)
            model.weights[i] -= config.learning_rate * grad[i];
        model.bias -= config.learning_rate * grad.back();
    }
    return model;
}

// ---------------------------------------------------------------------------
// Fully-connected network with one hidden layer
// ---------------------------------------------------------------------------

// The classic small net this corridor model is compared against: sigmoid
// hidden layer (two units by default) and a sigmoid output unit, trained by
// full-batch gradient descent on normalized data.
struct MlpModel {
    std::size_t input_size = 0;
    std::size_t hidden_count = 2;
    std::vector<double> hidden_weights; // [hidden][input], row-major
    std::vector<double> hidden_biases;  // [hidden]
    std::vector<double> output_weights; // [hidden]
    double output_bias = 0.0;
    NormalizationParams normalization;

    std::size_t parameter_count() const {
        return hidden_count * input_size + hidden_count + hidden_count + 1;
    }
};

inline double mlp_forward_normalized(const MlpModel& model, const Grid& window,
                                     std::vector<double>* hidden_out = nullptr) {
    detail::check_shape(model.input_size, window.size());
    const auto& x = window.data();
    std::vector<double> hidden(model.hidden_count);
    for (std::size_t k = 0; k < model.hidden_count; ++k) {
        double acc = model.hidden_biases[k];
        const double* wrow = model.hidden_weights.data() + k * model.input_size;
        for (std::size_t i = 0; i < model.input_size; ++i) acc += wrow[i] * x[i];
        hidden[k] = sigmoid(acc);
    }
    double acc = model.output_bias;
    for (std::size_t k = 0; k < model.hidden_count; ++k)
        acc += model.output_weights[k] * hidden[k];
    if (hidden_out) *hidden_out = std::move(hidden);
    return sigmoid(acc);
}

inline double mlp_forward(const MlpModel& model, const Grid& window) {
    return model.normalization.denormalize(mlp_forward_normalized(model, window));
}

// Mean loss and gradient, flat parameter order: hidden_weights row-major,
// hidden_biases, output_weights, output_bias.
inline double mlp_gradients(const MlpModel& model,
                            const std::vector<TrainingSample>& samples,
                            std::vector<double>& grad) {
    const std::size_t d = model.input_size, h = model.hidden_count;
    grad.assign(model.parameter_count(), 0.0);
    double* g_hw = grad.data();
    double* g_hb = g_hw + h * d;
    double* g_ow = g_hb + h;
    double* g_ob = g_ow + h;

    double loss = 0.0;
    std::vector<double> hidden;
    for (const auto& s : samples) {
        const double out = mlp_forward_normalized(model, s.window, &hidden);
        const double delta = out - s.target;
        loss += 0.5 * delta * delta;
        const double dpre_out = delta * out * (1.0 - out);
        *g_ob += dpre_out;
        const auto& x = s.window.data();
        for (std::size_t k = 0; k < h; ++k) {
            g_ow[k] += dpre_out * hidden[k];
            const double dpre_h =
                dpre_out * model.output_weights[k] * hidden[k] * (1.0 - hidden[k]);
            g_hb[k] += dpre_h;
            double* row = g_hw + k * d;
            for (std::size_t i = 0; i < d; ++i) row[i] += dpre_h * x[i];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (double& g : grad) g *= inv_n;
    return loss * inv_n;
}

inline MlpModel mlp_train(const std::vector<TrainingSample>& samples,
                          const NormalizationParams& normalization,
                          const GdConfig& config, std::size_t hidden_count = 2,
                          FitTrace* trace = nullptr) {
    if (samples.empty())
        throw data_error("no training samples");
    if (hidden_count == 0)
        throw config_error("hidden layer needs at least one unit");
    normalization.validate();

    MlpModel model;
    model.normalization = normalization;
    model.input_size = samples.front().window.size();
    model.hidden_count = hidden_count;
    model.hidden_weights.assign(hidden_count * model.input_size, 0.0);
    model.hidden_biases.assign(hidden_count, 0.0);
    model.output_weights.assign(hidden_count, 0.0);

    std::mt19937_64 rng(config.seed);
    detail::init_uniform(model.hidden_weights, rng);
    detail::init_uniform(model.hidden_biases, rng);
    detail::init_uniform(model.output_weights, rng);
    model.output_bias = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);

    std::vector<double> grad;
    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = mlp_gradients(model, samples, grad);
        if (!std::isfinite(loss))
            throw divergence_error("network training diverged", epoch);
        if (trace) trace->mean_loss.push_back(loss);
        std::size_t idx = 0;
        for (double& w : model.hidden_weights) w -= config.learning_rate * grad[idx++];
        for (double& b : model.hidden_biases) b -= config.learning_rate * grad[idx++];
        for (double& w : model.output_weights) w -= config.learning_rate * grad[idx++];
        model.output_bias -= config.learning_rate * grad[idx];
    }
    return model;
}

} // namespace ttcast
