#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ttcast/baselines.hpp"
#include "ttcast/cnn.hpp"
#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/grid2d.hpp"

namespace ttcast {

enum class PoolingSpec { None, Max, Mean };

// ---------------------------------------------------------------------------
// Configurable corridor CNN
//
// A stack of valid 2x2 convolution layers (one shared bias per filter,
// sigmoid activations), an optional 2x2 pooling layer, then fully-connected
// sigmoid hidden layers and a single linear output unit on the normalized
// scale. Gradients are derived by hand layer by layer; the test suite pins
// every one of them against central finite differences.
// ---------------------------------------------------------------------------

struct GeneralCnnConfig {
    std::vector<std::size_t> conv_filters = {4, 8}; // filter count per conv layer
    PoolingSpec pooling = PoolingSpec::None;
    std::vector<std::size_t> hidden_widths = {16, 16, 8};
    double learning_rate = 1.0;
    long epochs = 3000;
    std::uint64_t seed = 1;
};

// Multi-channel 2x2 conv layer: weights[f][c][dr][dc] flattened with dr, dc
// fastest, i.e. index = ((f * in_channels + c) * 2 + dr) * 2 + dc.
struct Conv2x2Layer {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::vector<double> weights; // out_channels * in_channels * 4
    std::vector<double> biases;  // out_channels, shared across positions

    std::size_t parameter_count() const { return weights.size() + biases.size(); }
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights; // [out][in] row-major
    std::vector<double> biases;  // [out]

    std::size_t parameter_count() const { return weights.size() + biases.size(); }
};

struct GeneralCnnModel {
    std::size_t input_rows = 0; // x segments
    std::size_t input_cols = 0; // y+1 intervals
    std::vector<Conv2x2Layer> conv;
    PoolingSpec pooling = PoolingSpec::None;
    std::vector<DenseLayer> hidden; // sigmoid
    DenseLayer output;              // single linear unit
    NormalizationParams normalization;

    std::size_t parameter_count() const {
        std::size_t n = output.parameter_count();
        for (const auto& l : conv) n += l.parameter_count();
        for (const auto& l : hidden) n += l.parameter_count();
        return n;
    }
};

namespace detail {

inline void conv_shape_after(std::size_t n_layers, std::size_t rows, std::size_t cols,
                             std::size_t& out_rows, std::size_t& out_cols) {
    if (rows < n_layers + 1 || cols < n_layers + 1)
        throw config_error("window too small to survive the convolution stack");
    out_rows = rows - n_layers;
    out_cols = cols - n_layers;
}

} // namespace detail

inline GeneralCnnModel make_general_cnn(std::size_t input_rows, std::size_t input_cols,
                                        const GeneralCnnConfig& config,
                                        const NormalizationParams& normalization) {
    if (config.conv_filters.empty())
        throw config_error("need at least one convolution layer");
    std::size_t fm_rows, fm_cols;
    detail::conv_shape_after(config.conv_filters.size(), input_rows, input_cols, fm_rows,
                             fm_cols);
    normalization.validate();

    GeneralCnnModel model;
    model.input_rows = input_rows;
    model.input_cols = input_cols;
    model.pooling = config.pooling;
    model.normalization = normalization;

    std::size_t channels = 1;
    for (std::size_t f : config.conv_filters) {
        if (f == 0) throw config_error("conv layer needs at least one filter");
        Conv2x2Layer layer;
        layer.in_channels = channels;
        layer.out_channels = f;
        layer.weights.assign(f * channels * 4, 0.0);
        layer.biases.assign(f, 0.0);
        model.conv.push_back(std::move(layer));
        channels = f;
    }
    if (config.pooling != PoolingSpec::None) {
        fm_rows = (fm_rows + 1) / 2;
        fm_cols = (fm_cols + 1) / 2;
    }

    std::size_t width = channels * fm_rows * fm_cols;
    for (std::size_t w : config.hidden_widths) {
        if (w == 0) throw config_error("hidden layer needs at least one unit");
        DenseLayer layer;
        layer.in = width;
        layer.out = w;
        layer.weights.assign(w * width, 0.0);
        layer.biases.assign(w, 0.0);
        model.hidden.push_back(std::move(layer));
        width = w;
    }
    model.output.in = width;
    model.output.out = 1;
    model.output.weights.assign(width, 0.0);
    model.output.biases.assign(1, 0.0);

    std::mt19937_64 rng(config.seed);
    for (auto& l : model.conv) {
        detail::init_uniform(l.weights, rng);
        detail::init_uniform(l.biases, rng);
    }
    for (auto& l : model.hidden) {
        detail::init_uniform(l.weights, rng);
        detail::init_uniform(l.biases, rng);
    }
    detail::init_uniform(model.output.weights, rng);
    detail::init_uniform(model.output.biases, rng);
    return model;
}

// Forward activations kept for the backward pass.
struct GeneralForwardCache {
    std::vector<std::vector<Grid>> conv_act; // per layer, per channel, post-sigmoid
    std::vector<Grid> pooled;                // post-pool feature maps (empty if no pooling)
    std::vector<double> flat;                // flattened input to the dense stack
    std::vector<std::vector<double>> fc_act; // per hidden layer, post-sigmoid
    double output = 0.0;                     // normalized-scale prediction
};

inline double general_forward(const GeneralCnnModel& model, const Grid& window,
                              GeneralForwardCache* cache = nullptr) {
    if (window.rows() != model.input_rows || window.cols() != model.input_cols)
        throw config_error("window shape does not match model input");

    GeneralForwardCache local;
    GeneralForwardCache& c = cache ? *cache : local;

    // Cache storage is reused across calls and reallocated only on a shape
    // change, so the per-epoch training loop runs without heap traffic.
    c.conv_act.resize(model.conv.size());
    std::size_t rows = model.input_rows;
    std::size_t cols = model.input_cols;
    for (std::size_t li = 0; li < model.conv.size(); ++li) {
        const Conv2x2Layer& layer = model.conv[li];
        const std::size_t out_r = rows - 1;
        const std::size_t out_c = cols - 1;
        std::vector<Grid>& outs = c.conv_act[li];
        outs.resize(layer.out_channels);
        for (std::size_t f = 0; f < layer.out_channels; ++f) {
            if (outs[f].rows() != out_r || outs[f].cols() != out_c)
                outs[f] = Grid(out_r, out_c);
            Grid& z = outs[f];
            std::fill(z.data().begin(), z.data().end(), layer.biases[f]);
            for (std::size_t ch = 0; ch < layer.in_channels; ++ch) {
                const double* k = layer.weights.data() + (f * layer.in_channels + ch) * 4;
                const Grid& in = li == 0 ? window : c.conv_act[li - 1][ch];
                for (std::size_t r = 0; r < out_r; ++r)
                    for (std::size_t cc = 0; cc < out_c; ++cc)
                        z(r, cc) += k[0] * in(r, cc) + k[1] * in(r, cc + 1) +
                                    k[2] * in(r + 1, cc) + k[3] * in(r + 1, cc + 1);
            }
            for (double& v : z.data()) v = sigmoid(v);
        }
        rows = out_r;
        cols = out_c;
    }

    if (model.conv.empty())
        throw config_error("model has no convolution layers");
    const std::vector<Grid>& maps = c.conv_act.back();
    if (model.pooling != PoolingSpec::None) {
        c.pooled.resize(maps.size());
        for (std::size_t i = 0; i < maps.size(); ++i)
            c.pooled[i] =
                pool(maps[i], model.pooling == PoolingSpec::Max ? PoolMode::Max : PoolMode::Mean);
    } else {
        c.pooled.clear();
    }
    const std::vector<Grid>& flat_src = model.pooling != PoolingSpec::None ? c.pooled : maps;
    std::size_t flat_n = 0;
    for (const Grid& g : flat_src) flat_n += g.size();
    c.flat.resize(flat_n);
    {
        std::size_t pos = 0;
        for (const Grid& g : flat_src)
            for (double v : g.data()) c.flat[pos++] = v;
    }

    c.fc_act.resize(model.hidden.size());
    const std::vector<double>* src = &c.flat;
    for (std::size_t li = 0; li < model.hidden.size(); ++li) {
        const DenseLayer& layer = model.hidden[li];
        std::vector<double>& dst = c.fc_act[li];
        dst.resize(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double acc = layer.biases[o];
            const double* wrow = layer.weights.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) acc += wrow[i] * (*src)[i];
            dst[o] = sigmoid(acc);
        }
        src = &dst;
    }

    double out = model.output.biases[0];
    for (std::size_t i = 0; i < model.output.in; ++i)
        out += model.output.weights[i] * (*src)[i];
    c.output = out;
    return out;
}

// Gradient of the mean squared-error loss over `samples`, laid out flat:
// conv layers (weights then biases, in order), hidden layers (weights then
// biases), output weights, output bias. Returns the mean loss.
inline double general_gradients(const GeneralCnnModel& model,
                                const std::vector<TrainingSample>& samples,
                                std::vector<double>& grad) {
    grad.assign(model.parameter_count(), 0.0);
    if (samples.empty())
        throw data_error("no training samples");

    // Flat-gradient section offsets.
    std::vector<std::size_t> conv_off, hidden_off;
    std::size_t off = 0;
    for (const auto& l : model.conv) {
        conv_off.push_back(off);
        off += l.parameter_count();
    }
    for (const auto& l : model.hidden) {
        hidden_off.push_back(off);
        off += l.parameter_count();
    }
    const std::size_t out_off = off;

    double loss = 0.0;
    GeneralForwardCache cache;

    // Per-sample scratch, sized once up front and reused for every sample so
    // the epoch loop stays free of heap traffic. dmap_buf[li] holds the loss
    // gradient with respect to conv layer li's output maps.
    std::vector<double> dact(model.output.in);
    std::vector<std::vector<double>> fc_din(model.hidden.size());
    for (std::size_t li = 0; li < model.hidden.size(); ++li)
        fc_din[li].resize(model.hidden[li].in);
    std::vector<double> dpre;
    std::vector<std::vector<Grid>> dmap_buf(model.conv.size());
    {
        std::size_t r = model.input_rows, c2 = model.input_cols;
        for (std::size_t li = 0; li < model.conv.size(); ++li) {
            --r;
            --c2;
            dmap_buf[li].assign(model.conv[li].out_channels, Grid(r, c2));
        }
    }
    std::vector<Grid> pool_din;
    if (model.pooling != PoolingSpec::None) {
        const std::size_t fr = dmap_buf.back().front().rows();
        const std::size_t fc = dmap_buf.back().front().cols();
        pool_din.assign(model.conv.back().out_channels,
                        Grid((fr + 1) / 2, (fc + 1) / 2));
    }

    for (const auto& s : samples) {
        const double pred = general_forward(model, s.window, &cache);
        const double delta = pred - s.target;
        loss += 0.5 * delta * delta;

        // Output layer (linear).
        const std::vector<double>& last_act =
            model.hidden.empty() ? cache.flat : cache.fc_act.back();
        for (std::size_t i = 0; i < model.output.in; ++i)
            grad[out_off + i] += delta * last_act[i];
        grad[out_off + model.output.in] += delta;

        for (std::size_t i = 0; i < model.output.in; ++i)
            dact[i] = delta * model.output.weights[i];

        // Hidden sigmoid layers, last to first.
        const std::vector<double>* cur = &dact;
        for (std::size_t li = model.hidden.size(); li-- > 0;) {
            const DenseLayer& layer = model.hidden[li];
            const std::vector<double>& a = cache.fc_act[li];
            const std::vector<double>& in_act =
                li == 0 ? cache.flat : cache.fc_act[li - 1];
            dpre.resize(layer.out);
            for (std::size_t o = 0; o < layer.out; ++o)
                dpre[o] = (*cur)[o] * a[o] * (1.0 - a[o]);
            double* g = grad.data() + hidden_off[li];
            std::vector<double>& din = fc_din[li];
            std::fill(din.begin(), din.end(), 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                double* grow = g + o * layer.in;
                const double* wrow = layer.weights.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) {
                    grow[i] += dpre[o] * in_act[i];
                    din[i] += wrow[i] * dpre[o];
                }
                g[layer.out * layer.in + o] += dpre[o];
            }
            cur = &din;
        }

        // Unflatten to per-channel feature-map gradients.
        const std::size_t channels = model.conv.back().out_channels;
        std::vector<Grid>& dlast =
            model.pooling != PoolingSpec::None ? pool_din : dmap_buf.back();
        {
            std::size_t pos = 0;
            for (std::size_t chn = 0; chn < channels; ++chn)
                for (double& v : dlast[chn].data()) v = (*cur)[pos++];
        }

        // Pooling backward (gradients route to contributing cells; the
        // replicated edge of an odd extent accumulates twice).
        if (model.pooling != PoolingSpec::None) {
            for (std::size_t chn = 0; chn < channels; ++chn) {
                const Grid& src = cache.conv_act.back()[chn];
                Grid& d = dmap_buf.back()[chn];
                std::fill(d.data().begin(), d.data().end(), 0.0);
                const Grid& dp = pool_din[chn];
                for (std::size_t r = 0; r < dp.rows(); ++r) {
                    for (std::size_t cc = 0; cc < dp.cols(); ++cc) {
                        if (model.pooling == PoolingSpec::Mean) {
                            for (std::size_t dr = 0; dr < 2; ++dr)
                                for (std::size_t dc = 0; dc < 2; ++dc)
                                    d(std::min(2 * r + dr, src.rows() - 1),
                                      std::min(2 * cc + dc, src.cols() - 1)) +=
                                        0.25 * dp(r, cc);
                        } else {
                            std::size_t br = 2 * r, bc = 2 * cc;
                            double best = -std::numeric_limits<double>::infinity();
                            for (std::size_t dr = 0; dr < 2; ++dr)
                                for (std::size_t dc = 0; dc < 2; ++dc) {
                                    const std::size_t rr = std::min(2 * r + dr, src.rows() - 1);
                                    const std::size_t c2 = std::min(2 * cc + dc, src.cols() - 1);
                                    if (src(rr, c2) > best) {
                                        best = src(rr, c2);
                                        br = rr;
                                        bc = c2;
                                    }
                                }
                            d(br, bc) += dp(r, cc);
                        }
                    }
                }
            }
        }

        // Conv layers, last to first.
        for (std::size_t li = model.conv.size(); li-- > 0;) {
            const Conv2x2Layer& layer = model.conv[li];
            const std::vector<Grid>& a = cache.conv_act[li];
            std::vector<Grid>& dmaps = dmap_buf[li];
            // d(pre-activation) = d(activation) * a * (1 - a)
            for (std::size_t f = 0; f < layer.out_channels; ++f)
                for (std::size_t i = 0; i < dmaps[f].size(); ++i)
                    dmaps[f].data()[i] *= a[f].data()[i] * (1.0 - a[f].data()[i]);

            const bool need_din = li > 0;
            if (need_din)
                for (Grid& d : dmap_buf[li - 1])
                    std::fill(d.data().begin(), d.data().end(), 0.0);
            double* g = grad.data() + conv_off[li];
            for (std::size_t f = 0; f < layer.out_channels; ++f) {
                const Grid& dz = dmaps[f];
                for (std::size_t ch = 0; ch < layer.in_channels; ++ch) {
                    const Grid& in_act = li == 0 ? s.window : cache.conv_act[li - 1][ch];
                    Grid* din = need_din ? &dmap_buf[li - 1][ch] : nullptr;
                    double* gk = g + (f * layer.in_channels + ch) * 4;
                    const double* k =
                        layer.weights.data() + (f * layer.in_channels + ch) * 4;
                    for (std::size_t r = 0; r < dz.rows(); ++r) {
                        for (std::size_t cc = 0; cc < dz.cols(); ++cc) {
                            const double d = dz(r, cc);
                            gk[0] += d * in_act(r, cc);
                            gk[1] += d * in_act(r, cc + 1);
                            gk[2] += d * in_act(r + 1, cc);
                            gk[3] += d * in_act(r + 1, cc + 1);
                            if (need_din) {
                                (*din)(r, cc) += k[0] * d;
                                (*din)(r, cc + 1) += k[1] * d;
                                (*din)(r + 1, cc) += k[2] * d;
                                (*din)(r + 1, cc + 1) += k[3] * d;
                            }
                        }
                    }
                }
                double bias_acc = 0.0;
                for (double v : dz.data()) bias_acc += v;
                g[layer.out_channels * layer.in_channels * 4 + f] += bias_acc;
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (double& g : grad) g *= inv_n;
    return loss * inv_n;
}

// Flat parameter access mirroring the gradient layout.
inline std::vector<double> general_get_params(const GeneralCnnModel& model) {
    std::vector<double> out;
    out.reserve(model.parameter_count());
    for (const auto& l : model.conv) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.biases.begin(), l.biases.end());
    }
    for (const auto& l : model.hidden) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.biases.begin(), l.biases.end());
    }
    out.insert(out.end(), model.output.weights.begin(), model.output.weights.end());
    out.push_back(model.output.biases[0]);
    return out;
}

inline void general_set_params(GeneralCnnModel& model, std::span<const double> params) {
    if (params.size() != model.parameter_count())
        throw config_error("parameter vector length mismatch");
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& dst) {
        for (double& v : dst) v = params[pos++];
    };
    for (auto& l : model.conv) {
        take(l.weights);
        take(l.biases);
    }
    for (auto& l : model.hidden) {
        take(l.weights);
        take(l.biases);
    }
    take(model.output.weights);
    take(model.output.biases);
}

inline GeneralCnnModel general_train(const std::vector<TrainingSample>& samples,
                                     const NormalizationParams& normalization,
                                     const GeneralCnnConfig& config,
                                     FitTrace* trace = nullptr) {
    if (samples.empty())
        throw data_error("no training samples");
    GeneralCnnModel model = make_general_cnn(samples.front().window.rows(),
                                             samples.front().window.cols(), config,
                                             normalization);
    std::vector<double> params = general_get_params(model);
    std::vector<double> grad;
    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = general_gradients(model, samples, grad);
        if (!std::isfinite(loss))
            throw divergence_error("general cnn training diverged", epoch);
        if (trace) trace->mean_loss.push_back(loss);
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= config.learning_rate * grad[i];
        general_set_params(model, params);
    }
    return model;
}

inline double general_predict(const GeneralCnnModel& model, const Grid& window) {
    return model.normalization.denormalize(general_forward(model, window));
}

} // namespace ttcast
