#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ttcast/baselines.hpp"
#include "ttcast/cnn.hpp"
#include "ttcast/cnn_general.hpp"
#include "ttcast/csv.hpp"
#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/metrics.hpp"
#include "ttcast/timeutil.hpp"

namespace ttcast {

enum class Method { Avg, Linear, Logistic, Nn, CnnDidactic, CnnGeneral };

inline Method parse_method(std::string_view name) {
    if (name == "avg") return Method::Avg;
    if (name == "linear") return Method::Linear;
    if (name == "logistic") return Method::Logistic;
    if (name == "nn") return Method::Nn;
    if (name == "cnn-didactic") return Method::CnnDidactic;
    if (name == "cnn-general") return Method::CnnGeneral;
    throw config_error("unknown method '" + std::string(name) +
                       "' (expected avg|linear|logistic|nn|cnn-didactic|cnn-general)");
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Avg: return "avg";
        case Method::Linear: return "linear";
        case Method::Logistic: return "logistic";
        case Method::Nn: return "nn";
        case Method::CnnDidactic: return "cnn-didactic";
        case Method::CnnGeneral: return "cnn-general";
    }
    throw config_error("unhandled method enum value");
}

// Input window geometry: x adjacent segments by y+1 intervals, predicting
// the next interval for each row listed in `targets` (all rows if empty).
struct WindowSpec {
    std::size_t x = 3;
    std::size_t y = 5;
    std::vector<std::size_t> targets;

    std::vector<std::size_t> resolved_targets() const {
        if (!targets.empty()) return targets;
        std::vector<std::size_t> all(x);
        for (std::size_t i = 0; i < x; ++i) all[i] = i;
        return all;
    }
};

// Hyperparameters for every method in one bag; `seed` drives all random
// initialization so one number reproduces a whole comparison.
struct TrainingConfig {
    std::uint64_t seed = 1;
    FillPolicy fill = FillPolicy::Drop;
    GdConfig logistic_gd{0.5, 2000, 1};
    GdConfig nn_gd{0.5, 2000, 1};
    std::size_t nn_hidden = 2;
    double didactic_learning_rate = 0.05;
    long didactic_epochs = 300;
    GeneralCnnConfig cnn;
};

struct SegmentScore {
    std::string segment_id;
    std::size_t target_index = 0; // window row z
    double mape_pct = 0.0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t excluded_pairs = 0;
};

struct MethodReport {
    std::string method;
    double overall_mape_pct = 0.0;
    double within_10pct = 0.0; // share of test predictions within 10% of actual
    double within_25pct = 0.0;
    std::vector<SegmentScore> per_segment;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t excluded_pairs = 0;
    std::size_t parameter_count = 0;    // 0 for the parameter-free average
    double final_train_loss = 0.0;      // last-epoch mean loss, averaged over targets
};

struct EvalReport {
    std::int64_t boundary = 0; // unix seconds; test = targets at/after this
    WindowSpec window;
    std::uint64_t seed = 1;
    int interval_len_min = 5;
    std::string data_digest;
    std::string config_digest;
    std::vector<MethodReport> methods; // sorted by method name
};

// Requirement reference lines reported alongside every comparison.
inline constexpr double FREEWAY_REQUIREMENT_PCT = 10.0;
inline constexpr double PROVINCIAL_REQUIREMENT_PCT = 25.0;

// A fitted predictor of one target row, as produced by `fit_single` and
// consumed by `predict_window`; only the member matching `method` is
// populated.
struct DidacticModel {
    DidacticCnnParams params;
    NormalizationParams normalization;
};

struct TrainedModel {
    Method method = Method::Avg;
    std::size_t x = 3, y = 5, z = 0;
    LinearModel linear;
    LogisticModel logistic;
    MlpModel mlp;
    DidacticModel didactic;
    GeneralCnnModel general;
};

inline DidacticCnnParams didactic_init(std::uint64_t seed, double learning_rate) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    DidacticCnnParams p;
    for (auto& w : p.filter) w = u(rng);
    for (auto& b : p.conv_biases) b = u(rng);
    for (auto& w : p.out_weights) w = u(rng);
    p.out_bias = u(rng);
    p.learning_rate = learning_rate;
    return p;
}

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::string matrix_digest(const TimeSpaceMatrix& m) {
    std::ostringstream os;
    write_matrix_csv(os, m);
    return hex64(fnv1a64(os.str()));
}

inline std::string config_canonical(const std::vector<Method>& methods,
                                    const WindowSpec& w, std::int64_t boundary,
                                    const TrainingConfig& cfg) {
    std::ostringstream os;
    os << "methods=";
    for (Method m : methods) os << method_name(m) << ';';
    os << "|x=" << w.x << "|y=" << w.y << "|targets=";
    for (std::size_t t : w.resolved_targets()) os << t << ';';
    os << "|boundary=" << boundary << "|seed=" << cfg.seed
       << "|fill=" << static_cast<int>(cfg.fill)
       << "|logistic=" << cfg.logistic_gd.learning_rate << '/' << cfg.logistic_gd.epochs
       << "|nn=" << cfg.nn_gd.learning_rate << '/' << cfg.nn_gd.epochs << '/'
       << cfg.nn_hidden
       << "|didactic=" << cfg.didactic_learning_rate << '/' << cfg.didactic_epochs
       << "|cnn=" << cfg.cnn.learning_rate << '/' << cfg.cnn.epochs << '/'
       << static_cast<int>(cfg.cnn.pooling) << "|cnn_filters=";
    for (std::size_t f : cfg.cnn.conv_filters) os << f << ';';
    os << "|cnn_hidden=";
    for (std::size_t h : cfg.cnn.hidden_widths) os << h << ';';
    return os.str();
}

// Samples split by target date, both raw (hours) and min-max normalized.
// Normalization is derived from the training split only: every train window
// cell plus every train target.
struct PreparedSplit {
    std::vector<TrainingSample> raw_train, raw_test;
    std::vector<TrainingSample> norm_train, norm_test;
    NormalizationParams norm;
};

inline std::vector<TrainingSample> normalize_samples(const std::vector<TrainingSample>& in,
                                                     const NormalizationParams& norm) {
    std::vector<TrainingSample> out = in;
    for (auto& s : out) {
        for (double& v : s.window.data()) v = norm.normalize(v);
        s.target = norm.normalize(s.target);
    }
    return out;
}

inline PreparedSplit prepare_split(const TimeSpaceMatrix& m, std::size_t x, std::size_t y,
                                   std::size_t z, std::int64_t boundary,
                                   bool require_test = true) {
    auto [train, test] = split_by_date(window_samples(m, x, y, z), boundary);
    if (train.empty())
        throw config_error("training split is empty for target row " + std::to_string(z));
    if (require_test && test.empty())
        throw config_error("test split is empty for target row " + std::to_string(z));

    std::vector<double> values;
    values.reserve(train.size() * (train.front().window.size() + 1));
    for (const auto& s : train) {
        const auto& d = s.window.data();
        values.insert(values.end(), d.begin(), d.end());
        values.push_back(s.target);
    }

    PreparedSplit out;
    out.norm = NormalizationParams::from_training(values);
    out.norm_train = normalize_samples(train, out.norm);
    out.norm_test = normalize_samples(test, out.norm);
    out.raw_train = std::move(train);
    out.raw_test = std::move(test);
    return out;
}

inline std::span<const double> window_row(const Grid& g, std::size_t r) {
    return {g.data().data() + r * g.cols(), g.cols()};
}

inline Grid normalize_grid(Grid g, const NormalizationParams& norm) {
    for (double& v : g.data()) v = norm.normalize(v);
    return g;
}

inline TrainedModel fit_model(Method method, const PreparedSplit& sp, std::size_t x,
                              std::size_t y, std::size_t z, const TrainingConfig& cfg,
                              double* final_train_loss = nullptr) {
    TrainedModel out;
    out.method = method;
    out.x = x;
    out.y = y;
    out.z = z;
    double loss = 0.0;
    switch (method) {
        case Method::Avg:
            break;
        case Method::Linear:
            out.linear = fit_linear(sp.raw_train);
            break;
        case Method::Logistic: {
            GdConfig gd = cfg.logistic_gd;
            gd.seed = cfg.seed;
            FitTrace trace;
            out.logistic = fit_logistic(sp.norm_train, sp.norm, gd, &trace);
            if (!trace.mean_loss.empty()) loss = trace.mean_loss.back();
            break;
        }
        case Method::Nn: {
            GdConfig gd = cfg.nn_gd;
            gd.seed = cfg.seed;
            FitTrace trace;
            out.mlp = mlp_train(sp.norm_train, sp.norm, gd, cfg.nn_hidden, &trace);
            if (!trace.mean_loss.empty()) loss = trace.mean_loss.back();
            break;
        }
        case Method::CnnDidactic: {
            const Grid& w0 = sp.raw_train.front().window;
            if (w0.rows() != 3 || w0.cols() != 3)
                throw config_error("the 3x3 model needs window x=3, y=2");
            DidacticCnnParams init = didactic_init(cfg.seed, cfg.didactic_learning_rate);
            DidacticTrainResult r = didactic_train(sp.norm_train, init, cfg.didactic_epochs);
            out.didactic = {r.params, sp.norm};
            if (!r.epoch_mean_loss.empty()) loss = r.epoch_mean_loss.back();
            break;
        }
        case Method::CnnGeneral: {
            GeneralCnnConfig cc = cfg.cnn;
            cc.seed = cfg.seed;
            FitTrace trace;
            out.general = general_train(sp.norm_train, sp.norm, cc, &trace);
            if (!trace.mean_loss.empty()) loss = trace.mean_loss.back();
            break;
        }
    }
    if (final_train_loss) *final_train_loss = loss;
    return out;
}

} // namespace detail

inline std::size_t model_parameter_count(const TrainedModel& model) {
    switch (model.method) {
        case Method::Avg: return 0;
        case Method::Linear: return model.linear.weights.size() + 1;
        case Method::Logistic: return model.logistic.weights.size() + 1;
        case Method::Nn: return model.mlp.parameter_count();
        case Method::CnnDidactic: return DidacticCnnParams::parameter_count;
        case Method::CnnGeneral: return model.general.parameter_count();
    }
    return 0;
}

// Predicts the target row's next-interval travel time (hours) from a raw
// (unnormalized) window.
inline double predict_window(const TrainedModel& model, const Grid& window) {
    if (window.rows() != model.x || window.cols() != model.y + 1)
        throw config_error("window shape does not match the trained model");
    switch (model.method) {
        case Method::Avg:
            return predict_unweighted_average(detail::window_row(window, model.z));
        case Method::Linear:
            return predict_linear(model.linear, window);
        case Method::Logistic:
            return predict_logistic(
                model.logistic, detail::normalize_grid(window, model.logistic.normalization));
        case Method::Nn:
            return mlp_forward(model.mlp,
                               detail::normalize_grid(window, model.mlp.normalization));
        case Method::CnnDidactic: {
            const Grid normalized =
                detail::normalize_grid(window, model.didactic.normalization);
            return model.didactic.normalization.denormalize(
                didactic_forward(normalized, model.didactic.params).prediction);
        }
        case Method::CnnGeneral:
            return general_predict(
                model.general, detail::normalize_grid(window, model.general.normalization));
    }
    throw config_error("unhandled method enum value");
}

// Fits one model for one target row on the pre-boundary samples.
inline TrainedModel fit_single(const TimeSpaceMatrix& matrix, Method method, std::size_t x,
                               std::size_t y, std::size_t z, std::int64_t boundary,
                               const TrainingConfig& cfg, double* final_train_loss = nullptr) {
    if (z >= x) throw config_error("target row outside window");
    const TimeSpaceMatrix filled = fill_missing(matrix, cfg.fill);
    const auto sp = detail::prepare_split(filled, x, y, z, boundary, /*require_test=*/false);
    return detail::fit_model(method, sp, x, y, z, cfg, final_train_loss);
}

// One prediction per fully observed input window, including the anchor at
// the matrix's last interval (a true forecast past the data's end). The
// target cell itself need not be observed.
inline std::vector<PredictionRow> predict_all(const TrainedModel& model,
                                              const TimeSpaceMatrix& matrix,
                                              FillPolicy fill = FillPolicy::Drop) {
    const TimeSpaceMatrix filled = fill_missing(matrix, fill);
    if (model.x > filled.segments())
        throw data_error("matrix has fewer segment rows than the model's window");
    if (model.y + 1 > filled.intervals())
        throw data_error("matrix has fewer intervals than the model's lookback");

    std::vector<PredictionRow> rows;
    for (std::size_t j = model.y; j < filled.intervals(); ++j) {
        bool ok = true;
        for (std::size_t r = 0; ok && r < model.x; ++r)
            for (std::size_t c = j - model.y; ok && c <= j; ++c)
                if (!filled.observed(r, c)) ok = false;
        if (!ok) continue;
        Grid window(model.x, model.y + 1);
        for (std::size_t r = 0; r < model.x; ++r)
            for (std::size_t c = 0; c <= model.y; ++c)
                window(r, c) = filled.values(r, j - model.y + c);
        rows.push_back({filled.segment_ids.at(model.z), filled.interval_start(j + 1),
                        predict_window(model, window)});
    }
    if (rows.empty()) throw data_error("no fully observed windows to predict from");
    return rows;
}

// Fits and scores one method across the requested target rows. Overall
// numbers pool every (target row, test interval) prediction; the per-segment
// entries break the same pool down by target row.
inline MethodReport run_method(const TimeSpaceMatrix& filled, Method method,
                               const WindowSpec& window, std::int64_t boundary,
                               const TrainingConfig& cfg) {
    MethodReport rep;
    rep.method = method_name(method);
    std::vector<double> actual_all, predicted_all;
    const auto targets = window.resolved_targets();
    for (std::size_t z : targets) {
        if (z >= window.x) throw config_error("target row outside window");
        const auto sp = detail::prepare_split(filled, window.x, window.y, z, boundary);
        double final_loss = 0.0;
        const TrainedModel model =
            detail::fit_model(method, sp, window.x, window.y, z, cfg, &final_loss);

        std::vector<double> actual, predicted;
        actual.reserve(sp.raw_test.size());
        predicted.reserve(sp.raw_test.size());
        for (const auto& s : sp.raw_test) {
            actual.push_back(s.target);
            predicted.push_back(predict_window(model, s.window));
        }

        SegmentScore sc;
        sc.segment_id = filled.segment_ids.at(z);
        sc.target_index = z;
        sc.train_samples = sp.raw_train.size();
        sc.test_samples = sp.raw_test.size();
        sc.mape_pct = mape(actual, predicted, &sc.excluded_pairs);
        rep.train_samples += sc.train_samples;
        rep.test_samples += sc.test_samples;
        rep.excluded_pairs += sc.excluded_pairs;
        rep.per_segment.push_back(std::move(sc));

        rep.parameter_count = model_parameter_count(model);
        rep.final_train_loss += final_loss;
        actual_all.insert(actual_all.end(), actual.begin(), actual.end());
        predicted_all.insert(predicted_all.end(), predicted.begin(), predicted.end());
    }
    rep.final_train_loss /= static_cast<double>(targets.size());
    rep.overall_mape_pct = mape(actual_all, predicted_all);
    rep.within_10pct = within_band(actual_all, predicted_all, 0.10);
    rep.within_25pct = within_band(actual_all, predicted_all, 0.25);
    return rep;
}

// Runs every requested method on identical splits and merges the reports,
// ordered by method name.
inline EvalReport compare_methods(const TimeSpaceMatrix& matrix,
                                  const std::vector<Method>& methods,
                                  const WindowSpec& window, std::int64_t boundary,
                                  const TrainingConfig& cfg) {
    if (methods.empty()) throw config_error("no methods requested");
    const TimeSpaceMatrix filled = fill_missing(matrix, cfg.fill);

    EvalReport report;
    report.boundary = boundary;
    report.window = window;
    report.seed = cfg.seed;
    report.interval_len_min = matrix.interval_len_min;
    report.data_digest = detail::matrix_digest(matrix);
    report.config_digest =
        detail::hex64(detail::fnv1a64(detail::config_canonical(methods, window, boundary, cfg)));
    for (Method m : methods)
        report.methods.push_back(run_method(filled, m, window, boundary, cfg));
    std::sort(report.methods.begin(), report.methods.end(),
              [](const MethodReport& a, const MethodReport& b) { return a.method < b.method; });
    return report;
}

inline EvalReport run_experiment(const TimeSpaceMatrix& matrix, Method method,
                                 const WindowSpec& window, std::int64_t boundary,
                                 const TrainingConfig& cfg) {
    return compare_methods(matrix, {method}, window, boundary, cfg);
}

// Human-readable comparison: methods ranked by overall MAPE ascending, the
// accuracy requirement lines as references, then the per-segment breakdown.
inline std::string format_comparison_table(const EvalReport& report) {
    std::vector<const MethodReport*> ranked;
    ranked.reserve(report.methods.size());
    for (const auto& m : report.methods) ranked.push_back(&m);
    std::sort(ranked.begin(), ranked.end(), [](const MethodReport* a, const MethodReport* b) {
        if (a->overall_mape_pct != b->overall_mape_pct)
            return a->overall_mape_pct < b->overall_mape_pct;
        return a->method < b->method;
    });

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "test boundary " << format_iso8601(report.boundary) << ", window " << report.window.x
       << 'x' << (report.window.y + 1) << ", seed " << report.seed << "\n\n";
    os << std::left << std::setw(24) << "method" << std::right << std::setw(8) << "MAPE%"
       << std::setw(10) << "<=10%" << std::setw(10) << "<=25%" << std::setw(9) << "params"
       << std::setw(8) << "test_n" << '\n';
    for (const MethodReport* m : ranked) {
        os << std::left << std::setw(24) << m->method << std::right << std::setw(8)
           << m->overall_mape_pct << std::setw(9) << 100.0 * m->within_10pct << '%'
           << std::setw(9) << 100.0 * m->within_25pct << '%' << std::setw(9)
           << m->parameter_count << std::setw(8) << m->test_samples << '\n';
    }
    os << std::left << std::setw(24) << "freeway requirement" << std::right << std::setw(8)
       << FREEWAY_REQUIREMENT_PCT << "  (reference)\n";
    os << std::left << std::setw(24) << "provincial requirement" << std::right << std::setw(8)
       << PROVINCIAL_REQUIREMENT_PCT << "  (reference)\n";

    os << "\nper-segment MAPE%\n";
    for (const MethodReport* m : ranked) {
        os << std::left << std::setw(24) << m->method;
        for (const auto& seg : m->per_segment)
            os << "  " << seg.segment_id << '=' << seg.mape_pct;
        os << '\n';
    }
    return os.str();
}

} // namespace ttcast
