#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ttcast/errors.hpp"
#include "ttcast/experiment.hpp"
#include "ttcast/synth.hpp"
#include "ttcast/timeutil.hpp"

namespace ttcast {

namespace detail {

template <typename Error>
inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<std::string_view> allowed, const char* what) {
    if (!j.is_object()) throw Error(std::string(what) + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (std::string_view a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw Error("unknown key '" + item.key() + "' in " + what);
    }
}

// Accepts either an ISO-8601 string or raw unix seconds.
inline std::int64_t time_field(const nlohmann::json& j) {
    if (j.is_string()) return parse_iso8601(j.get<std::string>());
    if (j.is_number_integer()) return j.get<std::int64_t>();
    throw config_error("timestamps must be ISO-8601 strings or unix seconds");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scenario config (generate subcommand)
// ---------------------------------------------------------------------------

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    detail::check_keys<config_error>(
        j,
        {"segments", "horizon", "interval_len_min", "start", "free_flow_speed",
         "jam_density", "demand_profile", "congestion_events", "noise_sd_rel",
         "penetration", "seed"},
        "scenario config");
    ScenarioConfig c;
    if (!j.contains("segments") || !j.at("segments").is_array() || j.at("segments").empty())
        throw config_error("scenario config needs a non-empty segments array");
    for (const auto& js : j.at("segments")) {
        detail::check_keys<config_error>(
            js, {"segment_id", "origin_detector", "dest_detector", "length_km"}, "segment");
        SegmentDef s;
        s.segment_id = js.at("segment_id").get<std::string>();
        s.origin_detector = js.at("origin_detector").get<std::string>();
        s.dest_detector = js.at("dest_detector").get<std::string>();
        s.length_km = js.at("length_km").get<double>();
        c.segments.push_back(std::move(s));
    }
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("interval_len_min")) c.interval_len_min = j.at("interval_len_min").get<int>();
    if (j.contains("start")) c.start = detail::time_field(j.at("start"));
    if (j.contains("free_flow_speed")) c.free_flow_speed = j.at("free_flow_speed").get<double>();
    if (j.contains("jam_density")) c.jam_density = j.at("jam_density").get<double>();
    if (j.contains("demand_profile"))
        c.demand_profile = j.at("demand_profile").get<std::vector<double>>();
    if (j.contains("congestion_events")) {
        for (const auto& je : j.at("congestion_events")) {
            detail::check_keys<config_error>(je,
                                             {"origin_segment_index", "start_interval",
                                              "duration_intervals", "severity", "wave_speed"},
                                             "congestion event");
            CongestionEvent e;
            e.origin_segment_index = je.at("origin_segment_index").get<std::size_t>();
            e.start_interval = je.at("start_interval").get<std::size_t>();
            e.duration_intervals = je.at("duration_intervals").get<std::size_t>();
            if (je.contains("severity")) e.severity = je.at("severity").get<double>();
            if (je.contains("wave_speed")) e.wave_speed = je.at("wave_speed").get<double>();
            c.congestion_events.push_back(e);
        }
    }
    if (j.contains("noise_sd_rel")) c.noise_sd_rel = j.at("noise_sd_rel").get<double>();
    if (j.contains("penetration")) c.penetration = j.at("penetration").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["segments"] = nlohmann::json::array();
    for (const auto& s : c.segments)
        j["segments"].push_back({{"segment_id", s.segment_id},
                                 {"origin_detector", s.origin_detector},
                                 {"dest_detector", s.dest_detector},
                                 {"length_km", s.length_km}});
    j["horizon"] = c.horizon;
    j["interval_len_min"] = c.interval_len_min;
    j["start"] = format_iso8601(c.start);
    j["free_flow_speed"] = c.free_flow_speed;
    j["jam_density"] = c.jam_density;
    j["demand_profile"] = c.demand_profile;
    j["congestion_events"] = nlohmann::json::array();
    for (const auto& e : c.congestion_events)
        j["congestion_events"].push_back({{"origin_segment_index", e.origin_segment_index},
                                          {"start_interval", e.start_interval},
                                          {"duration_intervals", e.duration_intervals},
                                          {"severity", e.severity},
                                          {"wave_speed", e.wave_speed}});
    j["noise_sd_rel"] = c.noise_sd_rel;
    j["penetration"] = c.penetration;
    j["seed"] = c.seed;
    return j;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    try {
        nlohmann::json j;
        in >> j;
        return scenario_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("bad config file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training config (train / evaluate subcommands)
// ---------------------------------------------------------------------------

inline FillPolicy fill_policy_from_string(const std::string& s) {
    if (s == "drop") return FillPolicy::Drop;
    if (s == "forward_fill") return FillPolicy::ForwardFill;
    if (s == "segment_median") return FillPolicy::SegmentMedian;
    throw config_error("unknown fill policy '" + s +
                       "' (expected drop|forward_fill|segment_median)");
}

inline std::string to_string(FillPolicy p) {
    switch (p) {
        case FillPolicy::Drop: return "drop";
        case FillPolicy::ForwardFill: return "forward_fill";
        case FillPolicy::SegmentMedian: return "segment_median";
    }
    return "drop";
}

inline PoolingSpec pooling_from_string(const std::string& s) {
    if (s == "none") return PoolingSpec::None;
    if (s == "max") return PoolingSpec::Max;
    if (s == "mean") return PoolingSpec::Mean;
    throw config_error("unknown pooling '" + s + "' (expected none|max|mean)");
}

inline std::string to_string(PoolingSpec p) {
    switch (p) {
        case PoolingSpec::None: return "none";
        case PoolingSpec::Max: return "max";
        case PoolingSpec::Mean: return "mean";
    }
    return "none";
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
    detail::check_keys<config_error>(
        j, {"seed", "fill", "logistic", "nn", "didactic", "cnn"}, "training config");
    TrainingConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("fill")) c.fill = fill_policy_from_string(j.at("fill").get<std::string>());
    if (j.contains("logistic")) {
        const auto& g = j.at("logistic");
        detail::check_keys<config_error>(g, {"learning_rate", "epochs"}, "logistic config");
        if (g.contains("learning_rate"))
            c.logistic_gd.learning_rate = g.at("learning_rate").get<double>();
        if (g.contains("epochs")) c.logistic_gd.epochs = g.at("epochs").get<long>();
    }
    if (j.contains("nn")) {
        const auto& g = j.at("nn");
        detail::check_keys<config_error>(g, {"learning_rate", "epochs", "hidden"}, "nn config");
        if (g.contains("learning_rate")) c.nn_gd.learning_rate = g.at("learning_rate").get<double>();
        if (g.contains("epochs")) c.nn_gd.epochs = g.at("epochs").get<long>();
        if (g.contains("hidden")) c.nn_hidden = g.at("hidden").get<std::size_t>();
    }
    if (j.contains("didactic")) {
        const auto& g = j.at("didactic");
        detail::check_keys<config_error>(g, {"learning_rate", "epochs"}, "didactic config");
        if (g.contains("learning_rate"))
            c.didactic_learning_rate = g.at("learning_rate").get<double>();
        if (g.contains("epochs")) c.didactic_epochs = g.at("epochs").get<long>();
    }
    if (j.contains("cnn")) {
        const auto& g = j.at("cnn");
        detail::check_keys<config_error>(
            g, {"learning_rate", "epochs", "conv_filters", "hidden_widths", "pooling"},
            "cnn config");
        if (g.contains("learning_rate")) c.cnn.learning_rate = g.at("learning_rate").get<double>();
        if (g.contains("epochs")) c.cnn.epochs = g.at("epochs").get<long>();
        if (g.contains("conv_filters"))
            c.cnn.conv_filters = g.at("conv_filters").get<std::vector<std::size_t>>();
        if (g.contains("hidden_widths"))
            c.cnn.hidden_widths = g.at("hidden_widths").get<std::vector<std::size_t>>();
        if (g.contains("pooling"))
            c.cnn.pooling = pooling_from_string(g.at("pooling").get<std::string>());
    }
    return c;
}

inline TrainingConfig load_training_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    try {
        nlohmann::json j;
        in >> j;
        return training_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("bad config file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json norm_to_json(const NormalizationParams& n) {
    return {{"t_min", n.t_min}, {"t_max", n.t_max}};
}

inline NormalizationParams norm_from_json(const nlohmann::json& j) {
    check_keys<data_error>(j, {"t_min", "t_max"}, "normalization");
    NormalizationParams n{j.at("t_min").get<double>(), j.at("t_max").get<double>()};
    if (!(n.t_max > n.t_min)) throw data_error("model normalization is degenerate");
    return n;
}

template <typename T>
inline std::vector<T> sized_vector(const nlohmann::json& j, const char* what,
                                   std::size_t expected) {
    auto v = j.get<std::vector<T>>();
    if (v.size() != expected)
        throw data_error(std::string(what) + ": expected " + std::to_string(expected) +
                         " values, got " + std::to_string(v.size()));
    return v;
}

} // namespace detail

inline nlohmann::json model_to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["model_type"] = method_name(m.method);
    j["window"] = {{"x", m.x}, {"y", m.y}, {"z", m.z}};
    switch (m.method) {
        case Method::Avg:
            break;
        case Method::Linear:
            j["weights"] = m.linear.weights;
            j["bias"] = m.linear.bias;
            break;
        case Method::Logistic:
            j["weights"] = m.logistic.weights;
            j["bias"] = m.logistic.bias;
            j["normalization"] = detail::norm_to_json(m.logistic.normalization);
            break;
        case Method::Nn:
            j["input_size"] = m.mlp.input_size;
            j["hidden_count"] = m.mlp.hidden_count;
            j["hidden_weights"] = m.mlp.hidden_weights;
            j["hidden_biases"] = m.mlp.hidden_biases;
            j["output_weights"] = m.mlp.output_weights;
            j["output_bias"] = m.mlp.output_bias;
            j["normalization"] = detail::norm_to_json(m.mlp.normalization);
            break;
        case Method::CnnDidactic:
            j["filter"] = m.didactic.params.filter;
            j["conv_biases"] = m.didactic.params.conv_biases;
            j["out_weights"] = m.didactic.params.out_weights;
            j["out_bias"] = m.didactic.params.out_bias;
            j["learning_rate"] = m.didactic.params.learning_rate;
            j["normalization"] = detail::norm_to_json(m.didactic.normalization);
            break;
        case Method::CnnGeneral: {
            j["input_rows"] = m.general.input_rows;
            j["input_cols"] = m.general.input_cols;
            j["pooling"] = to_string(m.general.pooling);
            j["conv"] = nlohmann::json::array();
            for (const auto& l : m.general.conv)
                j["conv"].push_back({{"in_channels", l.in_channels},
                                     {"out_channels", l.out_channels},
                                     {"weights", l.weights},
                                     {"biases", l.biases}});
            j["hidden"] = nlohmann::json::array();
            for (const auto& l : m.general.hidden)
                j["hidden"].push_back({{"in", l.in},
                                       {"out", l.out},
                                       {"weights", l.weights},
                                       {"biases", l.biases}});
            j["output"] = {{"in", m.general.output.in},
                           {"out", m.general.output.out},
                           {"weights", m.general.output.weights},
                           {"biases", m.general.output.biases}};
            j["normalization"] = detail::norm_to_json(m.general.normalization);
            break;
        }
    }
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("model_type") || !j.contains("window"))
        throw data_error("model file needs model_type and window fields");
    TrainedModel m;
    try {
        m.method = parse_method(j.at("model_type").get<std::string>());
    } catch (const config_error& e) {
        throw data_error(e.what());
    }
    const auto& w = j.at("window");
    detail::check_keys<data_error>(w, {"x", "y", "z"}, "model window");
    m.x = w.at("x").get<std::size_t>();
    m.y = w.at("y").get<std::size_t>();
    m.z = w.at("z").get<std::size_t>();
    if (m.x == 0 || m.z >= m.x) throw data_error("model window shape is inconsistent");
    const std::size_t d = m.x * (m.y + 1);

    switch (m.method) {
        case Method::Avg:
            detail::check_keys<data_error>(j, {"model_type", "window"}, "model file");
            break;
        case Method::Linear:
            detail::check_keys<data_error>(j, {"model_type", "window", "weights", "bias"},
                                           "model file");
            m.linear.weights = detail::sized_vector<double>(j.at("weights"), "weights", d);
            m.linear.bias = j.at("bias").get<double>();
            break;
        case Method::Logistic:
            detail::check_keys<data_error>(
                j, {"model_type", "window", "weights", "bias", "normalization"}, "model file");
            m.logistic.weights = detail::sized_vector<double>(j.at("weights"), "weights", d);
            m.logistic.bias = j.at("bias").get<double>();
            m.logistic.normalization = detail::norm_from_json(j.at("normalization"));
            break;
        case Method::Nn: {
            detail::check_keys<data_error>(j,
                                           {"model_type", "window", "input_size", "hidden_count",
                                            "hidden_weights", "hidden_biases", "output_weights",
                                            "output_bias", "normalization"},
                                           "model file");
            m.mlp.input_size = j.at("input_size").get<std::size_t>();
            m.mlp.hidden_count = j.at("hidden_count").get<std::size_t>();
            if (m.mlp.input_size != d || m.mlp.hidden_count == 0)
                throw data_error("network shape does not match the model window");
            m.mlp.hidden_weights = detail::sized_vector<double>(
                j.at("hidden_weights"), "hidden_weights", m.mlp.hidden_count * d);
            m.mlp.hidden_biases = detail::sized_vector<double>(
                j.at("hidden_biases"), "hidden_biases", m.mlp.hidden_count);
            m.mlp.output_weights = detail::sized_vector<double>(
                j.at("output_weights"), "output_weights", m.mlp.hidden_count);
            m.mlp.output_bias = j.at("output_bias").get<double>();
            m.mlp.normalization = detail::norm_from_json(j.at("normalization"));
            break;
        }
        case Method::CnnDidactic: {
            detail::check_keys<data_error>(j,
                                           {"model_type", "window", "filter", "conv_biases",
                                            "out_weights", "out_bias", "learning_rate",
                                            "normalization"},
                                           "model file");
            if (m.x != 3 || m.y != 2)
                throw data_error("the 3x3 model requires window x=3, y=2");
            auto filter = detail::sized_vector<double>(j.at("filter"), "filter", 4);
            auto cb = detail::sized_vector<double>(j.at("conv_biases"), "conv_biases", 4);
            auto ow = detail::sized_vector<double>(j.at("out_weights"), "out_weights", 4);
            std::copy(filter.begin(), filter.end(), m.didactic.params.filter.begin());
            std::copy(cb.begin(), cb.end(), m.didactic.params.conv_biases.begin());
            std::copy(ow.begin(), ow.end(), m.didactic.params.out_weights.begin());
            m.didactic.params.out_bias = j.at("out_bias").get<double>();
            if (j.contains("learning_rate"))
                m.didactic.params.learning_rate = j.at("learning_rate").get<double>();
            m.didactic.normalization = detail::norm_from_json(j.at("normalization"));
            break;
        }
        case Method::CnnGeneral: {
            detail::check_keys<data_error>(j,
                                           {"model_type", "window", "input_rows", "input_cols",
                                            "pooling", "conv", "hidden", "output",
                                            "normalization"},
                                           "model file");
            auto& g = m.general;
            g.input_rows = j.at("input_rows").get<std::size_t>();
            g.input_cols = j.at("input_cols").get<std::size_t>();
            if (g.input_rows != m.x || g.input_cols != m.y + 1)
                throw data_error("network input shape does not match the model window");
            try {
                g.pooling = pooling_from_string(j.at("pooling").get<std::string>());
            } catch (const config_error& e) {
                throw data_error(e.what());
            }
            if (!j.at("conv").is_array() || j.at("conv").empty())
                throw data_error("model needs at least one conv layer");
            std::size_t channels = 1;
            for (const auto& jl : j.at("conv")) {
                detail::check_keys<data_error>(
                    jl, {"in_channels", "out_channels", "weights", "biases"}, "conv layer");
                Conv2x2Layer l;
                l.in_channels = jl.at("in_channels").get<std::size_t>();
                l.out_channels = jl.at("out_channels").get<std::size_t>();
                if (l.in_channels != channels || l.out_channels == 0)
                    throw data_error("conv layer channel chain is inconsistent");
                l.weights = detail::sized_vector<double>(jl.at("weights"), "conv weights",
                                                         l.out_channels * l.in_channels * 4);
                l.biases = detail::sized_vector<double>(jl.at("biases"), "conv biases",
                                                        l.out_channels);
                channels = l.out_channels;
                g.conv.push_back(std::move(l));
            }
            std::size_t fm_rows = 0, fm_cols = 0;
            try {
                detail::conv_shape_after(g.conv.size(), g.input_rows, g.input_cols, fm_rows,
                                         fm_cols);
            } catch (const config_error& e) {
                throw data_error(e.what());
            }
            if (g.pooling != PoolingSpec::None) {
                fm_rows = (fm_rows + 1) / 2;
                fm_cols = (fm_cols + 1) / 2;
            }
            std::size_t width = channels * fm_rows * fm_cols;
            for (const auto& jl : j.at("hidden")) {
                detail::check_keys<data_error>(jl, {"in", "out", "weights", "biases"},
                                               "hidden layer");
                DenseLayer l;
                l.in = jl.at("in").get<std::size_t>();
                l.out = jl.at("out").get<std::size_t>();
                if (l.in != width || l.out == 0)
                    throw data_error("dense layer width chain is inconsistent");
                l.weights =
                    detail::sized_vector<double>(jl.at("weights"), "dense weights", l.out * l.in);
                l.biases = detail::sized_vector<double>(jl.at("biases"), "dense biases", l.out);
                width = l.out;
                g.hidden.push_back(std::move(l));
            }
            const auto& jo = j.at("output");
            detail::check_keys<data_error>(jo, {"in", "out", "weights", "biases"},
                                           "output layer");
            g.output.in = jo.at("in").get<std::size_t>();
            g.output.out = jo.at("out").get<std::size_t>();
            if (g.output.in != width || g.output.out != 1)
                throw data_error("output layer must be one unit fed by the last hidden layer");
            g.output.weights =
                detail::sized_vector<double>(jo.at("weights"), "output weights", width);
            g.output.biases = detail::sized_vector<double>(jo.at("biases"), "output biases", 1);
            g.normalization = detail::norm_from_json(j.at("normalization"));
            break;
        }
    }
    return m;
}

inline void save_model(const std::string& path, const TrainedModel& m) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << model_to_json(m).dump(2) << '\n';
    if (!out) throw data_error("write failed for " + path);
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open model file " + path);
    try {
        nlohmann::json j;
        in >> j;
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad model file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

// The JSON report is byte-reproducible for a given (data, config, seed):
// keys serialize alphabetically, arrays are emitted in deterministic order,
// and no timestamps of the run itself are included.
inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["boundary"] = format_iso8601(r.boundary);
    j["config_digest"] = r.config_digest;
    j["data_digest"] = r.data_digest;
    j["interval_len_min"] = r.interval_len_min;
    j["seed"] = r.seed;
    j["window"] = {{"x", r.window.x}, {"y", r.window.y}, {"targets", r.window.resolved_targets()}};
    j["reference_pct"] = {{"freeway", FREEWAY_REQUIREMENT_PCT},
                          {"provincial", PROVINCIAL_REQUIREMENT_PCT}};
    j["methods"] = nlohmann::json::array();
    for (const auto& m : r.methods) {
        nlohmann::json jm;
        jm["method"] = m.method;
        jm["overall_mape_pct"] = m.overall_mape_pct;
        jm["within_10pct"] = m.within_10pct;
        jm["within_25pct"] = m.within_25pct;
        jm["train_samples"] = m.train_samples;
        jm["test_samples"] = m.test_samples;
        jm["excluded_pairs"] = m.excluded_pairs;
        jm["parameter_count"] = m.parameter_count;
        jm["final_train_loss"] = m.final_train_loss;
        jm["per_segment"] = nlohmann::json::array();
        for (const auto& s : m.per_segment)
            jm["per_segment"].push_back({{"segment_id", s.segment_id},
                                         {"target_index", s.target_index},
                                         {"mape_pct", s.mape_pct},
                                         {"train_samples", s.train_samples},
                                         {"test_samples", s.test_samples},
                                         {"excluded_pairs", s.excluded_pairs}});
        j["methods"].push_back(std::move(jm));
    }
    return j;
}

inline void write_report_json(const std::string& path, const EvalReport& r) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << report_to_json(r).dump(2) << '\n';
    if (!out) throw data_error("write failed for " + path);
}

} // namespace ttcast
