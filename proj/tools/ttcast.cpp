// Command-line frontend: scenario generation, event ingestion, model
// training, prediction, and method comparison over travel-time matrices.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ttcast/ttcast.hpp"

namespace {

using namespace ttcast;

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = s.find(sep, pos);
        if (next == std::string::npos) {
            parts.push_back(s.substr(pos));
            break;
        }
        parts.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return parts;
}

std::size_t parse_size(const std::string& s, const char* what) {
    try {
        std::size_t idx = 0;
        const unsigned long long v = std::stoull(s, &idx);
        if (idx != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw config_error(std::string("bad ") + what + " '" + s + "'");
    }
}

void parse_window_xyz(const std::string& s, std::size_t& x, std::size_t& y, std::size_t& z) {
    const auto parts = split_list(s, ',');
    if (parts.size() != 3)
        throw config_error("--window expects x,y,z (segments, lookback, target row)");
    x = parse_size(parts[0], "window x");
    y = parse_size(parts[1], "window y");
    z = parse_size(parts[2], "window z");
    if (x == 0) throw config_error("window x must be positive");
    if (z >= x) throw config_error("window z must be below x");
}

WindowSpec parse_window_xy(const std::string& s) {
    const auto parts = split_list(s, ',');
    if (parts.size() != 2) throw config_error("--window expects x,y");
    WindowSpec w;
    w.x = parse_size(parts[0], "window x");
    w.y = parse_size(parts[1], "window y");
    if (w.x == 0) throw config_error("window x must be positive");
    return w;
}

void run_generate(const std::string& config_path, const std::string& out_dir) {
    const ScenarioConfig config = load_scenario_config(config_path);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    ScenarioDiagnostics diag;
    const TimeSpaceMatrix truth = generate_scenario(config, &diag);
    write_matrix_csv((dir / "truth_matrix.csv").string(), truth);
    write_segments_csv((dir / "segments.csv").string(), config.segments);

    std::ofstream events_out(dir / "events.csv");
    if (!events_out) throw data_error("cannot write " + (dir / "events.csv").string());
    events_out << "detector_id,vehicle_tag,timestamp_unix_s\n";
    const std::size_t n_events =
        emit_detection_events_to(truth, config, [&](const DetectionEvent& ev) {
            events_out << ev.detector_id << ',' << ev.vehicle_tag << ',' << ev.timestamp
                       << '\n';
        });
    if (!events_out) throw data_error("write failed for " + (dir / "events.csv").string());

    std::cout << "wrote " << truth.segments() << " segments x " << truth.intervals()
              << " intervals and " << n_events << " detection events to " << out_dir << '\n';
    if (diag.oversaturated_intervals > 0)
        std::cout << "note: demand at or above capacity in " << diag.oversaturated_intervals
                  << " cells\n";
}

void run_ingest(const std::string& events_path, const std::string& segments_path,
                int interval_min, const std::string& out_path) {
    if (interval_min <= 0 || 60 % interval_min != 0)
        throw config_error("--interval must divide 60 minutes");
    const std::vector<DetectionEvent> events = read_events_csv(events_path);
    const std::vector<SegmentDef> segments = read_segments_csv(segments_path);

    std::vector<Trip> trips;
    MatchStats totals;
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const SegmentDef& seg : segments) {
        MatchResult r = match_trips(events, seg);
        totals.origin_reads += r.stats.origin_reads;
        totals.dest_reads += r.stats.dest_reads;
        totals.matched += r.stats.matched;
        totals.dropped_origin_reads += r.stats.dropped_origin_reads;
        totals.dropped_dest_reads += r.stats.dropped_dest_reads;
        for (const Trip& t : r.trips) {
            lo = std::min(lo, t.arrive);
            hi = std::max(hi, t.arrive);
        }
        trips.insert(trips.end(), std::make_move_iterator(r.trips.begin()),
                     std::make_move_iterator(r.trips.end()));
    }
    if (trips.empty()) throw data_error("no trips matched any segment");

    std::vector<std::string> ids;
    ids.reserve(segments.size());
    for (const SegmentDef& seg : segments) ids.push_back(seg.segment_id);

    const std::vector<IntervalRecord> records =
        aggregate_travel_times(trips, interval_min, {{lo, hi + 1}}, ids);
    const std::int64_t step_s = static_cast<std::int64_t>(interval_min) * 60;
    const TimelineSpec timeline{align_to_interval(lo, interval_min),
                                align_to_interval(hi, interval_min) + step_s, interval_min};
    const TimeSpaceMatrix matrix = build_matrix(records, ids, timeline);
    write_matrix_csv(out_path, matrix);

    std::size_t observed = 0;
    for (std::uint8_t m : matrix.mask) observed += m;
    std::cout << "matched " << totals.matched << " trips (" << totals.dropped_origin_reads
              << " origin reads and " << totals.dropped_dest_reads
              << " destination reads unmatched)\n"
              << "wrote " << matrix.segments() << " segments x " << matrix.intervals()
              << " intervals (" << observed << " observed cells) to " << out_path << '\n';
}

void run_train(const std::string& matrix_path, const std::string& method_str,
               const std::string& window_str, const std::string& split_str,
               const std::string& config_path, const std::string& model_out) {
    const TimeSpaceMatrix matrix = read_matrix_csv(matrix_path);
    const Method method = parse_method(method_str);
    std::size_t x = 0, y = 0, z = 0;
    parse_window_xyz(window_str, x, y, z);
    const std::int64_t boundary = parse_iso8601(split_str);
    const TrainingConfig cfg =
        config_path.empty() ? TrainingConfig{} : load_training_config(config_path);

    double final_loss = 0.0;
    const TrainedModel model = fit_single(matrix, method, x, y, z, boundary, cfg, &final_loss);
    save_model(model_out, model);
    std::cout << "trained " << method_str << " on windows " << x << 'x' << (y + 1)
              << " targeting row " << z << "; " << model_parameter_count(model)
              << " parameters";
    // Closed-form fits (avg, linear) have no training trace to report.
    if (method != Method::Avg && method != Method::Linear)
        std::cout << ", final mean train loss " << final_loss;
    std::cout << '\n' << "model written to " << model_out << '\n';
}

void run_predict(const std::string& model_path, const std::string& matrix_path,
                 const std::string& out_path) {
    const TrainedModel model = load_model(model_path);
    const TimeSpaceMatrix matrix = read_matrix_csv(matrix_path);
    const std::vector<PredictionRow> rows = predict_all(model, matrix);
    write_predictions_csv(out_path, rows);
    std::cout << "wrote " << rows.size() << " predictions to " << out_path << '\n';
}

void run_evaluate(const std::string& matrix_path, const std::string& methods_str,
                  const std::string& split_str, const std::string& report_path,
                  const std::string& window_str, const std::string& config_path,
                  std::int64_t seed_flag) {
    const TimeSpaceMatrix matrix = read_matrix_csv(matrix_path);
    std::vector<Method> methods;
    for (const std::string& name : split_list(methods_str, ','))
        methods.push_back(parse_method(name));
    const std::int64_t boundary = parse_iso8601(split_str);
    const WindowSpec window = parse_window_xy(window_str);
    TrainingConfig cfg =
        config_path.empty() ? TrainingConfig{} : load_training_config(config_path);
    if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);

    const EvalReport report = compare_methods(matrix, methods, window, boundary, cfg);
    std::cout << format_comparison_table(report);
    if (!report_path.empty()) {
        write_report_json(report_path, report);
        std::cout << "\nreport written to " << report_path << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"travel-time forecasting over detector-identified trips"};
    app.require_subcommand(1);

    std::string gen_config, gen_out;
    auto* gen = app.add_subcommand("generate",
                                   "synthesize a corridor: events + ground-truth matrix");
    gen->add_option("--config", gen_config, "scenario config JSON")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->callback([&] { run_generate(gen_config, gen_out); });

    std::string ing_events, ing_segments, ing_out;
    int ing_interval = 5;
    auto* ing = app.add_subcommand("ingest",
                                   "match detection events into a travel-time matrix");
    ing->add_option("--events", ing_events, "detection events CSV")->required();
    ing->add_option("--segments", ing_segments, "segment definitions CSV")->required();
    ing->add_option("--interval", ing_interval, "interval length in minutes (default 5)");
    ing->add_option("--out", ing_out, "output matrix CSV")->required();
    ing->callback([&] { run_ingest(ing_events, ing_segments, ing_interval, ing_out); });

    std::string tr_matrix, tr_method, tr_window, tr_split, tr_config, tr_model_out;
    auto* tr = app.add_subcommand("train", "fit one model for one target segment row");
    tr->add_option("--matrix", tr_matrix, "travel-time matrix CSV")->required();
    tr->add_option("--method", tr_method,
                   "avg|linear|logistic|nn|cnn-didactic|cnn-general")
        ->required();
    tr->add_option("--window", tr_window, "x,y,z: segments, lookback, target row")->required();
    tr->add_option("--split", tr_split, "train/test boundary (ISO-8601)")->required();
    tr->add_option("--config", tr_config, "training config JSON (optional)");
    tr->add_option("--model-out", tr_model_out, "output model JSON")->required();
    tr->callback([&] {
        run_train(tr_matrix, tr_method, tr_window, tr_split, tr_config, tr_model_out);
    });

    std::string pr_model, pr_matrix, pr_out;
    auto* pr = app.add_subcommand("predict", "predict next-interval travel times");
    pr->add_option("--model", pr_model, "trained model JSON")->required();
    pr->add_option("--matrix", pr_matrix, "travel-time matrix CSV")->required();
    pr->add_option("--out", pr_out, "output predictions CSV")->required();
    pr->callback([&] { run_predict(pr_model, pr_matrix, pr_out); });

    std::string ev_matrix, ev_methods, ev_split, ev_report, ev_config;
    std::string ev_window = "3,5";
    std::int64_t ev_seed = -1;
    auto* ev = app.add_subcommand("evaluate", "compare methods on a chronological split");
    ev->add_option("--matrix", ev_matrix, "travel-time matrix CSV")->required();
    ev->add_option("--methods", ev_methods, "comma-separated method list")->required();
    ev->add_option("--split", ev_split, "train/test boundary (ISO-8601)")->required();
    ev->add_option("--report", ev_report, "machine-readable JSON report path");
    ev->add_option("--window", ev_window, "x,y (default 3,5); every row is a target");
    ev->add_option("--config", ev_config, "training config JSON (optional)");
    ev->add_option("--seed", ev_seed, "override the config seed");
    ev->callback([&] {
        run_evaluate(ev_matrix, ev_methods, ev_split, ev_report, ev_window, ev_config,
                     ev_seed);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ttcast::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ttcast::divergence_error& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 4;
    } catch (const ttcast::data_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
