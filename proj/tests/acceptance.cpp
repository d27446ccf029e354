// Release gate for the prediction engine. Each check prints exactly one
// PASS/FAIL line with the measured numbers next to the limits it was held
// to; the process exits nonzero if any check fails. Run it through ctest or
// directly from the build tree.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ttcast/ttcast.hpp"

namespace {

using namespace ttcast;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    const char* name;
    bool pass;
    std::string detail;
};

void report(const Outcome& o, int& failures) {
    std::printf("%s  %-28s  %s\n", o.pass ? "PASS" : "FAIL", o.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[240];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// --- 1: hand-derived 3x3 gradients vs central finite differences ------------

Outcome check_small_model_gradients() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const DidacticCnnParams p = oracles::random_didactic(rng);
        const Grid window = oracles::random_grid(rng, 3, 3);
        const double target = u(rng);
        const auto grads = didactic_gradients(window, target, p);
        const auto fd = oracles::fd_gradient(
            [&](const std::vector<double>& v) {
                const DidacticCnnParams q = oracles::didactic_unflat(v);
                return didactic_loss(didactic_forward(window, q).prediction, target);
            },
            oracles::didactic_flat(p));
        worst = std::max(worst, oracles::max_rel_err(grads.flat(), fd));
    }
    const double dt = seconds_since(t0);
    return {"3x3-gradients-vs-fd", worst < 1e-6 && dt < 1.0,
            fmt("100 triples, max rel err %.2e (limit 1e-06), %.2fs (limit 1s)", worst, dt)};
}

// --- 2: sparse shared-filter form vs dense connection-matrix oracle ---------

Outcome check_connection_matrix_equivalence() {
    std::mt19937_64 rng(72);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const DidacticCnnParams p = oracles::random_didactic(rng);
        const Grid window = oracles::random_grid(rng, 3, 3);
        const auto sparse = didactic_forward(window, p);
        const auto dense = oracles::dense_didactic_forward(window, p);
        worst = std::max(worst, std::fabs(sparse.prediction - dense.prediction));
        for (std::size_t k = 0; k < 4; ++k)
            worst = std::max(worst, std::fabs(sparse.hidden[k] - dense.hidden[k]));
    }

    // Regression pin: with only the second filter tap active, the fourth
    // hidden unit must read the bottom-middle input cell, not the center one
    // a second time.
    DidacticCnnParams p;
    p.filter = {0.0, 1.0, 0.0, 0.0};
    p.conv_biases = {0.0, 0.0, 0.0, 0.0};
    p.out_weights = {1.0, 1.0, 1.0, 1.0};
    p.out_bias = 0.0;
    Grid w(3, 3);
    w(1, 1) = 1000.0;
    w(2, 1) = -7.0;
    const auto f = didactic_forward(w, p);
    const bool pinned = f.hidden[0] == 0.0 && f.hidden[1] == 0.0 &&
                        f.hidden[2] == 1000.0 && f.hidden[3] == -7.0;

    return {"dense-oracle-equivalence", worst < 1e-12 && pinned,
            fmt("1000 trials, max abs diff %.2e (limit 1e-12); h4 reads the "
                "bottom-middle cell: %s",
                worst, pinned ? "yes" : "NO")};
}

// --- 3: configurable-stack gradients vs central finite differences ----------

Outcome check_general_gradients() {
    const auto t0 = Clock::now();
    struct Case {
        std::size_t rows, cols;
        std::vector<std::size_t> conv;
        std::vector<std::size_t> hidden;
        PoolingSpec pool;
    };
    const std::vector<Case> cases{
        {3, 3, {1}, {}, PoolingSpec::None},
        {3, 3, {2}, {}, PoolingSpec::None},
        {3, 3, {2}, {3}, PoolingSpec::None},
        {3, 4, {2}, {4}, PoolingSpec::None},
        {3, 4, {1, 2}, {}, PoolingSpec::None},
        {3, 5, {2, 2}, {3}, PoolingSpec::None},
        {4, 4, {2}, {}, PoolingSpec::Max},
        {4, 4, {2}, {}, PoolingSpec::Mean},
        {4, 5, {3}, {4}, PoolingSpec::Max},
        {4, 5, {3}, {4}, PoolingSpec::Mean},
        {3, 6, {2, 3}, {5}, PoolingSpec::None},
        {5, 5, {2}, {4, 3}, PoolingSpec::None},
        {5, 5, {2, 2}, {}, PoolingSpec::Max},
        {3, 3, {4}, {2}, PoolingSpec::None},
        {4, 6, {2, 2, 2}, {}, PoolingSpec::None},
        {5, 6, {2}, {6}, PoolingSpec::Mean},
        {3, 4, {3}, {3, 2}, PoolingSpec::None},
        {4, 4, {1, 1}, {2}, PoolingSpec::None},
        {6, 6, {2, 2}, {4}, PoolingSpec::Max},
        {3, 6, {2}, {2}, PoolingSpec::Max},
    };

    std::mt19937_64 rng(73);
    double worst = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Case& c = cases[i];
        GeneralCnnConfig config;
        config.conv_filters = c.conv;
        config.hidden_widths = c.hidden;
        config.pooling = c.pool;
        config.seed = 100 + i;
        const GeneralCnnModel model =
            make_general_cnn(c.rows, c.cols, config, NormalizationParams{0.0, 1.0});
        const auto samples = oracles::random_samples(rng, 3, c.rows, c.cols);

        std::vector<double> grad;
        general_gradients(model, samples, grad);
        const auto fd = oracles::fd_gradient(
            [&](const std::vector<double>& v) {
                GeneralCnnModel m2 = model;
                general_set_params(m2, v);
                double total = 0.0;
                for (const auto& s : samples) {
                    const double d = general_forward(m2, s.window) - s.target;
                    total += 0.5 * d * d;
                }
                return total / static_cast<double>(samples.size());
            },
            general_get_params(model));
        worst = std::max(worst, oracles::max_rel_err(grad, fd, /*abs_floor=*/1e-8));
    }
    const double dt = seconds_since(t0);
    return {"general-gradients-vs-fd", worst < 1e-5 && dt < 30.0,
            fmt("20 configurations, max rel err %.2e (limit 1e-05), %.2fs (limit 30s)",
                worst, dt)};
}

// --- 4: point-formula fidelity ----------------------------------------------

Outcome check_traffic_formulas() {
    const double flow = compute_flow(97, 5);
    const double density = estimate_density(1164.0, 88.0);
    const double tt = estimate_travel_time(3.0, 87.0);
    const bool flow_ok = flow == 1164.0;
    const bool density_ok = std::fabs(density - 13.227) < 5e-4;
    const bool tt_ok = std::fabs(tt - 0.0345) < 5e-5;
    const bool loop_ok = std::fabs(compute_space_mean_speed(3.0, tt) - 87.0) < 1e-9 &&
                         std::fabs(density * 88.0 - 1164.0) < 1e-9;
    return {"traffic-formulas", flow_ok && density_ok && tt_ok && loop_ok,
            fmt("flow(97 veh, 5 min)=%.0f density(1164, 88)=%.3f "
                "travel_time(3 km, 87)=%.5f inversions %s",
                flow, density, tt, loop_ok ? "exact" : "BROKEN")};
}

// --- 5: synthetic events through the whole ingestion pipeline ---------------

Outcome check_pipeline_closure() {
    const auto t0 = Clock::now();
    // Three segments, 90 days of 5-minute intervals, 500 vehicles per
    // interval (6000 veh/hr) at 94% tag penetration. Segments are processed
    // one at a time so the ~24M raw reads per segment never coexist.
    const std::array<double, 3> lengths{1.5, 1.0, 2.0};
    const std::size_t horizon = 90 * 288;
    double abs_rel_sum = 0.0;
    std::size_t cells = 0, expected = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        ScenarioConfig config;
        config.segments = {{"S" + std::to_string(s + 1), "D" + std::to_string(s + 1),
                            "D" + std::to_string(s + 2), lengths[s]}};
        config.horizon = horizon;
        config.interval_len_min = 5;
        config.demand_profile = {6000.0}; // 500 vehicles every 5 minutes
        config.penetration = 0.94;
        config.seed = 40 + s;

        const TimeSpaceMatrix truth = generate_scenario(config);
        std::vector<DetectionEvent> events = emit_detection_events(truth, config);
        MatchResult matched = match_trips(events, config.segments[0]);
        events.clear();
        events.shrink_to_fit();

        const std::int64_t end =
            truth.start + static_cast<std::int64_t>(horizon) * 300;
        const auto records =
            aggregate_travel_times(matched.trips, 5, std::make_pair(truth.start, end),
                                   {config.segments[0].segment_id});
        matched.trips.clear();
        matched.trips.shrink_to_fit();
        const TimeSpaceMatrix got = build_matrix(
            records, {config.segments[0].segment_id}, TimelineSpec{truth.start, end, 5});

        expected += horizon;
        for (std::size_t j = 0; j < horizon; ++j) {
            if (!got.observed(0, j)) continue;
            abs_rel_sum +=
                std::fabs(got.values(0, j) - truth.values(0, j)) / truth.values(0, j);
            ++cells;
        }
    }
    const double mean_dev_pct = abs_rel_sum / static_cast<double>(cells) * 100.0;
    const double dt = seconds_since(t0);
    const bool full_coverage = cells == expected;
    return {"event-pipeline-closure",
            mean_dev_pct < 2.0 && dt < 60.0 && full_coverage,
            fmt("%zu/%zu intervals recovered, mean abs rel dev %.3f%% (limit 2%%), "
                "%.1fs (limit 60s)",
                cells, expected, mean_dev_pct, dt)};
}

// --- 6: comparative accuracy on congested corridors -------------------------

// Frequent short pile-ups at the downstream end of the corridor, each
// working its way upstream. Because a burst usually ends within a few
// intervals of being felt, copying the latest reading is not enough: the
// predictor has to judge from the shape of the elevation run how likely the
// slowdown is to persist, which is where the convolutional model earns its
// keep over the linear baseline.
std::vector<CongestionEvent> seeded_events(std::mt19937_64& rng, std::size_t horizon) {
    std::vector<CongestionEvent> events;
    std::uniform_real_distribution<double> severity(0.40, 0.55);
    std::uniform_int_distribution<long> gap(6, 18);
    std::uniform_int_distribution<long> duration(2, 5);
    for (std::size_t t = static_cast<std::size_t>(gap(rng));
         t + 20 < horizon; t += static_cast<std::size_t>(gap(rng))) {
        CongestionEvent e;
        e.origin_segment_index = 2;
        e.start_interval = t;
        e.duration_intervals = static_cast<std::size_t>(duration(rng));
        e.severity = severity(rng);
        e.wave_speed = 1.0;
        events.push_back(e);
    }
    return events;
}

Outcome check_comparative_accuracy() {
    const auto t0 = Clock::now();
    const std::size_t horizon = 2688; // just over nine days of 5-minute intervals
    double sum_linear = 0.0, sum_nn = 0.0, sum_cnn = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ScenarioConfig sc;
        sc.segments = {{"S1", "D1", "D2", 3.0},
                       {"S2", "D2", "D3", 2.0},
                       {"S3", "D3", "D4", 2.5}};
        sc.horizon = horizon;
        sc.demand_profile = {5400.0};
        sc.noise_sd_rel = 0.008;
        sc.seed = seed * 1000 + 17;
        std::mt19937_64 rng(seed * 77 + 5);
        sc.congestion_events = seeded_events(rng, horizon);

        const TimeSpaceMatrix m = generate_scenario(sc);
        // Predict the two downstream segments where congestion actually
        // forms; the upstream segment's row feeds the window as boundary
        // input only (its own series is noise around a flat base, which
        // every method predicts equally well, telling us nothing).
        WindowSpec window;
        window.targets = {1, 2};
        TrainingConfig cfg;
        cfg.seed = seed;
        cfg.nn_hidden = 8;
        cfg.nn_gd = {0.5, 12000, seed};
        cfg.cnn.conv_filters = {2};
        cfg.cnn.hidden_widths = {4};
        cfg.cnn.learning_rate = 1.0;
        cfg.cnn.epochs = 72000;
        cfg.cnn.seed = seed;
        const std::int64_t boundary = m.interval_start(horizon * 4 / 5);
        const auto rep = compare_methods(
            m, {Method::Linear, Method::Nn, Method::CnnGeneral}, window, boundary, cfg);
        for (const auto& mr : rep.methods) {
            if (mr.method == "linear") sum_linear += mr.overall_mape_pct;
            if (mr.method == "nn") sum_nn += mr.overall_mape_pct;
            if (mr.method == "cnn-general") sum_cnn += mr.overall_mape_pct;
        }
    }
    const double linear = sum_linear / 5.0, nn = sum_nn / 5.0, cnn = sum_cnn / 5.0;
    const double dt = seconds_since(t0);
    const bool beats_linear = cnn <= linear - 1.0;
    const bool matches_nn = cnn <= nn + 0.5;
    const bool meets_requirement = cnn < 10.0;
    return {"comparative-accuracy",
            beats_linear && matches_nn && meets_requirement && dt < 600.0,
            fmt("5-seed mean MAPE%%: cnn-general %.2f, linear %.2f, nn %.2f "
                "(need cnn<=linear-1, cnn<=nn+0.5, cnn<10), %.0fs (limit 600s)",
                cnn, linear, nn, dt)};
}

// --- 7: identical runs produce identical report bytes -----------------------

std::string file_bytes(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return {};
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, n);
    std::fclose(f);
    return out;
}

Outcome check_deterministic_reports() {
    ScenarioConfig sc;
    sc.segments = {{"S1", "D1", "D2", 3.0},
                   {"S2", "D2", "D3", 2.0},
                   {"S3", "D3", "D4", 2.5}};
    sc.horizon = 480;
    sc.demand_profile = {5400.0};
    sc.congestion_events = {{2, 60, 24, 0.5, 1.0}, {1, 300, 18, 0.45, 0.5}};
    sc.seed = 9;
    const TimeSpaceMatrix m = generate_scenario(sc);

    WindowSpec window;
    TrainingConfig cfg;
    cfg.seed = 5;
    cfg.logistic_gd.epochs = 500;
    cfg.nn_gd.epochs = 500;
    cfg.cnn.conv_filters = {2};
    cfg.cnn.hidden_widths = {4};
    cfg.cnn.epochs = 400;
    const std::vector<Method> methods{Method::Avg, Method::Linear, Method::Logistic,
                                      Method::Nn, Method::CnnGeneral};
    const std::int64_t boundary = m.interval_start(380);

    const std::string path_a = "acceptance_report_a.json";
    const std::string path_b = "acceptance_report_b.json";
    write_report_json(path_a, compare_methods(m, methods, window, boundary, cfg));
    write_report_json(path_b, compare_methods(m, methods, window, boundary, cfg));
    const std::string bytes_a = file_bytes(path_a);
    const std::string bytes_b = file_bytes(path_b);
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());

    const bool same = !bytes_a.empty() && bytes_a == bytes_b;
    return {"deterministic-reports", same,
            fmt("two identical runs, %zu bytes each: %s", bytes_a.size(),
                same ? "byte-identical" : "DIFFER")};
}

// --- 8: weight sharing keeps the 3x3 model small ----------------------------

Outcome check_parameter_economy() {
    static_assert(DidacticCnnParams::parameter_count == 13);
    // A fully wired counterpart of the same shape: each of the four hidden
    // units reads all nine inputs, plus four hidden biases and four output
    // taps.
    constexpr std::size_t dense = 9 * 4 + 4 + 4;
    constexpr std::size_t shared = DidacticCnnParams::parameter_count;
    return {"parameter-economy", shared < dense,
            fmt("shared form %zu < fully wired %zu (= 9*4 + 4 + 4)", shared, dense)};
}

} // namespace

int main() {
    int failures = 0;
    report(check_small_model_gradients(), failures);
    report(check_connection_matrix_equivalence(), failures);
    report(check_general_gradients(), failures);
    report(check_traffic_formulas(), failures);
    report(check_pipeline_closure(), failures);
    report(check_comparative_accuracy(), failures);
    report(check_deterministic_reports(), failures);
    report(check_parameter_economy(), failures);
    if (failures == 0)
        std::printf("all 8 checks passed\n");
    else
        std::printf("%d of 8 checks FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
