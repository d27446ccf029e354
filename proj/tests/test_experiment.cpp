#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ttcast/experiment.hpp"
#include "ttcast/json_io.hpp"
#include "ttcast/metrics.hpp"

using namespace ttcast;

namespace {

// Dense matrix with a smooth, strictly positive travel-time surface.
TimeSpaceMatrix varied_matrix(std::size_t segments, std::size_t intervals) {
    TimeSpaceMatrix m;
    for (std::size_t r = 0; r < segments; ++r)
        m.segment_ids.push_back("S" + std::to_string(r + 1));
    m.start = 0;
    m.interval_len_min = 5;
    m.values = Grid(segments, intervals);
    m.mask.assign(segments * intervals, 0);
    for (std::size_t r = 0; r < segments; ++r)
        for (std::size_t c = 0; c < intervals; ++c)
            m.set(r, c,
                  0.03 + 0.01 * std::sin(0.37 * double(c) + 1.3 * double(r)) +
                      0.002 * double(r));
    return m;
}

TimeSpaceMatrix constant_matrix(std::size_t segments, std::size_t intervals, double v) {
    TimeSpaceMatrix m = varied_matrix(segments, intervals);
    for (double& cell : m.values.data()) cell = v;
    return m;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("window spec defaults to every row as a target") {
    WindowSpec w;
    w.x = 4;
    CHECK(w.resolved_targets() == std::vector<std::size_t>{0, 1, 2, 3});
    w.targets = {2};
    CHECK(w.resolved_targets() == std::vector<std::size_t>{2});
}

TEST_CASE("relative error and accuracy bands") {
    CHECK(relative_error(100.0, 110.0) == Catch::Approx(0.10));
    CHECK(relative_error(100.0, 90.0) == Catch::Approx(0.10));
    CHECK_THROWS_AS(relative_error(0.0, 1.0), data_error);
    CHECK_THROWS_AS(relative_error(-2.0, 1.0), data_error);

    const std::vector<double> actual{100, 100, 100, 0};
    const std::vector<double> pred{105, 120, 100, 50};
    CHECK(within_band(actual, pred, 0.10) == Catch::Approx(2.0 / 3.0));
    CHECK(within_band(actual, pred, 0.25) == Catch::Approx(1.0));
}

TEST_CASE("mape agrees with a long-double oracle") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> a(0.5, 3.0), e(-0.4, 0.4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> actual, pred;
        for (int i = 0; i < 40; ++i) {
            actual.push_back(a(rng));
            pred.push_back(actual.back() * (1.0 + e(rng)));
        }
        // Nonpositive actuals must be skipped, not averaged in.
        actual[7] = 0.0;
        actual[21] = -1.0;
        std::size_t excluded = 0;
        const double got = mape(actual, pred, &excluded);
        CHECK(excluded == 2);
        CHECK(got == Catch::Approx(oracles::mape_oracle(actual, pred)).epsilon(1e-12));
    }

    std::vector<double> actual{1.0, 2.0, 4.0};
    std::vector<double> pred{1.1, 1.8, 4.4};
    const double base = mape(actual, pred);
    std::reverse(actual.begin(), actual.end());
    std::reverse(pred.begin(), pred.end());
    CHECK(mape(actual, pred) == Catch::Approx(base).epsilon(1e-12));

    const std::vector<double> dead{0.0, -3.0};
    CHECK_THROWS_AS(mape(dead, dead), data_error);
}

TEST_CASE("prepare_split divides by target date and freezes train-only scaling") {
    const auto m = varied_matrix(3, 14);
    const std::int64_t boundary = m.interval_start(10);
    const auto sp = detail::prepare_split(m, 3, 2, 1, boundary);

    CHECK(sp.raw_train.size() == 7);  // anchors 2..8 target before the boundary
    CHECK(sp.raw_test.size() == 4);   // anchors 9..12
    for (const auto& s : sp.raw_train) CHECK(s.target_interval_start < boundary);
    for (const auto& s : sp.raw_test) CHECK(s.target_interval_start >= boundary);

    // The scaling parameters must be derivable from the training samples
    // alone; recompute them here and demand an exact match.
    std::vector<double> values;
    for (const auto& s : sp.raw_train) {
        const auto& d = s.window.data();
        values.insert(values.end(), d.begin(), d.end());
        values.push_back(s.target);
    }
    const auto norm = NormalizationParams::from_training(values);
    CHECK(sp.norm.t_min == norm.t_min);
    CHECK(sp.norm.t_max == norm.t_max);

    REQUIRE(sp.norm_train.size() == sp.raw_train.size());
    for (std::size_t i = 0; i < sp.raw_train.size(); ++i) {
        CHECK(sp.norm_train[i].window(0, 0) ==
              norm.normalize(sp.raw_train[i].window(0, 0)));
        CHECK(sp.norm_train[i].target == norm.normalize(sp.raw_train[i].target));
    }

    CHECK_THROWS_AS(detail::prepare_split(m, 3, 2, 1, m.start), config_error);
    CHECK_THROWS_AS(detail::prepare_split(m, 3, 2, 1, m.interval_start(200)),
                    config_error);
    const auto lax =
        detail::prepare_split(m, 3, 2, 1, m.interval_start(200), /*require_test=*/false);
    CHECK(lax.raw_test.empty());
    CHECK(lax.raw_train.size() == 11);
}

TEST_CASE("a constant surface is predicted perfectly") {
    const auto m = constant_matrix(3, 40, 0.03);
    WindowSpec w;
    w.targets = {1};
    const std::int64_t boundary = m.interval_start(34);
    TrainingConfig cfg;

    const auto report = compare_methods(m, {Method::Avg, Method::Linear}, w, boundary, cfg);
    REQUIRE(report.methods.size() == 2);
    CHECK(report.methods[0].method == "avg");
    CHECK(report.methods[1].method == "linear");
    CHECK(report.methods[0].overall_mape_pct < 1e-9);
    CHECK(report.methods[1].overall_mape_pct < 1e-4);
    CHECK(report.methods[0].within_10pct == 1.0);
    CHECK(report.methods[0].within_25pct == 1.0);
    CHECK(report.methods[0].parameter_count == 0);
    CHECK(report.methods[1].parameter_count == 3 * 6 + 1);
}

TEST_CASE("comparisons are deterministic and sorted by method name") {
    const auto m = varied_matrix(3, 40);
    WindowSpec w;
    const std::int64_t boundary = m.interval_start(32);
    TrainingConfig cfg;
    cfg.seed = 3;

    const std::vector<Method> methods{Method::Linear, Method::Avg};
    const auto r1 = compare_methods(m, methods, w, boundary, cfg);
    const auto r2 = compare_methods(m, methods, w, boundary, cfg);
    CHECK(report_to_json(r1).dump(2) == report_to_json(r2).dump(2));
    CHECK(r1.methods[0].method == "avg");

    const auto single = run_experiment(m, Method::Linear, w, boundary, cfg);
    const auto direct = compare_methods(m, {Method::Linear}, w, boundary, cfg);
    CHECK(report_to_json(single).dump(2) == report_to_json(direct).dump(2));

    TrainingConfig other = cfg;
    other.seed = 4;
    const auto r3 = compare_methods(m, methods, w, boundary, other);
    CHECK(r3.config_digest != r1.config_digest);
    CHECK(r3.data_digest == r1.data_digest);

    const auto r4 = compare_methods(m, methods, w, m.interval_start(30), cfg);
    CHECK(r4.config_digest != r1.config_digest);

    CHECK_THROWS_AS(compare_methods(m, {}, w, boundary, cfg), config_error);
}

TEST_CASE("all six methods run on a 3x3 window and report a table") {
    const auto m = varied_matrix(3, 40);
    WindowSpec w;
    w.x = 3;
    w.y = 2;
    w.targets = {1};
    const std::int64_t boundary = m.interval_start(32);
    TrainingConfig cfg;
    cfg.seed = 2;
    cfg.cnn.conv_filters = {2};
    cfg.cnn.hidden_widths = {4};
    cfg.cnn.learning_rate = 0.3;
    cfg.cnn.epochs = 1500;

    const std::vector<Method> all{Method::Avg,         Method::Linear,
                                  Method::Logistic,    Method::Nn,
                                  Method::CnnDidactic, Method::CnnGeneral};
    const auto report = compare_methods(m, all, w, boundary, cfg);
    REQUIRE(report.methods.size() == 6);
    for (const auto& mr : report.methods) {
        INFO(mr.method);
        CHECK(std::isfinite(mr.overall_mape_pct));
        CHECK(mr.overall_mape_pct >= 0.0);
        CHECK(mr.test_samples == 8);
        REQUIRE(mr.per_segment.size() == 1);
        CHECK(mr.per_segment[0].segment_id == "S2");
        if (mr.method == "cnn-didactic") CHECK(mr.parameter_count == 13);
        if (mr.method == "linear") CHECK(mr.parameter_count == 10);
        if (mr.method == "avg") CHECK(mr.parameter_count == 0);
    }

    const std::string table = format_comparison_table(report);
    for (const auto& mr : report.methods)
        CHECK(table.find(mr.method) != std::string::npos);
    CHECK(table.find("freeway requirement") != std::string::npos);
    CHECK(table.find("provincial requirement") != std::string::npos);
    CHECK(table.find("per-segment MAPE%") != std::string::npos);
}

TEST_CASE("the 3x3 method refuses other window shapes") {
    const auto m = varied_matrix(3, 40);
    WindowSpec w; // default 3x6
    CHECK_THROWS_AS(
        compare_methods(m, {Method::CnnDidactic}, w, m.interval_start(32), TrainingConfig{}),
        config_error);
}

TEST_CASE("fit, save, reload, and predict agree end to end") {
    const auto m = varied_matrix(3, 40);
    const std::int64_t boundary = m.interval_start(32);
    TrainingConfig cfg;
    double loss = -1.0;
    const TrainedModel model = fit_single(m, Method::Linear, 3, 5, 1, boundary, cfg, &loss);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
    CHECK(model_parameter_count(model) == 19);

    TempFile file("tmp_model_pipeline.json");
    save_model(file.path, model);
    const TrainedModel back = load_model(file.path);

    const auto rows = predict_all(model, m);
    const auto rows_back = predict_all(back, m);
    REQUIRE(rows.size() == 35); // anchors 5..39, one per fully observed window
    REQUIRE(rows_back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].segment_id == "S2");
        CHECK(rows[i].interval_start == rows_back[i].interval_start);
        CHECK(rows[i].predicted_hr == rows_back[i].predicted_hr);
    }
    CHECK(rows.front().interval_start == m.interval_start(6));
    // The last anchor sits on the final column: a forecast past the data.
    CHECK(rows.back().interval_start == m.interval_start(40));
}

TEST_CASE("prediction skips broken windows but forecasts unobserved targets") {
    auto m = varied_matrix(3, 30);
    TrainingConfig cfg;
    const TrainedModel model =
        fit_single(m, Method::Avg, 3, 5, 1, m.interval_start(24), cfg);

    m.clear(1, 10);
    const auto rows = predict_all(model, m);
    // Anchors 10..15 need column 10 inside the window; only the forecast of
    // column 10 itself (anchor 9) survives.
    CHECK(rows.size() == 25 - 6);
    const bool has_forecast_of_hole =
        std::any_of(rows.begin(), rows.end(), [&](const PredictionRow& r) {
            return r.interval_start == m.interval_start(10);
        });
    CHECK(has_forecast_of_hole);

    // Forward-filling repairs the hole and restores every anchor.
    CHECK(predict_all(model, m, FillPolicy::ForwardFill).size() == 25);

    const auto tiny = varied_matrix(2, 30);
    CHECK_THROWS_AS(predict_all(model, tiny), data_error);
    const auto slim = varied_matrix(3, 4);
    CHECK_THROWS_AS(predict_all(model, slim), data_error);

    auto ruined = varied_matrix(3, 7);
    for (std::size_t c = 0; c < 7; ++c) ruined.clear(0, c);
    CHECK_THROWS_AS(predict_all(model, ruined), data_error);
}
