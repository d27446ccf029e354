#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ttcast/errors.hpp"
#include "ttcast/grid2d.hpp"
#include "ttcast/traffic.hpp"

namespace ttcast {

// Travel-time grid over a corridor: rows are road segments in adjacency
// order (row 0 most upstream), columns are consecutive equal-length
// intervals. Cells without an observation are masked out.
struct TimeSpaceMatrix {
    std::vector<std::string> segment_ids;
    std::int64_t start = 0; // unix seconds of column 0
    int interval_len_min = 5;
    Grid values;                    // travel_time_hr; 0 where unobserved
    std::vector<std::uint8_t> mask; // row-major, 1 = observed

    std::size_t segments() const { return values.rows(); }
    std::size_t intervals() const { return values.cols(); }

    std::int64_t interval_start(std::size_t col) const {
        return start + static_cast<std::int64_t>(col) * interval_len_min * 60;
    }

    bool observed(std::size_t r, std::size_t c) const {
        return mask[r * values.cols() + c] != 0;
    }
    void set(std::size_t r, std::size_t c, double v) {
        values(r, c) = v;
        mask[r * values.cols() + c] = 1;
    }
    void clear(std::size_t r, std::size_t c) {
        values(r, c) = 0.0;
        mask[r * values.cols() + c] = 0;
    }
};

struct TimelineSpec {
    std::int64_t start = 0; // inclusive, aligned to step
    std::int64_t end = 0;   // exclusive
    int step_min = 5;
};

struct BuildDiagnostics {
    std::size_t unknown_segment_records = 0;
    std::size_t out_of_range_records = 0;
};

// Lays IntervalRecords into a matrix over the given timeline. Records for
// segments not in `segments` or intervals outside the timeline are rejected
// and counted. Duplicate records for one cell are merged by trip-count
// weighted mean.
inline TimeSpaceMatrix build_matrix(const std::vector<IntervalRecord>& records,
                                    const std::vector<std::string>& segments,
                                    const TimelineSpec& timeline,
                                    BuildDiagnostics* diag = nullptr) {
    if (timeline.step_min <= 0 || timeline.end <= timeline.start)
        throw config_error("timeline must have positive step and extent");
    const std::int64_t step_s = static_cast<std::int64_t>(timeline.step_min) * 60;
    const std::size_t cols =
        static_cast<std::size_t>((timeline.end - timeline.start + step_s - 1) / step_s);

    TimeSpaceMatrix m;
    m.segment_ids = segments;
    m.start = timeline.start;
    m.interval_len_min = timeline.step_min;
    m.values = Grid(segments.size(), cols, 0.0);
    m.mask.assign(segments.size() * cols, 0);

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < segments.size(); ++i) row_of[segments[i]] = i;

    Grid weight(segments.size(), cols, 0.0);
    BuildDiagnostics local;
    for (const IntervalRecord& rec : records) {
        if (!rec.mean_travel_time_hr || rec.trip_count == 0) continue;
        auto it = row_of.find(rec.segment_id);
        if (it == row_of.end()) {
            ++local.unknown_segment_records;
            continue;
        }
        if (rec.interval_len_min != timeline.step_min)
            throw config_error("record interval length does not match timeline step");
        const std::int64_t offset = rec.interval_start - timeline.start;
        if (offset < 0 || offset % step_s != 0 ||
            offset / step_s >= static_cast<std::int64_t>(cols)) {
            ++local.out_of_range_records;
            continue;
        }
        const std::size_t r = it->second;
        const std::size_t c = static_cast<std::size_t>(offset / step_s);
        const double w = static_cast<double>(rec.trip_count);
        const double prev_w = weight(r, c);
        m.values(r, c) = (m.values(r, c) * prev_w + *rec.mean_travel_time_hr * w) / (prev_w + w);
        weight(r, c) = prev_w + w;
        m.mask[r * cols + c] = 1;
    }
    if (diag) *diag = local;
    return m;
}

enum class FillPolicy { Drop, ForwardFill, SegmentMedian };

// Missing-cell handling. Drop leaves the mask alone (windowing skips those
// anchors). ForwardFill copies the last observed value along time per
// segment; cells before the first observation stay missing. SegmentMedian
// fills with the median of that segment's observed values.
inline TimeSpaceMatrix fill_missing(TimeSpaceMatrix m, FillPolicy policy) {
    if (policy == FillPolicy::Drop) return m;
    const std::size_t rows = m.segments(), cols = m.intervals();
    for (std::size_t r = 0; r < rows; ++r) {
        if (policy == FillPolicy::ForwardFill) {
            bool have = false;
            double last = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                if (m.observed(r, c)) {
                    have = true;
                    last = m.values(r, c);
                } else if (have) {
                    m.set(r, c, last);
                }
            }
        } else {
            std::vector<double> observed;
            for (std::size_t c = 0; c < cols; ++c)
                if (m.observed(r, c)) observed.push_back(m.values(r, c));
            if (observed.empty()) continue;
            std::sort(observed.begin(), observed.end());
            const std::size_t n = observed.size();
            const double median = (n % 2 == 1)
                                      ? observed[n / 2]
                                      : 0.5 * (observed[n / 2 - 1] + observed[n / 2]);
            for (std::size_t c = 0; c < cols; ++c)
                if (!m.observed(r, c)) m.set(r, c, median);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Min-max scale chosen from training data only, widened by 5% of the range
// on each side so sigmoid-bounded models can represent every training target
// strictly inside (0,1).
struct NormalizationParams {
    double t_min = 0.0;
    double t_max = 1.0;

    static NormalizationParams from_training(std::span<const double> values) {
        if (values.empty())
            throw data_error("no training values to derive normalization from");
        double lo = values[0], hi = values[0];
        for (double v : values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        double pad = 0.05 * (hi - lo);
        if (pad <= 0.0) pad = std::max(0.05 * std::abs(hi), 1e-9);
        return {lo - pad, hi + pad};
    }

    void validate() const {
        if (!(t_max > t_min))
            throw config_error("degenerate normalization: t_max must exceed t_min");
    }

    double normalize(double v) const {
        validate();
        return (v - t_min) / (t_max - t_min);
    }
    double denormalize(double v) const {
        validate();
        return t_min + v * (t_max - t_min);
    }
};

// Scales every observed cell; masked cells keep their placeholder.
inline TimeSpaceMatrix normalize(TimeSpaceMatrix m, const NormalizationParams& params) {
    params.validate();
    for (std::size_t r = 0; r < m.segments(); ++r)
        for (std::size_t c = 0; c < m.intervals(); ++c)
            if (m.observed(r, c)) m.values(r, c) = params.normalize(m.values(r, c));
    return m;
}

// ---------------------------------------------------------------------------
// Supervised windowing
// ---------------------------------------------------------------------------

// One supervised sample: an x-by-(y+1) fully observed patch (rows in
// adjacency order, columns oldest to newest, rightmost column = anchor
// interval j) and the target segment's value at interval j+1.
struct TrainingSample {
    Grid window;
    double target = 0.0;
    std::size_t target_segment_index = 0;       // z, row inside the window
    std::size_t anchor_interval = 0;            // column index j in the source matrix
    std::int64_t target_interval_start = 0;     // start of interval j+1
};

// Emits one sample per anchor j whose window (intervals j-y..j across the
// first x segment rows) and target cell (z, j+1) are fully observed.
inline std::vector<TrainingSample> window_samples(const TimeSpaceMatrix& m,
                                                  std::size_t x, std::size_t y,
                                                  std::size_t z) {
    if (x == 0 || x > m.segments())
        throw config_error("window segment count out of range");
    if (y + 2 > m.intervals())
        throw config_error("lookback exceeds matrix extent");
    if (z >= x)
        throw config_error("target segment index outside the window");

    std::vector<TrainingSample> samples;
    for (std::size_t j = y; j + 1 < m.intervals(); ++j) {
        bool ok = m.observed(z, j + 1);
        for (std::size_t r = 0; ok && r < x; ++r)
            for (std::size_t c = j - y; ok && c <= j; ++c)
                if (!m.observed(r, c)) ok = false;
        if (!ok) continue;

        TrainingSample s;
        s.window = Grid(x, y + 1);
        for (std::size_t r = 0; r < x; ++r)
            for (std::size_t c = 0; c <= y; ++c)
                s.window(r, c) = m.values(r, j - y + c);
        s.target = m.values(z, j + 1);
        s.target_segment_index = z;
        s.anchor_interval = j;
        s.target_interval_start = m.interval_start(j + 1);
        samples.push_back(std::move(s));
    }
    return samples;
}

// Chronological split: a sample is test data iff its target interval starts
// at or after the boundary.
inline std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>>
split_by_date(std::vector<TrainingSample> samples, std::int64_t boundary) {
    std::vector<TrainingSample> train, test;
    for (auto& s : samples) {
        (s.target_interval_start >= boundary ? test : train).push_back(std::move(s));
    }
    return {std::move(train), std::move(test)};
}

} // namespace ttcast
