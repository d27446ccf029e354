#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/traffic.hpp"

namespace ttcast {

// A slowdown that appears at a downstream segment and works its way
// upstream: segment origin-k is hit `k / wave_speed` intervals (rounded)
// after the origin segment.
struct CongestionEvent {
    std::size_t origin_segment_index = 0; // most downstream segment hit first
    std::size_t start_interval = 0;
    std::size_t duration_intervals = 1;
    double severity = 0.5;   // fraction of speed removed, in (0,1)
    double wave_speed = 1.0; // segments per interval, upstream propagation
};

struct ScenarioConfig {
    std::vector<SegmentDef> segments; // adjacency order, index 0 most upstream
    std::size_t horizon = 288;        // interval count
    int interval_len_min = 5;
    std::int64_t start = 0;           // unix seconds of interval 0
    double free_flow_speed = 90.0;    // km/hr
    double jam_density = 300.0;       // car/km
    std::vector<double> demand_profile = {600.0}; // veh/hr, cycled over the horizon
    std::vector<CongestionEvent> congestion_events;
    double noise_sd_rel = 0.03;  // relative sd of multiplicative travel-time noise
    double penetration = 0.94;   // fraction of vehicles carrying a tag
    std::uint64_t seed = 1;

    void validate() const {
        if (segments.empty()) throw config_error("scenario needs at least one segment");
        if (horizon == 0) throw config_error("horizon must be positive");
        if (interval_len_min <= 0 || 60 % interval_len_min != 0)
            throw config_error("interval length must divide 60 minutes");
        if (free_flow_speed <= 0.0 || jam_density <= 0.0)
            throw config_error("speeds and densities must be positive");
        if (demand_profile.empty()) throw config_error("demand profile must be non-empty");
        for (double q : demand_profile)
            if (q < 0.0) throw config_error("demand must be nonnegative");
        if (penetration <= 0.0 || penetration > 1.0)
            throw config_error("penetration must be in (0, 1]");
        if (noise_sd_rel < 0.0) throw config_error("noise sd must be nonnegative");
        for (const auto& s : segments) {
            if (s.length_km <= 0.0) throw config_error("segment length must be positive");
            if (s.origin_detector == s.dest_detector)
                throw config_error("segment endpoints must differ");
        }
        for (const auto& e : congestion_events) {
            if (e.origin_segment_index >= segments.size())
                throw config_error("congestion event origin out of range");
            if (!(e.severity > 0.0 && e.severity < 1.0))
                throw config_error("severity must be in (0, 1)");
            if (e.wave_speed <= 0.0) throw config_error("wave speed must be positive");
            if (e.duration_intervals == 0)
                throw config_error("event duration must be positive");
        }
    }
};

struct ScenarioDiagnostics {
    std::size_t density_clamped_cells = 0;   // density above jam, speed floored
    std::size_t oversaturated_intervals = 0; // demand above the flow capacity
};

// Linear speed-density closure: u = free_flow * (1 - k / k_jam). Densities
// beyond jam are floored at 5 km/hr so downstream travel times stay finite.
inline double greenshields_speed(double density, double free_flow, double jam_density) {
    if (free_flow <= 0.0 || jam_density <= 0.0)
        throw config_error("free-flow speed and jam density must be positive");
    if (density < 0.0) throw config_error("density must be nonnegative");
    if (density > jam_density) return 5.0;
    return free_flow * (1.0 - density / jam_density);
}

namespace detail {

// Uncongested-branch density for a demand flow q under the linear closure.
// Flow over density traces an inverse U with capacity free_flow*jam/4; at or
// above capacity the density saturates at the capacity point jam/2.
inline double density_for_demand(double q, double free_flow, double jam_density,
                                 bool* saturated = nullptr) {
    const double q_max = free_flow * jam_density / 4.0;
    if (q >= q_max) {
        if (saturated) *saturated = true;
        return jam_density / 2.0;
    }
    if (saturated) *saturated = false;
    return 0.5 * jam_density * (1.0 - std::sqrt(1.0 - 4.0 * q / (free_flow * jam_density)));
}

// Intervals after event start at which the wave reaches a segment
// `dist` segments upstream of the origin.
inline std::int64_t wave_delay(std::size_t dist, double wave_speed) {
    return std::llround(static_cast<double>(dist) / wave_speed);
}

inline bool event_covers(const CongestionEvent& e, std::size_t segment,
                         std::size_t interval) {
    if (segment > e.origin_segment_index) return false; // wave moves upstream only
    const std::int64_t delay =
        wave_delay(e.origin_segment_index - segment, e.wave_speed);
    const std::int64_t onset = static_cast<std::int64_t>(e.start_interval) + delay;
    const std::int64_t j = static_cast<std::int64_t>(interval);
    return j >= onset && j < onset + static_cast<std::int64_t>(e.duration_intervals);
}

} // namespace detail

// Ground-truth travel-time matrix: per cell, demand sets a baseline speed via
// the linear closure, every covering congestion event scales it by
// (1 - severity), and multiplicative log-normal noise (unit mean) is applied
// to the resulting travel time. Deterministic under the config seed.
inline TimeSpaceMatrix generate_scenario(const ScenarioConfig& config,
                                         ScenarioDiagnostics* diag = nullptr) {
    config.validate();
    TimeSpaceMatrix m;
    m.start = config.start;
    m.interval_len_min = config.interval_len_min;
    for (const auto& s : config.segments) m.segment_ids.push_back(s.segment_id);
    m.values = Grid(config.segments.size(), config.horizon);
    m.mask.assign(config.segments.size() * config.horizon, 1);

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sigma = config.noise_sd_rel;
    ScenarioDiagnostics local;

    for (std::size_t s = 0; s < config.segments.size(); ++s) {
        for (std::size_t j = 0; j < config.horizon; ++j) {
            const double q = config.demand_profile[j % config.demand_profile.size()];
            bool saturated = false;
            const double k = detail::density_for_demand(q, config.free_flow_speed,
                                                        config.jam_density, &saturated);
            if (saturated) ++local.oversaturated_intervals;
            if (k > config.jam_density) ++local.density_clamped_cells;
            double u = greenshields_speed(k, config.free_flow_speed, config.jam_density);
            for (const auto& e : config.congestion_events)
                if (detail::event_covers(e, s, j)) u *= (1.0 - e.severity);
            double tt = config.segments[s].length_km / u;
            if (sigma > 0.0)
                tt *= std::exp(sigma * noise(rng) - 0.5 * sigma * sigma);
            m.values(s, j) = tt;
        }
    }
    if (diag) *diag = local;
    return m;
}

namespace detail {

inline void check_truth_shape(const TimeSpaceMatrix& truth, const ScenarioConfig& config) {
    if (truth.segments() != config.segments.size() || truth.intervals() != config.horizon)
        throw config_error("truth matrix shape does not match scenario config");
}

// Per-cell tagged-vehicle counts: Poisson demand thinned by the tag
// penetration rate. Consumes a fixed-length prefix of the random stream.
inline std::vector<std::uint32_t> draw_tagged_counts(const TimeSpaceMatrix& truth,
                                                     const ScenarioConfig& config,
                                                     std::mt19937_64& rng,
                                                     std::size_t& total_tagged) {
    const double len_hr = static_cast<double>(config.interval_len_min) / 60.0;
    std::vector<std::uint32_t> counts(truth.segments() * truth.intervals(), 0);
    total_tagged = 0;
    for (std::size_t s = 0; s < truth.segments(); ++s) {
        for (std::size_t j = 0; j < truth.intervals(); ++j) {
            const double q = config.demand_profile[j % config.demand_profile.size()];
            const double expected = q * len_hr;
            std::uint32_t n = 0;
            if (expected > 0.0)
                n = static_cast<std::uint32_t>(
                    std::poisson_distribution<std::uint32_t>(expected)(rng));
            std::uint32_t tagged = n;
            if (config.penetration < 1.0 && n > 0)
                tagged = static_cast<std::uint32_t>(
                    std::binomial_distribution<std::uint32_t>(n, config.penetration)(rng));
            counts[s * truth.intervals() + j] = tagged;
            total_tagged += tagged;
        }
    }
    return counts;
}

} // namespace detail

// Raw detection events consistent with a ground-truth matrix: per cell,
// Poisson-many vehicles depart uniformly inside the interval; each tagged
// vehicle yields an origin read and, after the cell travel time plus
// relative Gaussian jitter, a destination read. Timestamps are whole
// seconds. Tags are unique across one call. `sink(event)` receives origin
// and destination reads in generation order; the random stream depends only
// on the config, so streaming and collecting sinks see identical events.
// Returns the number of events emitted.
template <typename Sink>
inline std::size_t emit_detection_events_to(const TimeSpaceMatrix& truth,
                                            const ScenarioConfig& config, Sink&& sink) {
    config.validate();
    detail::check_truth_shape(truth, config);
    const std::int64_t len_s = static_cast<std::int64_t>(config.interval_len_min) * 60;

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::size_t total_tagged = 0;
    const std::vector<std::uint32_t> tagged_counts =
        detail::draw_tagged_counts(truth, config, rng, total_tagged);

    std::uniform_real_distribution<double> offset(0.0, static_cast<double>(len_s));
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::uint64_t tag_counter = 0;
    DetectionEvent ev;
    for (std::size_t s = 0; s < truth.segments(); ++s) {
        const SegmentDef& seg = config.segments[s];
        for (std::size_t j = 0; j < truth.intervals(); ++j) {
            const std::uint32_t tagged = tagged_counts[s * truth.intervals() + j];
            if (tagged == 0) continue;
            const std::int64_t interval_start = truth.interval_start(j);
            const double tt_s = truth.values(s, j) * 3600.0;
            for (std::uint32_t v = 0; v < tagged; ++v) {
                const std::int64_t depart =
                    interval_start + static_cast<std::int64_t>(offset(rng));
                double trip_s = tt_s;
                if (config.noise_sd_rel > 0.0)
                    trip_s *= 1.0 + config.noise_sd_rel * jitter(rng);
                const std::int64_t arrive =
                    depart + std::max<std::int64_t>(1, std::llround(trip_s));
                ev.vehicle_tag = "v" + std::to_string(tag_counter++);
                ev.detector_id = seg.origin_detector;
                ev.timestamp = depart;
                sink(ev);
                ev.detector_id = seg.dest_detector;
                ev.timestamp = arrive;
                sink(ev);
            }
        }
    }
    return 2 * total_tagged;
}

inline std::vector<DetectionEvent> emit_detection_events(const TimeSpaceMatrix& truth,
                                                         const ScenarioConfig& config) {
    config.validate();
    detail::check_truth_shape(truth, config);

    // Replay the counting prefix of the stream to size the vector exactly;
    // the draws are deterministic, so the second run sees the same counts.
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::size_t total_tagged = 0;
    detail::draw_tagged_counts(truth, config, rng, total_tagged);

    std::vector<DetectionEvent> events;
    events.reserve(2 * total_tagged);
    emit_detection_events_to(truth, config,
                             [&](const DetectionEvent& ev) { events.push_back(ev); });
    return events;
}

} // namespace ttcast
