#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttcast/errors.hpp"

namespace ttcast {

// One toll-gantry read: a tag passed a detector at a given second.
struct DetectionEvent {
    std::string detector_id;
    std::string vehicle_tag;
    std::int64_t timestamp = 0; // unix seconds
};

// A directed road segment between two detectors.
struct SegmentDef {
    std::string segment_id;
    std::string origin_detector;
    std::string dest_detector;
    double length_km = 0.0;
};

// A matched origin/destination read pair for one vehicle.
struct Trip {
    std::string vehicle_tag;
    std::string segment_id;
    std::int64_t depart = 0; // unix seconds
    std::int64_t arrive = 0;
    double travel_time_hr = 0.0;
};

// Per-interval aggregate for one segment. mean_travel_time_hr is empty when
// no trip arrived in the interval.
struct IntervalRecord {
    std::string segment_id;
    std::int64_t interval_start = 0; // unix seconds, aligned to interval_len_min
    int interval_len_min = 5;
    std::optional<double> mean_travel_time_hr;
    std::size_t trip_count = 0;
};

// ---------------------------------------------------------------------------
// Point formulas
// ---------------------------------------------------------------------------

// Flow Q in car/hr from a per-interval vehicle count.
inline double compute_flow(std::size_t vehicle_count, int interval_len_min) {
    if (interval_len_min <= 0)
        throw config_error("interval length must be positive");
    return static_cast<double>(vehicle_count) * (60.0 / interval_len_min);
}

// Time mean speed U_t: arithmetic mean of instantaneous speeds at a point.
inline double compute_time_mean_speed(std::span<const double> instant_speeds) {
    if (instant_speeds.empty())
        throw data_error("no speed readings");
    double sum = 0.0;
    for (double v : instant_speeds) sum += v;
    return sum / static_cast<double>(instant_speeds.size());
}

// Density K = Q / U_t in car/km. A nonpositive speed means stopped traffic;
// there is no finite density estimate in that case.
inline double estimate_density(double flow, double tms) {
    if (tms <= 0.0)
        throw data_error("time mean speed must be positive to estimate density");
    return flow / tms;
}

// Travel time T = D / U_s in hours.
inline double estimate_travel_time(double distance_km, double sms) {
    if (distance_km <= 0.0)
        throw config_error("distance must be positive");
    if (sms <= 0.0)
        throw data_error("space mean speed must be positive to estimate travel time");
    return distance_km / sms;
}

// Space mean speed U_s = D / T in km/hr.
inline double compute_space_mean_speed(double distance_km, double travel_time_hr) {
    if (distance_km <= 0.0 || travel_time_hr <= 0.0)
        throw config_error("distance and travel time must be positive");
    return distance_km / travel_time_hr;
}

// ---------------------------------------------------------------------------
// Trip matching
// ---------------------------------------------------------------------------

struct MatchOptions {
    // Origin reads whose earliest later destination read is farther away than
    // this are treated as vehicles that left the corridor unseen.
    double max_trip_duration_hr = 4.0;
};

struct MatchStats {
    std::size_t origin_reads = 0;
    std::size_t dest_reads = 0;
    std::size_t matched = 0;
    std::size_t dropped_origin_reads = 0; // never matched or over the duration cap
    std::size_t dropped_dest_reads = 0;
};

struct MatchResult {
    std::vector<Trip> trips; // sorted by depart time
    MatchStats stats;
};

// Pairs origin and destination reads per vehicle tag: each origin read takes
// the earliest later destination read not already consumed. Equivalent
// formulation used here: walk reads in time order and keep a FIFO of pending
// origins per tag, so a destination read consumes the oldest viable origin.
inline MatchResult match_trips(const std::vector<DetectionEvent>& events,
                               const SegmentDef& segment,
                               const MatchOptions& options = {}) {
    MatchResult result;
    const std::int64_t cap_s =
        static_cast<std::int64_t>(options.max_trip_duration_hr * 3600.0);

    std::vector<const DetectionEvent*> reads;
    reads.reserve(events.size());
    for (const auto& ev : events) {
        if (ev.detector_id == segment.origin_detector ||
            ev.detector_id == segment.dest_detector)
            reads.push_back(&ev);
    }
    std::sort(reads.begin(), reads.end(),
              [](const DetectionEvent* a, const DetectionEvent* b) {
                  if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
                  if (a->detector_id != b->detector_id) return a->detector_id < b->detector_id;
                  return a->vehicle_tag < b->vehicle_tag;
              });

    std::unordered_map<std::string, std::vector<std::int64_t>> pending; // tag -> origin times
    for (const DetectionEvent* ev : reads) {
        if (ev->detector_id == segment.origin_detector) {
            ++result.stats.origin_reads;
            pending[ev->vehicle_tag].push_back(ev->timestamp);
            continue;
        }
        ++result.stats.dest_reads;
        auto it = pending.find(ev->vehicle_tag);
        if (it == pending.end() || it->second.empty()) {
            ++result.stats.dropped_dest_reads;
            continue;
        }
        auto& queue = it->second;
        std::size_t head = 0;
        while (head < queue.size() && ev->timestamp - queue[head] > cap_s) {
            ++result.stats.dropped_origin_reads; // expired, vehicle left unseen
            ++head;
        }
        if (head < queue.size() && queue[head] < ev->timestamp) {
            const std::int64_t depart = queue[head];
            ++head;
            ++result.stats.matched;
            result.trips.push_back({ev->vehicle_tag, segment.segment_id, depart,
                                    ev->timestamp,
                                    static_cast<double>(ev->timestamp - depart) / 3600.0});
        } else {
            ++result.stats.dropped_dest_reads; // no strictly earlier origin available
        }
        queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(head));
        if (queue.empty()) pending.erase(it);
    }
    for (const auto& [tag, queue] : pending)
        result.stats.dropped_origin_reads += queue.size();

    std::sort(result.trips.begin(), result.trips.end(),
              [](const Trip& a, const Trip& b) {
                  if (a.depart != b.depart) return a.depart < b.depart;
                  if (a.arrive != b.arrive) return a.arrive < b.arrive;
                  return a.vehicle_tag < b.vehicle_tag;
              });
    return result;
}

// ---------------------------------------------------------------------------
// Interval aggregation
// ---------------------------------------------------------------------------

inline std::int64_t align_to_interval(std::int64_t t, int interval_len_min) {
    const std::int64_t len_s = static_cast<std::int64_t>(interval_len_min) * 60;
    std::int64_t q = t / len_s;
    if (t < 0 && t % len_s != 0) --q;
    return q * len_s;
}

// Buckets trips by arrival interval and averages travel times per
// (segment, interval). A trip only becomes observable once it completes, so
// arrival time is the bucketing key. When `span` is given, empty intervals in
// [span->first, span->second) are emitted with trip_count 0; otherwise the
// span is the observed arrival range per segment. `segment_ids` names the
// segments to report on (defaults to the segments present in the trips).
inline std::vector<IntervalRecord>
aggregate_travel_times(const std::vector<Trip>& trips, int interval_len_min,
                       std::optional<std::pair<std::int64_t, std::int64_t>> span = {},
                       std::vector<std::string> segment_ids = {}) {
    if (interval_len_min <= 0 || 60 % interval_len_min != 0)
        throw config_error("interval length must divide 60 minutes");
    const std::int64_t len_s = static_cast<std::int64_t>(interval_len_min) * 60;

    struct Acc {
        double sum = 0.0;
        std::size_t count = 0;
    };
    // segment -> interval start -> accumulator
    std::unordered_map<std::string, std::unordered_map<std::int64_t, Acc>> acc;
    std::vector<std::string> segment_order = std::move(segment_ids);
    for (const std::string& seg : segment_order) acc.try_emplace(seg);
    for (const Trip& trip : trips) {
        auto [it, inserted] = acc.try_emplace(trip.segment_id);
        if (inserted) segment_order.push_back(trip.segment_id);
        Acc& a = it->second[align_to_interval(trip.arrive, interval_len_min)];
        a.sum += trip.travel_time_hr;
        ++a.count;
    }

    std::vector<IntervalRecord> records;
    for (const std::string& seg : segment_order) {
        const auto& buckets = acc[seg];
        std::int64_t lo, hi;
        if (span) {
            lo = align_to_interval(span->first, interval_len_min);
            hi = align_to_interval(span->second - 1, interval_len_min) + len_s;
        } else {
            lo = hi = 0;
            bool first = true;
            for (const auto& [start, a] : buckets) {
                lo = first ? start : std::min(lo, start);
                hi = first ? start + len_s : std::max(hi, start + len_s);
                first = false;
            }
        }
        for (std::int64_t start = lo; start < hi; start += len_s) {
            IntervalRecord rec;
            rec.segment_id = seg;
            rec.interval_start = start;
            rec.interval_len_min = interval_len_min;
            if (auto it = buckets.find(start); it != buckets.end()) {
                rec.trip_count = it->second.count;
                rec.mean_travel_time_hr =
                    it->second.sum / static_cast<double>(it->second.count);
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

} // namespace ttcast
