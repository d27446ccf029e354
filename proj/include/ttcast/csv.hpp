#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ttcast/errors.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/timeutil.hpp"
#include "ttcast/traffic.hpp"

namespace ttcast {

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(pos));
            break;
        }
        fields.emplace_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return fields;
}

inline std::int64_t parse_int64(const std::string& s, const char* what,
                                std::size_t line_no) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw data_error(std::string("line ") + std::to_string(line_no) +
                         ": bad " + what + " '" + s + "'");
    return v;
}

inline double parse_double(const std::string& s, const char* what,
                           std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw data_error(std::string("line ") + std::to_string(line_no) +
                         ": bad " + what + " '" + s + "'");
    return v;
}

// Shortest decimal form that round-trips the double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    return out;
}

} // namespace detail

// --- detection events: detector_id,vehicle_tag,timestamp_unix_s ---

inline void write_events_csv(std::ostream& out,
                             const std::vector<DetectionEvent>& events) {
    out << "detector_id,vehicle_tag,timestamp_unix_s\n";
    for (const auto& e : events)
        out << e.detector_id << ',' << e.vehicle_tag << ',' << e.timestamp << '\n';
}

inline void write_events_csv(const std::string& path,
                             const std::vector<DetectionEvent>& events) {
    auto out = detail::open_output(path);
    write_events_csv(out, events);
    if (!out) throw data_error("write failed for " + path);
}

inline std::vector<DetectionEvent> read_events_csv(std::istream& in) {
    std::vector<DetectionEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (line_no == 1 && !fields.empty() && fields[0] == "detector_id") continue;
        if (fields.size() != 3)
            throw data_error("line " + std::to_string(line_no) +
                             ": expected 3 event fields, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw data_error("line " + std::to_string(line_no) +
                             ": empty detector or tag");
        events.push_back({std::move(fields[0]), std::move(fields[1]),
                          detail::parse_int64(fields[2], "timestamp", line_no)});
    }
    return events;
}

inline std::vector<DetectionEvent> read_events_csv(const std::string& path) {
    auto in = detail::open_input(path);
    return read_events_csv(in);
}

// --- segments: segment_id,origin_detector,dest_detector,length_km ---

inline void write_segments_csv(std::ostream& out,
                               const std::vector<SegmentDef>& segments) {
    out << "segment_id,origin_detector,dest_detector,length_km\n";
    for (const auto& s : segments)
        out << s.segment_id << ',' << s.origin_detector << ',' << s.dest_detector
            << ',' << detail::format_double(s.length_km) << '\n';
}

inline void write_segments_csv(const std::string& path,
                               const std::vector<SegmentDef>& segments) {
    auto out = detail::open_output(path);
    write_segments_csv(out, segments);
    if (!out) throw data_error("write failed for " + path);
}

inline std::vector<SegmentDef> read_segments_csv(std::istream& in) {
    std::vector<SegmentDef> segments;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (line_no == 1 && !fields.empty() && fields[0] == "segment_id") continue;
        if (fields.size() != 4)
            throw data_error("line " + std::to_string(line_no) +
                             ": expected 4 segment fields, got " +
                             std::to_string(fields.size()));
        SegmentDef s;
        s.segment_id = std::move(fields[0]);
        s.origin_detector = std::move(fields[1]);
        s.dest_detector = std::move(fields[2]);
        s.length_km = detail::parse_double(fields[3], "length_km", line_no);
        if (s.segment_id.empty() || s.length_km <= 0.0)
            throw data_error("line " + std::to_string(line_no) +
                             ": segment needs an id and a positive length");
        segments.push_back(std::move(s));
    }
    if (segments.empty()) throw data_error("segments file has no rows");
    return segments;
}

inline std::vector<SegmentDef> read_segments_csv(const std::string& path) {
    auto in = detail::open_input(path);
    return read_segments_csv(in);
}

// --- travel-time matrix: rows are segments, columns are intervals ---
// Header: segment_id,<ISO start of interval 0>,<interval 1>,...
// Missing cells are empty fields.

inline void write_matrix_csv(std::ostream& out, const TimeSpaceMatrix& m) {
    out << "segment_id";
    for (std::size_t j = 0; j < m.intervals(); ++j)
        out << ',' << format_iso8601(m.interval_start(j));
    out << '\n';
    for (std::size_t s = 0; s < m.segments(); ++s) {
        out << m.segment_ids[s];
        for (std::size_t j = 0; j < m.intervals(); ++j) {
            out << ',';
            if (m.observed(s, j)) out << detail::format_double(m.values(s, j));
        }
        out << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const TimeSpaceMatrix& m) {
    auto out = detail::open_output(path);
    write_matrix_csv(out, m);
    if (!out) throw data_error("write failed for " + path);
}

inline TimeSpaceMatrix read_matrix_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("matrix file is empty");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "segment_id")
        throw data_error("matrix header must start with segment_id and one interval");
    const std::size_t intervals = header.size() - 1;

    std::vector<std::int64_t> starts;
    starts.reserve(intervals);
    for (std::size_t j = 1; j < header.size(); ++j)
        starts.push_back(parse_iso8601(header[j]));
    std::int64_t step = 0;
    if (intervals >= 2) {
        step = starts[1] - starts[0];
        if (step <= 0 || step % 60 != 0)
            throw data_error("interval starts must ascend in whole minutes");
        for (std::size_t j = 2; j < starts.size(); ++j)
            if (starts[j] - starts[j - 1] != step)
                throw data_error("interval spacing is not uniform");
    } else {
        step = 300; // single column: width is unrecoverable, assume five minutes
    }

    TimeSpaceMatrix m;
    m.start = starts[0];
    m.interval_len_min = static_cast<int>(step / 60);

    std::vector<std::vector<std::optional<double>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw data_error("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty())
            throw data_error("line " + std::to_string(line_no) + ": empty segment id");
        m.segment_ids.push_back(std::move(fields[0]));
        auto& row = rows.emplace_back();
        row.reserve(intervals);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            if (fields[j].empty())
                row.emplace_back(std::nullopt);
            else
                row.emplace_back(detail::parse_double(fields[j], "cell", line_no));
        }
    }
    if (rows.empty()) throw data_error("matrix file has no segment rows");

    m.values = Grid(rows.size(), intervals);
    m.mask.assign(rows.size() * intervals, 0);
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t j = 0; j < intervals; ++j)
            if (rows[s][j]) m.set(s, j, *rows[s][j]);
    return m;
}

inline TimeSpaceMatrix read_matrix_csv(const std::string& path) {
    auto in = detail::open_input(path);
    return read_matrix_csv(in);
}

// --- prediction output: segment_id,interval_start,predicted_travel_time_hr ---

struct PredictionRow {
    std::string segment_id;
    std::int64_t interval_start = 0;
    double predicted_hr = 0.0;
};

inline void write_predictions_csv(std::ostream& out,
                                  const std::vector<PredictionRow>& rows) {
    out << "segment_id,interval_start,predicted_travel_time_hr\n";
    for (const auto& r : rows)
        out << r.segment_id << ',' << format_iso8601(r.interval_start) << ','
            << detail::format_double(r.predicted_hr) << '\n';
}

inline void write_predictions_csv(const std::string& path,
                                  const std::vector<PredictionRow>& rows) {
    auto out = detail::open_output(path);
    write_predictions_csv(out, rows);
    if (!out) throw data_error("write failed for " + path);
}

} // namespace ttcast
