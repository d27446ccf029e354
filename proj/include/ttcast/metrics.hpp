#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ttcast/errors.hpp"

namespace ttcast {

// Absolute relative error of one prediction. Undefined for nonpositive
// actuals (travel times are positive); aggregate callers exclude such pairs
// instead of calling this.
inline double relative_error(double actual, double predicted) {
    if (!(actual > 0.0))
        throw data_error("relative error undefined for nonpositive actual");
    return std::abs(actual - predicted) / actual;
}

// Mean absolute percentage error over paired actual/predicted values, in
// percent. Pairs with nonpositive actuals are skipped and counted in
// `excluded` rather than failing the whole aggregate; degenerate ingested
// data should degrade a report, not abort it.
inline double mape(std::span<const double> actual, std::span<const double> predicted,
                   std::size_t* excluded = nullptr) {
    if (actual.size() != predicted.size())
        throw data_error("mape: length mismatch");
    double acc = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!(actual[i] > 0.0)) {
            ++skipped;
            continue;
        }
        acc += std::abs(actual[i] - predicted[i]) / actual[i];
        ++used;
    }
    if (excluded) *excluded = skipped;
    if (used == 0) throw data_error("mape: no valid pairs");
    return 100.0 * acc / static_cast<double>(used);
}

// Share of valid pairs whose relative error is at or below `band`
// (0.10 for the ten-percent requirement line).
inline double within_band(std::span<const double> actual,
                          std::span<const double> predicted, double band) {
    if (actual.size() != predicted.size())
        throw data_error("within_band: length mismatch");
    std::size_t hits = 0, used = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!(actual[i] > 0.0)) continue;
        ++used;
        if (std::abs(actual[i] - predicted[i]) / actual[i] <= band) ++hits;
    }
    if (used == 0) throw data_error("within_band: no valid pairs");
    return static_cast<double>(hits) / static_cast<double>(used);
}

} // namespace ttcast
