#pragma once

#include <stdexcept>
#include <string>

namespace ttcast {

// Bad window shapes, impossible configs, degenerate normalization.
// CLI maps this to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or degenerate data: empty history, stopped traffic (division by a
// nonpositive speed), unknown segments. CLI maps this to exit code 3.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite value. Carries the epoch at which the run
// blew up. CLI maps this to exit code 4.
class divergence_error : public std::runtime_error {
public:
    divergence_error(const std::string& msg, long epoch)
        : std::runtime_error(msg + " (epoch " + std::to_string(epoch) + ")"),
          epoch_(epoch) {}

    long epoch() const { return epoch_; }

private:
    long epoch_;
};

} // namespace ttcast
