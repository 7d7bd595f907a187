#pragma once

#include <stdexcept>
#include <string>

namespace wiener {

// RK4/Euler state left the finite range before the horizon.
class IntegrationDiverged : public std::runtime_error {
public:
    IntegrationDiverged(double blowup_time, const std::string& what)
        : std::runtime_error(what), blowup_time_(blowup_time) {}

    double blowup_time() const noexcept { return blowup_time_; }

private:
    double blowup_time_;
};

// No slope bracket with a sign change, or the root refinement stalled.
class ShootingFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The requested operation needs information the kernel does not carry
// (e.g. a callback kernel without a spatial derivative).
class UnsupportedKernel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A user-supplied function produced a non-finite value.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace wiener
