#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairalloc {

/// Malformed or out-of-range input (dimension mismatch, bad parameter, parse failure).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Enumeration or instance size exceeds a configured guard.
class SizeError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Non-finite values or a breakdown inside an iterative method.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ConstraintFamily { Allocation, ProducerFloor, Gmv, CvarLink, MaxMinLink };

inline std::string_view to_string(ConstraintFamily f) {
    switch (f) {
    case ConstraintFamily::Allocation: return "allocation";
    case ConstraintFamily::ProducerFloor: return "producer_floor";
    case ConstraintFamily::Gmv: return "gmv";
    case ConstraintFamily::CvarLink: return "cvar_link";
    case ConstraintFamily::MaxMinLink: return "maxmin_link";
    }
    return "unknown";
}

/// No allocation satisfies the hard constraints. `family()` names the first
/// constraint family whose addition makes the instance infeasible.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(ConstraintFamily family, const std::string& what)
        : std::runtime_error(what), family_(family) {}
    ConstraintFamily family() const noexcept { return family_; }

private:
    ConstraintFamily family_;
};

/// Search limits were reached before any feasible solution was found.
class NoSolutionError : public std::runtime_error {
public:
    NoSolutionError(double best_bound, const std::string& what)
        : std::runtime_error(what), best_bound_(best_bound) {}
    double best_bound() const noexcept { return best_bound_; }

private:
    double best_bound_;
};

} // namespace fairalloc
