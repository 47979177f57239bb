#pragma once

#include <stdexcept>
#include <string>

namespace wavefuse {

enum class ErrorKind {
    infeasible_stratification,
    missing_class,
    stale_selection,
    duplicate_selection,
    parse,
    invalid_dataset,
    shape,
    config,
    divergence,
    budget,
    degenerate_weights,
    degenerate_test,
    sample_size,
    length_mismatch,
    aggregation,
    comparison,
    io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::infeasible_stratification: return "infeasible-stratification";
        case ErrorKind::missing_class: return "missing-class";
        case ErrorKind::stale_selection: return "stale-selection";
        case ErrorKind::duplicate_selection: return "duplicate-selection";
        case ErrorKind::parse: return "parse";
        case ErrorKind::invalid_dataset: return "invalid-dataset";
        case ErrorKind::shape: return "shape";
        case ErrorKind::config: return "config";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::budget: return "budget";
        case ErrorKind::degenerate_weights: return "degenerate-weights";
        case ErrorKind::degenerate_test: return "degenerate-test";
        case ErrorKind::sample_size: return "sample-size";
        case ErrorKind::length_mismatch: return "length-mismatch";
        case ErrorKind::aggregation: return "aggregation";
        case ErrorKind::comparison: return "comparison";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace wavefuse
