#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace morbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = std::vector<std::size_t>;

// Error taxonomy shared by every module. Each maps onto one failure class the
// CLI reports with a distinct exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
    using Error::Error;
};
struct InvalidData : Error {
    using Error::Error;
};
struct InvalidConfig : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct LifecycleError : Error {
    using Error::Error;
};
struct PreconditionError : Error {
    using Error::Error;
};
struct UnsupportedError : Error {
    using Error::Error;
};
struct EvaluationError : Error {
    using Error::Error;
};

/// Mixes a run seed with stream identifiers into an independent 64-bit seed
/// (splitmix64 finalizer chained over the parts).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

}  // namespace morbo
