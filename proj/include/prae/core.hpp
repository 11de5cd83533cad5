#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace prae {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct PraeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : PraeError {
    using PraeError::PraeError;
};
struct NegativeCoordinate : PraeError {
    using PraeError::PraeError;
};
struct DegenerateLabels : PraeError {
    using PraeError::PraeError;
};
struct ContainmentNeverHolds : PraeError {
    using PraeError::PraeError;
};
struct BigMViolated : PraeError {
    using PraeError::PraeError;
};
struct IterationLimit : PraeError {
    using PraeError::PraeError;
};
struct Stalled : PraeError {
    using PraeError::PraeError;
};
struct Extinction : PraeError {
    using PraeError::PraeError;
};
struct NoProbesHit : PraeError {
    using PraeError::PraeError;
};
struct MissingTruth : PraeError {
    using PraeError::PraeError;
};
struct NumericalBlowup : PraeError {
    using PraeError::PraeError;
};
struct ConfigError : PraeError {
    using PraeError::PraeError;
};

// Shared strictness constant for the "< 0" cuts realized as "<= -strict_eps".
inline constexpr double kStrictEps = 1e-6;

}  // namespace prae
