#pragma once

#include <stdexcept>
#include <string>

namespace sdec {

/// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -- environment / MDP construction ------------------------------------------
struct NonStochasticRow : Error { using Error::Error; };
struct NegativeProbability : Error { using Error::Error; };
struct GammaOutOfRange : Error { using Error::Error; };
struct UnknownEnvironment : Error { using Error::Error; };
struct BadParams : Error { using Error::Error; };
struct InvalidAction : Error { using Error::Error; };

// -- replay buffer ------------------------------------------------------------
struct EmptyBuffer : Error { using Error::Error; };
struct SampleTooLarge : Error { using Error::Error; };

// -- tabular operators ----------------------------------------------------------
struct ShapeMismatch : Error { using Error::Error; };
struct NonPositiveLambda : Error { using Error::Error; };
struct MaxIterExceeded : Error { using Error::Error; };
struct ZeroPolicyProbability : Error { using Error::Error; };

// -- function approximation -----------------------------------------------------
struct KindMismatch : Error { using Error::Error; };
struct ActionOutOfBounds : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// -- saddle objective -----------------------------------------------------------
struct EmptyBatch : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct SegmentTooShort : Error { using Error::Error; };
struct TrajectoryTooShort : Error { using Error::Error; };
struct ZetaOutOfRange : Error { using Error::Error; };

// -- optimizer -------------------------------------------------------------------
struct NotADistribution : Error { using Error::Error; };
struct ZeroEntry : Error { using Error::Error; };
struct DivergedInnerSolve : Error { using Error::Error; };
struct BadIteration : Error { using Error::Error; };

// -- training loop / CLI ----------------------------------------------------------
struct NonFiniteLoss : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct UnknownKey : Error { using Error::Error; };
struct InvalidValue : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace sdec
