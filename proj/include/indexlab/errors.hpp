#ifndef INDEXLAB_ERRORS_HPP
#define INDEXLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace indexlab {

enum class ErrorCode {
    NonFinite,
    NonHermitian,
    ConvergenceFailure,
    InvalidOrder,
    NotProjection,
    DimensionMismatch,
    AmbiguousSpectrum,
    DegenerateGeometry,
    TooManyModes,
    UnknownLabel,
    NotUnitary,
    NotInvariant,
    NotOrthonormal,
    DecayViolation,
    OriginOnBoundary,
    FermiLevelInSpectrum,
    UnresolvedCrossing,
    NonSimpleCrossing,
    StepFloorReached,
    UnitarityLoss,
    NotCommensurate,
    GapClosesOnBZ,
    ConfigError,
    IoError,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace indexlab

#endif
