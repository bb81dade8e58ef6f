#pragma once

#include <stdexcept>
#include <string>

namespace nlevel {

// Base of every failure raised by the library. The CLI maps these to exit code 3
// (ConfigError maps to 1).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define NLEVEL_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

NLEVEL_DEFINE_ERROR(DegenerateSpectrum);
NLEVEL_DEFINE_ERROR(NonConvergence);
NLEVEL_DEFINE_ERROR(DimensionMismatch);
NLEVEL_DEFINE_ERROR(DomainError);
NLEVEL_DEFINE_ERROR(PositivityViolated);
NLEVEL_DEFINE_ERROR(PathThroughDegeneracy);
NLEVEL_DEFINE_ERROR(StepFailure);
NLEVEL_DEFINE_ERROR(SingularW);
NLEVEL_DEFINE_ERROR(NonProportional);
NLEVEL_DEFINE_ERROR(WindowTooSmall);
NLEVEL_DEFINE_ERROR(NewtonDivergence);
NLEVEL_DEFINE_ERROR(ConstructionFailure);
NLEVEL_DEFINE_ERROR(NoCrossingChain);
NLEVEL_DEFINE_ERROR(NotApplicable);
NLEVEL_DEFINE_ERROR(DynamicRangeExceeded);
NLEVEL_DEFINE_ERROR(GapCollapse);
NLEVEL_DEFINE_ERROR(NullVector);
NLEVEL_DEFINE_ERROR(DivisionGuard);
NLEVEL_DEFINE_ERROR(ParseError);
NLEVEL_DEFINE_ERROR(ConfigError);

#undef NLEVEL_DEFINE_ERROR

}  // namespace nlevel
