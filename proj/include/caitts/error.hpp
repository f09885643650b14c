#pragma once

#include <stdexcept>
#include <string>

namespace caitts {

// Domain errors map to CLI exit code 1; usage errors are handled by the CLI
// layer itself.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define CAITTS_DEFINE_ERROR(NAME)                                        \
    class NAME : public Error {                                          \
    public:                                                              \
        explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
    }

CAITTS_DEFINE_ERROR(InputTooShort);
CAITTS_DEFINE_ERROR(AlignmentMismatch);
CAITTS_DEFINE_ERROR(EmptyTrack);
CAITTS_DEFINE_ERROR(UnpairedUtterance);
CAITTS_DEFINE_ERROR(SolverDiverged);
CAITTS_DEFINE_ERROR(OracleTooLarge);
CAITTS_DEFINE_ERROR(DimMismatch);
CAITTS_DEFINE_ERROR(ShapeError);
CAITTS_DEFINE_ERROR(IndexError);
CAITTS_DEFINE_ERROR(ConfigError);
CAITTS_DEFINE_ERROR(IntensityRange);
CAITTS_DEFINE_ERROR(EmptyInput);
CAITTS_DEFINE_ERROR(ParseError);
CAITTS_DEFINE_ERROR(MissingAsset);
CAITTS_DEFINE_ERROR(CorpusTooSmall);
CAITTS_DEFINE_ERROR(InsufficientData);

#undef CAITTS_DEFINE_ERROR

}  // namespace caitts
