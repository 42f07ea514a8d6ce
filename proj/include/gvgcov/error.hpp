#pragma once

#include <stdexcept>
#include <string>

namespace gvgcov
{
    enum class ErrorCode
    {
        InvalidInput,
        DegeneratePoint,
        OutsideFreeSpace,
        ResolutionTooCoarse,
        DisconnectedFreeSpace,
        NonpositiveMass,
        OutsideTube,
        OutOfRange,
        FoldedTube,
        DisconnectedGraph,
        EmptyCell,
        ZeroMass,
        Eq3Violated,
        InfeasibleK,
    };

    inline const char *to_string(ErrorCode code) noexcept
    {
        switch (code)
        {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::DegeneratePoint: return "DegeneratePoint";
        case ErrorCode::OutsideFreeSpace: return "OutsideFreeSpace";
        case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
        case ErrorCode::DisconnectedFreeSpace: return "DisconnectedFreeSpace";
        case ErrorCode::NonpositiveMass: return "NonpositiveMass";
        case ErrorCode::OutsideTube: return "OutsideTube";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::FoldedTube: return "FoldedTube";
        case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
        case ErrorCode::EmptyCell: return "EmptyCell";
        case ErrorCode::ZeroMass: return "ZeroMass";
        case ErrorCode::Eq3Violated: return "Eq3Violated";
        case ErrorCode::InfeasibleK: return "InfeasibleK";
        }
        return "Unknown";
    }

    /// Every failure raised by the library carries one of the codes above so
    /// callers (the CLI in particular) can map it onto an exit status.
    class Error : public std::runtime_error
    {
    public:
        Error(ErrorCode code, const std::string &what)
            : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
        {
        }

        ErrorCode code() const noexcept { return code_; }

    private:
        ErrorCode code_;
    };
}
