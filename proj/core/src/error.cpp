#include "hyq/error.hpp"

namespace hyq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateColumnName: return "DuplicateColumnName";
    case ErrorCode::ZeroDimension: return "ZeroDimension";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::MissingHistogram: return "MissingHistogram";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::FrozenNetwork: return "FrozenNetwork";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::IndexMissing: return "IndexMissing";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::EngineNotReady: return "EngineNotReady";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ModelMissing: return "ModelMissing";
    case ErrorCode::InvalidPlan: return "InvalidPlan";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooManyPlanes: return "TooManyPlanes";
    case ErrorCode::StratumInfeasible: return "StratumInfeasible";
    case ErrorCode::MisalignedGroundTruth: return "MisalignedGroundTruth";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace hyq
