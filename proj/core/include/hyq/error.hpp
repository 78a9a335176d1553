#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hyq {

// Every failure the library reports is an hyq::Error carrying one of these
// codes. The CLI maps any Error to a nonzero exit status.
enum class ErrorCode {
  // store
  DuplicateColumnName,
  ZeroDimension,
  InvalidSchema,
  DimensionMismatch,
  DuplicateId,
  UnknownColumn,
  KindMismatch,
  InvalidQuery,
  UnknownTable,
  UnknownId,
  // ann_graph_index
  EmptyTable,
  CorruptIndex,
  // scalar_stats
  ColumnMismatch,
  MissingHistogram,
  // neural_substrate
  ShapeMismatch,
  FrozenNetwork,
  InvalidConfig,
  // correlation_encoder
  NotFitted,
  EmptyBatch,
  // query_features
  IndexMissing,
  LayoutMismatch,
  // plan_rewriter
  EngineNotReady,
  InsufficientData,
  ModelMissing,
  InvalidPlan,
  ParseError,
  // benchgen
  EmptyInput,
  TooManyPlanes,
  StratumInfeasible,
  // harness
  MisalignedGroundTruth,
  // io
  IoError,
  FormatError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace hyq
