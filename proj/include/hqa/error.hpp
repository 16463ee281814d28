#pragma once

#include <stdexcept>
#include <string>

namespace hqa {

enum class ErrorKind {
  // corpus
  DuplicateImageId,
  UnreadableRaster,
  MalformedGeoPath,
  MalformedRecord,
  UnknownImage,
  ScoreOutOfRange,
  DuplicateRaterImage,
  NoBallots,
  InvalidDimensions,
  // nn-engine
  InvalidSpec,
  ShapeMismatch,
  NonDistributionTarget,
  CorruptCheckpoint,
  IoFailure,
  // training
  InvalidConfig,
  EmptyDataset,
  EmptySplit,
  DivergedLoss,
  // evaluation
  IdMismatch,
  ZeroVariance,
  LengthMismatch,
  ConstantInput,
  TooFewSamples,
  InsufficientGroups,
  // geostat
  MissingGeoField,
  AllZero,
  NegativeValue,
  TooFewRegions,
  JoinTooSmall,
  DuplicateCountyCode,
  UnmappedCounty,
  // service
  NothingLeft,
};

const char* to_string(ErrorKind kind) noexcept;

/// Numerical failures (as opposed to bad input data) map to a distinct CLI exit code.
bool is_numerical(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hqa
