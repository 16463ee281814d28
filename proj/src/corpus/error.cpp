#include "hqa/error.hpp"

namespace hqa {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DuplicateImageId: return "DuplicateImageId";
    case ErrorKind::UnreadableRaster: return "UnreadableRaster";
    case ErrorKind::MalformedGeoPath: return "MalformedGeoPath";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::UnknownImage: return "UnknownImage";
    case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorKind::DuplicateRaterImage: return "DuplicateRaterImage";
    case ErrorKind::NoBallots: return "NoBallots";
    case ErrorKind::InvalidDimensions: return "InvalidDimensions";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonDistributionTarget: return "NonDistributionTarget";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InsufficientGroups: return "InsufficientGroups";
    case ErrorKind::MissingGeoField: return "MissingGeoField";
    case ErrorKind::AllZero: return "AllZero";
    case ErrorKind::NegativeValue: return "NegativeValue";
    case ErrorKind::TooFewRegions: return "TooFewRegions";
    case ErrorKind::JoinTooSmall: return "JoinTooSmall";
    case ErrorKind::DuplicateCountyCode: return "DuplicateCountyCode";
    case ErrorKind::UnmappedCounty: return "UnmappedCounty";
    case ErrorKind::NothingLeft: return "NothingLeft";
  }
  return "UnknownError";
}

bool is_numerical(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DivergedLoss:
    case ErrorKind::ZeroVariance:
    case ErrorKind::ConstantInput:
      return true;
    default:
      return false;
  }
}

}  // namespace hqa
