#include "dctx/error.hpp"

namespace dctx {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingMarker: return "MissingMarker";
    case ErrorKind::UnsupportedProcess: return "UnsupportedProcess";
    case ErrorKind::UnsupportedSampling: return "UnsupportedSampling";
    case ErrorKind::CorruptEntropyStream: return "CorruptEntropyStream";
    case ErrorKind::RangeOverflow: return "RangeOverflow";
    case ErrorKind::WrongColorspace: return "WrongColorspace";
    case ErrorKind::QfOutOfRange: return "QfOutOfRange";
    case ErrorKind::OddDims: return "OddDims";
    case ErrorKind::ShiftOutOfRange: return "ShiftOutOfRange";
    case ErrorKind::BadDims: return "BadDims";
    case ErrorKind::BadImageFile: return "BadImageFile";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::StateShapeMismatch: return "StateShapeMismatch";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::DimNotDivisibleByWindow: return "DimNotDivisibleByWindow";
    case ErrorKind::ChannelNotDivisibleByHead: return "ChannelNotDivisibleByHead";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::BinMismatch: return "BinMismatch";
    case ErrorKind::MissingPair: return "MissingPair";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dctx
