#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dctx {

enum class ErrorKind {
  // bitstream
  MissingMarker,
  UnsupportedProcess,
  UnsupportedSampling,
  CorruptEntropyStream,
  RangeOverflow,
  // pixel / block arithmetic
  WrongColorspace,
  QfOutOfRange,
  OddDims,
  ShiftOutOfRange,
  BadDims,
  BadImageFile,
  // tensors / model
  ShapeMismatch,
  NonScalarLoss,
  StateShapeMismatch,
  DimMismatch,
  DimNotDivisibleByWindow,
  ChannelNotDivisibleByHead,
  ConfigInvalid,
  // training
  StepOutOfRange,
  ImageTooSmall,
  NonFiniteLoss,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ConfigMismatch,
  // metrics / evaluation
  TooSmall,
  EmptyInput,
  BinMismatch,
  MissingPair,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace dctx
