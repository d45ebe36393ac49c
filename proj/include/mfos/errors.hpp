#pragma once

#include <stdexcept>
#include <string>

namespace mfos {

enum class ErrorKind {
  // geometry / rendering
  NonPositiveDepth,
  InvalidShape,
  // tensor engine
  ShapeMismatch,
  NoGradPath,
  UnknownParam,
  // pnp
  TooFewPoints,
  DegenerateConfiguration,
  BehindCamera,
  NoConsensus,
  // data / io
  ParseError,
  MissingFile,
  BadIntrinsics,
  EmptyBBox,
  InsufficientViews,
  IoError,
  // selection / arguments
  BadK,
  InvalidArgument,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NoGradPath: return "NoGradPath";
    case ErrorKind::UnknownParam: return "UnknownParam";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::NoConsensus: return "NoConsensus";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::BadIntrinsics: return "BadIntrinsics";
    case ErrorKind::EmptyBBox: return "EmptyBBox";
    case ErrorKind::InsufficientViews: return "InsufficientViews";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace mfos
