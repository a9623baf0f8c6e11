#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bplab {

enum class ErrorKind {
  DanglingTarget,
  UnreachableBlock,
  UseBeforeDef,
  InvalidIr,
  ParseError,
  NotAConditionalBranch,
  ZeroSamples,
  EmptyDataset,
  EmptyInput,
  LengthMismatch,
  LayoutMismatch,
  MalformedRow,
  IoError,
  VersionMismatch,
  CorruptModel,
  InvalidConfig,
  InvalidSpec,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::DanglingTarget: return "DanglingTarget";
  case ErrorKind::UnreachableBlock: return "UnreachableBlock";
  case ErrorKind::UseBeforeDef: return "UseBeforeDef";
  case ErrorKind::InvalidIr: return "InvalidIr";
  case ErrorKind::ParseError: return "ParseError";
  case ErrorKind::NotAConditionalBranch: return "NotAConditionalBranch";
  case ErrorKind::ZeroSamples: return "ZeroSamples";
  case ErrorKind::EmptyDataset: return "EmptyDataset";
  case ErrorKind::EmptyInput: return "EmptyInput";
  case ErrorKind::LengthMismatch: return "LengthMismatch";
  case ErrorKind::LayoutMismatch: return "LayoutMismatch";
  case ErrorKind::MalformedRow: return "MalformedRow";
  case ErrorKind::IoError: return "IoError";
  case ErrorKind::VersionMismatch: return "VersionMismatch";
  case ErrorKind::CorruptModel: return "CorruptModel";
  case ErrorKind::InvalidConfig: return "InvalidConfig";
  case ErrorKind::InvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

/// Every failure the library reports. The kind is stable and is what tests
/// and the CLI dispatch on; the message is for humans.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, message);
}

} // namespace bplab
