#ifndef PRESCREEN_ERROR_HPP
#define PRESCREEN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace prescreen {

enum class ErrorKind {
  MissingFile,
  ParseError,
  InvalidConfig,
  EmptyVocabulary,
  OrphanText,
  InvalidLabel,
  DomainError,
  DimensionMismatch,
  JoinError,
  DivergenceError,
  NoPositives,
  MissingVector,
  CorruptIndex,
  CorruptModel,
  VocabMismatch,
  InvariantBreach,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile:       return "MissingFile";
    case ErrorKind::ParseError:        return "ParseError";
    case ErrorKind::InvalidConfig:     return "InvalidConfig";
    case ErrorKind::EmptyVocabulary:   return "EmptyVocabulary";
    case ErrorKind::OrphanText:        return "OrphanText";
    case ErrorKind::InvalidLabel:      return "InvalidLabel";
    case ErrorKind::DomainError:       return "DomainError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::JoinError:         return "JoinError";
    case ErrorKind::DivergenceError:   return "DivergenceError";
    case ErrorKind::NoPositives:       return "NoPositives";
    case ErrorKind::MissingVector:     return "MissingVector";
    case ErrorKind::CorruptIndex:      return "CorruptIndex";
    case ErrorKind::CorruptModel:      return "CorruptModel";
    case ErrorKind::VocabMismatch:     return "VocabMismatch";
    case ErrorKind::InvariantBreach:   return "InvariantBreach";
  }
  return "Unknown";
}

// Process exit code the CLI maps this kind to: 2 for input/data
// problems, 3 for artifact fingerprint mismatches, 4 for internal
// invariant breaches.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::VocabMismatch:   return 3;
    case ErrorKind::InvariantBreach: return 4;
    default:                         return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  const char* kind_name() const { return to_string(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string message) {
  throw Error(kind, std::move(message));
}

}  // namespace prescreen

#endif  // PRESCREEN_ERROR_HPP
