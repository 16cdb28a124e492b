#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace railcause {

// Error taxonomy shared by every module. The CLI maps these to exit code 1,
// the service maps them to HTTP statuses.
enum class ErrorKind {
  MissingField,
  UnparseableTimestamp,
  EmptyCode,
  OutOfRetention,
  InvalidRecord,
  InvalidWindow,
  InvalidClass,
  EmptyDataset,
  UnlabeledTrace,
  EmptyTrainingSet,
  NonPositiveSmoothing,
  UnknownFeature,
  UnknownClass,
  ClassTooSmall,
  IdMismatch,
  EmptySide,
  InvalidSpec,
  InvalidConfig,
  DuplicateIncidentId,
  UnknownIncident,
  StorageFailure,
  VersionNotFound,
  SchemaMismatch,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::UnparseableTimestamp: return "UnparseableTimestamp";
    case ErrorKind::EmptyCode: return "EmptyCode";
    case ErrorKind::OutOfRetention: return "OutOfRetention";
    case ErrorKind::InvalidRecord: return "InvalidRecord";
    case ErrorKind::InvalidWindow: return "InvalidWindow";
    case ErrorKind::InvalidClass: return "InvalidClass";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::UnlabeledTrace: return "UnlabeledTrace";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::NonPositiveSmoothing: return "NonPositiveSmoothing";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::EmptySide: return "EmptySide";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::DuplicateIncidentId: return "DuplicateIncidentId";
    case ErrorKind::UnknownIncident: return "UnknownIncident";
    case ErrorKind::StorageFailure: return "StorageFailure";
    case ErrorKind::VersionNotFound: return "VersionNotFound";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace railcause
