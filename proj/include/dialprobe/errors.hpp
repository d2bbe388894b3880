#pragma once

#include <stdexcept>
#include <string>

namespace dialprobe {

// Root of every error the toolkit raises. kind() is the stable name used in
// CLI diagnostics.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define DIALPROBE_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name, what) {}             \
  }

// corpus
DIALPROBE_DEFINE_ERROR(SchemaError);
DIALPROBE_DEFINE_ERROR(EmptyCorpus);
// tensor
DIALPROBE_DEFINE_ERROR(ShapeMismatch);
DIALPROBE_DEFINE_ERROR(NonFiniteGradient);
// models
DIALPROBE_DEFINE_ERROR(EmptyContext);
DIALPROBE_DEFINE_ERROR(EmptyTarget);
DIALPROBE_DEFINE_ERROR(CorruptCheckpoint);
// probes
DIALPROBE_DEFINE_ERROR(NotApplicable);
DIALPROBE_DEFINE_ERROR(VocabMismatch);
DIALPROBE_DEFINE_ERROR(EmptyEvaluationSplit);
// textmetrics
DIALPROBE_DEFINE_ERROR(EmptyCandidateSet);
// humaneval
DIALPROBE_DEFINE_ERROR(DuplicateRecord);
DIALPROBE_DEFINE_ERROR(BadChoice);
DIALPROBE_DEFINE_ERROR(InsufficientRecords);
// analysis
DIALPROBE_DEFINE_ERROR(DegenerateData);
DIALPROBE_DEFINE_ERROR(MissingResult);
DIALPROBE_DEFINE_ERROR(EmptyGrade);
// cli
DIALPROBE_DEFINE_ERROR(UsageError);
DIALPROBE_DEFINE_ERROR(IoError);

#undef DIALPROBE_DEFINE_ERROR

} // namespace dialprobe
