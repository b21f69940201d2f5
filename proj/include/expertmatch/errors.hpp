#pragma once

#include <stdexcept>
#include <string>

namespace expertmatch {

// Base for all data/validation errors. `code()` is a stable machine-readable
// tag; the CLI prints it on stderr as "error: <code>: <message>" and exits 2.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define EXPERTMATCH_ERROR(Name, tag)                                    \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& m) : Error(tag, m) {}              \
  }

EXPERTMATCH_ERROR(ParseError, "parse_error");
EXPERTMATCH_ERROR(DuplicateIdError, "duplicate_id");
EXPERTMATCH_ERROR(DanglingReferenceError, "dangling_reference");
EXPERTMATCH_ERROR(EmptyDatasetError, "empty_dataset");
EXPERTMATCH_ERROR(InvalidRatioError, "invalid_ratio");
EXPERTMATCH_ERROR(TooFewQuestionsError, "too_few_questions");
EXPERTMATCH_ERROR(EmptyDocumentSetError, "empty_document_set");
EXPERTMATCH_ERROR(EmptyQueryError, "empty_query");
EXPERTMATCH_ERROR(VocabularyTooSmallError, "vocabulary_too_small");
EXPERTMATCH_ERROR(GuardExceededError, "guard_exceeded");
EXPERTMATCH_ERROR(EmptyAfterFilterError, "empty_after_filter");
EXPERTMATCH_ERROR(FormatError, "format_error");
EXPERTMATCH_ERROR(IoError, "io_error");
EXPERTMATCH_ERROR(DimensionMismatchError, "dimension_mismatch");
EXPERTMATCH_ERROR(EmptyDistributionError, "empty_distribution");
EXPERTMATCH_ERROR(EmptyTextError, "empty_text");
EXPERTMATCH_ERROR(NoCandidatesError, "no_candidates");
EXPERTMATCH_ERROR(UnlabeledVariableError, "unlabeled_variable");
EXPERTMATCH_ERROR(DivergedError, "diverged");
EXPERTMATCH_ERROR(NoRelevantError, "no_relevant");
EXPERTMATCH_ERROR(NoResponsesError, "no_responses");
EXPERTMATCH_ERROR(TooManyCandidatesError, "too_many_candidates");

#undef EXPERTMATCH_ERROR

}  // namespace expertmatch
