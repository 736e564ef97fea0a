#pragma once

#include <stdexcept>
#include <string>

namespace timewarp {

// Base of every error thrown by the library. `kind()` is a stable tag used by
// the CLI and the Python bindings to classify failures.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define TIMEWARP_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& what) : Error(#Name, what) {}           \
    }

// corpus
TIMEWARP_DEFINE_ERROR(CorpusEmpty);
TIMEWARP_DEFINE_ERROR(CorpusIoError);
// preprocess
TIMEWARP_DEFINE_ERROR(TooFewScenes);
TIMEWARP_DEFINE_ERROR(InvalidOrder);
// permute
TIMEWARP_DEFINE_ERROR(NotShuffleable);
// media
TIMEWARP_DEFINE_ERROR(InvalidSpec);
TIMEWARP_DEFINE_ERROR(ToolkitUnavailable);
TIMEWARP_DEFINE_ERROR(StepFailed);
// promptkit
TIMEWARP_DEFINE_ERROR(UnknownTemplate);
TIMEWARP_DEFINE_ERROR(MissingPlaceholder);
TIMEWARP_DEFINE_ERROR(TemplateFormatError);
// llmclient
TIMEWARP_DEFINE_ERROR(BackendUnavailable);
TIMEWARP_DEFINE_ERROR(RequestRejected);
TIMEWARP_DEFINE_ERROR(CredentialMissing);
// datasets
TIMEWARP_DEFINE_ERROR(MixtureUnderflow);
TIMEWARP_DEFINE_ERROR(SchemaMismatch);
TIMEWARP_DEFINE_ERROR(PreconditionFailed);
// eval
TIMEWARP_DEFINE_ERROR(DuplicatePrediction);
// verify
TIMEWARP_DEFINE_ERROR(InvalidInput);
TIMEWARP_DEFINE_ERROR(DivergenceInfinite);
// cli / pipeline
TIMEWARP_DEFINE_ERROR(ConfigError);
TIMEWARP_DEFINE_ERROR(StageDependencyMissing);

#undef TIMEWARP_DEFINE_ERROR

// Generator output that could not be decoded into the response envelope. The
// raw text is kept for audit.
class ParseFailure : public Error {
public:
    ParseFailure(const std::string& what, std::string raw)
        : Error("ParseFailure", what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace timewarp
