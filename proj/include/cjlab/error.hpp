#pragma once
#include <stdexcept>
#include <string>

namespace cjlab {

// exit_code() is what the CLI returns when the error escapes a subcommand
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 2; }
    virtual const char* kind() const { return "error"; }
};

#define CJLAB_ERROR(Name, code, tag)                                   \
    class Name : public Error {                                        \
    public:                                                            \
        using Error::Error;                                            \
        int exit_code() const override { return code; }               \
        const char* kind() const override { return tag; }              \
    };

CJLAB_ERROR(InvalidArgument, 2, "invalid-argument")
CJLAB_ERROR(SupportOverflow, 2, "support-overflow")
CJLAB_ERROR(CancellationViolation, 2, "cancellation-violation")
CJLAB_ERROR(ParityError, 2, "parity-error")
CJLAB_ERROR(SingularSupport, 2, "singular-support")
CJLAB_ERROR(UndefinedRatio, 2, "undefined-ratio")
CJLAB_ERROR(ResolutionError, 3, "resolution-error")
CJLAB_ERROR(TimeStepError, 3, "time-step-error")

#undef CJLAB_ERROR

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument(msg);
}

}  // namespace cjlab
