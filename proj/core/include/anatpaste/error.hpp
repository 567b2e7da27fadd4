#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anatpaste {

enum class Errc {
    InvalidDimensions,
    InvalidArgument,
    Degenerate,
    InvalidPlacement,
    NoLungRegion,
    NoValidPlacement,
    EmptyDataset,
    EmptyReferenceSet,
    EmptyQuerySet,
    MisalignedEnsemble,
    SingleClass,
    UndefinedF1,
    GenerationFailed,
    IoError,
    ParseError,
    ConfigError,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }
    /// what() without the leading "Code: ", for re-wrapping with more context.
    std::string_view detail() const noexcept {
        return std::string_view(what()).substr(to_string(code_).size() + 2);
    }

private:
    Errc code_;
};

}  // namespace anatpaste
