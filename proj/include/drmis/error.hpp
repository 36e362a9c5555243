#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drmis
{

/// Failure categories. The CLI maps Config to exit code 2 and everything
/// else raised during an estimation to exit code 3.
enum class ErrorKind
{
    Domain,       // argument outside the mathematical domain
    Config,       // invalid configuration / parameters
    Estimation,   // an estimator produced an unusable value
    Numeric,      // series truncation, root-finding cap, overflow
    Boundary,     // calibration target outside the pivot hull
    Degenerate,   // constant data where variation is required
    Training,     // surrogate training failed
    Selection,    // no surrogate candidate survived cross validation
    Allocation,   // allocation coefficients could not be formed
    Sampling,     // MCMC diagnostics failed
    Ratio,        // likelihood ratio underflow
    Comparison,   // per-level variance comparison not estimable
    Method,       // method not applicable (e.g. quadrature in high dimension)
    Io,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind)
    {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Estimation: return "estimation";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Boundary: return "boundary";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Training: return "training";
    case ErrorKind::Selection: return "selection";
    case ErrorKind::Allocation: return "allocation";
    case ErrorKind::Sampling: return "sampling";
    case ErrorKind::Ratio: return "ratio";
    case ErrorKind::Comparison: return "comparison";
    case ErrorKind::Method: return "method";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error
{
  public:
    Error(ErrorKind kind, std::string const& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what)
        , kind_(kind)
        , message_(what)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    std::string const& message() const noexcept { return message_; }

  private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string const& what)
{
    throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, std::string const& what)
{
    if (!condition)
        throw Error(kind, what);
}

/// Re-throw an Error with extra context prepended, keeping its kind.
template <class F>
decltype(auto) with_context(std::string const& context, F&& f)
{
    try
    {
        return f();
    }
    catch (Error const& e)
    {
        throw Error(e.kind(), context + ": " + e.message());
    }
}

}  // namespace drmis
