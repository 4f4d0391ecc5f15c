#pragma once
#include <stdexcept>
#include <string>

namespace vsflqr {

/// Base class for every error raised by the library.
class error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (bad shapes, invalid parameters, schema violations).
class validation_error : public error
{
public:
    using error::error;
};

/// A functional sample that cannot be interpolated (fewer than two points).
class degenerate_sample_error : public validation_error
{
public:
    explicit degenerate_sample_error(const std::string& subject)
        : validation_error("degenerate sample for subject '" + subject +
                           "': at least 2 observation points are required"),
          subject_(subject)
    {}
    const std::string& subject() const noexcept { return subject_; }

private:
    std::string subject_;
};

class dimension_error : public validation_error
{
public:
    using validation_error::validation_error;
};

class insufficient_data_error : public validation_error
{
public:
    using validation_error::validation_error;
};

/// Non-finite values produced inside the solver.
class numerical_error : public error
{
public:
    using error::error;
};

} // namespace vsflqr
