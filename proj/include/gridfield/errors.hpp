#pragma once

#include <stdexcept>
#include <string>

namespace gridfield {

/// Input outside an operation's mathematical domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Unreadable or malformed payload on disk (distinct from invariant violations).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a precondition that the type system cannot express.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gridfield
