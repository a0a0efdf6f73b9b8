#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dsr {

// Parameter record violates one of its invariants. `field` names the offending
// parameter by its configuration key, or is empty.
class invalid_parameter : public std::invalid_argument {
public:
    explicit invalid_parameter(const std::string& what) : std::invalid_argument(what) {}
    invalid_parameter(std::string field, const std::string& what)
        : std::invalid_argument(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Argument outside the domain where a formula is defined.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class length_mismatch : public std::length_error {
public:
    using std::length_error::length_error;
};

// A fit parameter has no (independent) influence on the model.
class singular_jacobian : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const char* field, const char* what) {
    if (!ok) throw invalid_parameter(field, what);
}

} // namespace detail
} // namespace dsr
