#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace meta4 {

// Base error type for every failure mode in the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised by training loops when the loss leaves the finite range.
class DivergenceError : public Error {
  public:
    explicit DivergenceError(const std::string& what) : Error(what) {}
};

namespace detail {
template <class... Parts>
std::string concat(Parts&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}
}  // namespace detail

template <class... Parts>
[[noreturn]] void raise(Parts&&... parts) {
    throw Error(detail::concat(std::forward<Parts>(parts)...));
}

template <class... Parts>
void require(bool condition, Parts&&... parts) {
    if (!condition) raise(std::forward<Parts>(parts)...);
}

}  // namespace meta4
