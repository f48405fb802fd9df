#pragma once

#include <stdexcept>
#include <string>

namespace epo {

/// Non-finite values or divergence inside a numerical routine.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace epo
