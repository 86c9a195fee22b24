#pragma once

#include <stdexcept>
#include <string>

namespace physforge {

/// Bad configuration or invalid user input; the CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Network-level failure talking to an endpoint. Retried per policy by the
/// sampling layer; surfaces as a transport-failure attempt when exhausted.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace physforge
