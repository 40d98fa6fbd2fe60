#pragma once

#include <stdexcept>
#include <string>

namespace fedjets {

// Error taxonomy shared by the library and the CLI. The CLI maps each kind
// onto a fixed exit code (config 2, numeric 3, io 4).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Packet or checkpoint disagrees with the NetSpec it claims to belong to.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedjets
