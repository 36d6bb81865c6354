#ifndef BLOCKSTATE_ERRORS_HPP
#define BLOCKSTATE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace blockstate {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// config/usage -> 1, data/parse -> 2, numerical -> 3.

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct dimension_error : std::runtime_error {
  explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace blockstate

#endif
