#pragma once

#include <stdexcept>

namespace gazealign {

// Error taxonomy mirrors the CLI exit codes: parse=2, schema=3, shape=4,
// external client=5. Library code throws; the CLI maps to exit codes.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gazealign
