#pragma once

#include <stdexcept>
#include <string>

namespace strucdiff {

// Malformed schema documents, unknown paths, fingerprint mismatches.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rows that do not conform to a schema, ragged CSV, empty datasets.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses or parameters.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace strucdiff
