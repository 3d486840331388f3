#pragma once

#include <stdexcept>
#include <string>

namespace adatriplet {

// One exception type per input-contract failure so callers and tests can
// tell them apart.

struct ZeroVectorError : std::invalid_argument {
  explicit ZeroVectorError(const std::string& what) : std::invalid_argument(what) {}
};

struct DimensionMismatchError : std::invalid_argument {
  explicit DimensionMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

struct MarginOutOfRangeError : std::invalid_argument {
  explicit MarginOutOfRangeError(const std::string& what) : std::invalid_argument(what) {}
};

struct EmptyBatchError : std::invalid_argument {
  explicit EmptyBatchError(const std::string& what) : std::invalid_argument(what) {}
};

struct InsufficientSubjectsError : std::invalid_argument {
  explicit InsufficientSubjectsError(const std::string& what) : std::invalid_argument(what) {}
};

struct NoTripletsError : std::runtime_error {
  explicit NoTripletsError(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatchError : std::invalid_argument {
  explicit ShapeMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

struct EmptyInputError : std::invalid_argument {
  explicit EmptyInputError(const std::string& what) : std::invalid_argument(what) {}
};

struct NoRelevantItemsError : std::runtime_error {
  explicit NoRelevantItemsError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace adatriplet
