#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace odex {

using SceneId = std::int32_t;
using LabelId = std::int32_t;

/// One occurrence of an object: label `label` detected in scene `scene`.
struct Instance
{
  LabelId label = 0;
  SceneId scene = 0;

  friend bool operator==(const Instance&, const Instance&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorCode
{
  invalid_argument,
  io,
  invalid_dataset,
  unknown_label,
  not_an_instance,
  no_cooccurrence,
  same_label,
  empty_subset,
  numeric,
};

inline std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::invalid_argument: return "INVALID_ARGUMENT";
    case ErrorCode::io: return "IO_ERROR";
    case ErrorCode::invalid_dataset: return "INVALID_DATASET";
    case ErrorCode::unknown_label: return "UNKNOWN_LABEL";
    case ErrorCode::not_an_instance: return "NOT_AN_INSTANCE";
    case ErrorCode::no_cooccurrence: return "NO_COOCCURRENCE";
    case ErrorCode::same_label: return "SAME_LABEL";
    case ErrorCode::empty_subset: return "EMPTY_SUBSET";
    case ErrorCode::numeric: return "NUMERIC_ERROR";
  }
  return "UNKNOWN";
}

/// Single exception type for the library; `code()` lets callers (the
/// service, the CLI) map failures without parsing messages.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(what)
    , code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace odex
