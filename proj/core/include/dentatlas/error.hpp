#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dentatlas {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateInput,
  kEmptyForeground,
  kMissingLabel,
  kInversionFailure,
  kRegistrationFailure,
  kAveragingFailure,
  kAlignmentFailure,
  kNumericalFailure,
  kGenerationFailure,
  kNotReachable,
  kIo,
  kConfig,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class MissingLabelError : public Error {
 public:
  explicit MissingLabelError(std::uint16_t label)
      : Error(ErrorKind::kMissingLabel,
              "label " + std::to_string(label) + " has no entry in the reassignment table"),
        label_(label) {}

  std::uint16_t label() const noexcept { return label_; }

 private:
  std::uint16_t label_;
};

class InversionError : public Error {
 public:
  InversionError(double residual_voxels, int iterations)
      : Error(ErrorKind::kInversionFailure,
              "displacement field inversion did not converge: residual " +
                  std::to_string(residual_voxels) + " voxel after " +
                  std::to_string(iterations) + " iterations"),
        residual_(residual_voxels) {}

  double residual_voxels() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace dentatlas
