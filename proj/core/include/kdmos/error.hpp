#pragma once

#include <stdexcept>
#include <string>

namespace kdmos {

/// Broad failure category; drives CLI exit codes.
enum class ErrorCategory {
  Config = 1,
  Data = 2,
  Numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define KDMOS_DEFINE_ERROR(Name, Category)                              \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what)                              \
        : Error(ErrorCategory::Category, #Name ": " + what) {}          \
  }

KDMOS_DEFINE_ERROR(IoFailure, Data);
KDMOS_DEFINE_ERROR(MalformedScan, Data);
KDMOS_DEFINE_ERROR(MalformedLabel, Data);
KDMOS_DEFINE_ERROR(LabelCountMismatch, Data);
KDMOS_DEFINE_ERROR(MalformedPoseLine, Data);
KDMOS_DEFINE_ERROR(FormatError, Data);
KDMOS_DEFINE_ERROR(NonRigidTransform, Data);
KDMOS_DEFINE_ERROR(IndexOutOfRange, Config);
KDMOS_DEFINE_ERROR(ShapeMismatch, Config);
KDMOS_DEFINE_ERROR(LengthMismatch, Config);
KDMOS_DEFINE_ERROR(EmptyFrame, Numeric);
KDMOS_DEFINE_ERROR(ConfigError, Config);
KDMOS_DEFINE_ERROR(NonFiniteLoss, Numeric);

#undef KDMOS_DEFINE_ERROR

}  // namespace kdmos
