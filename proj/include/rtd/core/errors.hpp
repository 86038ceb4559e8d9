#pragma once

#include <stdexcept>
#include <string>

namespace rtd {

// Caller broke a documented precondition (bad shape, out-of-range index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf detected at an op boundary while checked mode is on.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string op, const std::string& what)
      : std::runtime_error("numeric fault in " + op + ": " + what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corpus / vocabulary / heldout input problems.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint was written under a different configuration.
class ConfigHashMismatch : public CheckpointError {
 public:
  ConfigHashMismatch(std::string expected, std::string found)
      : CheckpointError("config hash mismatch: expected " + expected + ", checkpoint has " + found),
        expected_(std::move(expected)),
        found_(std::move(found)) {}
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

 private:
  std::string expected_;
  std::string found_;
};

#define RTD_REQUIRE(cond, msg)                                  \
  do {                                                          \
    if (!(cond)) throw ::rtd::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace rtd
