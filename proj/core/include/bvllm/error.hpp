#pragma once

#include <stdexcept>
#include <string>

namespace bvllm {

// Base for every error the library raises. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BudgetInfeasibleError : public Error {
 public:
  BudgetInfeasibleError(std::size_t frames, std::size_t theta)
      : Error("budget infeasible: " + std::to_string(frames) +
              " frames cannot fit in a budget of " + std::to_string(theta) +
              " tokens at one token per frame"),
        frames_(frames),
        theta_(theta) {}

  std::size_t frames() const { return frames_; }
  std::size_t theta() const { return theta_; }

 private:
  std::size_t frames_;
  std::size_t theta_;
};

class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace bvllm
