#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canids {

// Root of every exception the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class RangeError : public Error {
public:
  using Error::Error;
};

class SignalError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class InjectionInfeasible : public Error {
public:
  InjectionInfeasible(const std::string& signal, const std::string& detail)
      : Error("cannot inject into " + signal + ": " + detail), signal_(signal) {}
  const std::string& signal() const noexcept { return signal_; }

private:
  std::string signal_;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class CheckpointError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  TrainingError(std::size_t epoch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Raised by the pipeline; wraps the failure of one stage.
class StageError : public Error {
public:
  StageError(const std::string& stage, const std::string& what)
      : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace canids
