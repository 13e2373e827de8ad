#pragma once

#include <stdexcept>
#include <string>

namespace pat {

// Shapes that do not line up (matmul inner dims, image size vs config, ...).
class DimensionError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Caller broke a precondition of an operation.
class ContractError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class SamplingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class LookupError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// NaN or Inf showed up where finite values are required.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Malformed file. Carries the offending file and the byte offset where parsing stopped.
class ParseError : public std::runtime_error {
   public:
    ParseError(std::string file, std::size_t offset, const std::string& what)
        : std::runtime_error(file + " @" + std::to_string(offset) + ": " + what),
          file_(std::move(file)),
          offset_(offset) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t offset() const noexcept { return offset_; }

   private:
    std::string file_;
    std::size_t offset_;
};

class ValidationError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
   public:
    enum class Kind { Io, Magic, Manifest, Shape, Truncated, Missing };

    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

   private:
    Kind kind_;
};

}  // namespace pat
