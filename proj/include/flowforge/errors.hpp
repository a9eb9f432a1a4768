#pragma once

#include <stdexcept>
#include <string>

namespace flowforge {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (t outside (0,1), std <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary file: bad magic, truncated, checksum mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class MissingEntryError : public Error {
 public:
  using Error::Error;
};

// Raised when a frozen component is used after it has been offloaded.
class OffloadedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class YamlSyntaxError : public ConfigError {
 public:
  YamlSyntaxError(int line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class RegistryError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A configuration names components that cannot be combined.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowforge
