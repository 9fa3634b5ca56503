#pragma once

#include <stdexcept>
#include <string>

namespace remask {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file, archive or wire payload.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Transport or protocol failure talking to a remote model.
class RemoteError : public Error {
 public:
  using Error::Error;
};

/// The judge answered, but no final `VERDICT:` line could be parsed.
class MalformedVerdict : public RemoteError {
 public:
  explicit MalformedVerdict(std::string raw)
      : RemoteError("malformed verdict"), raw_response_(std::move(raw)) {}

  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

}  // namespace remask
