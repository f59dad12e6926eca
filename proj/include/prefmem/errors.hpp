#pragma once

#include <stdexcept>
#include <string>

namespace prefmem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document (taxonomy file, corpus record, JSON body).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input parsed but violates an invariant (duplicate id, bad path, bad dimension).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Network / endpoint failure after retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Endpoint rejected credentials.
class AuthError : public Error {
 public:
  using Error::Error;
};

// The model or wire payload broke the tool-calling contract
// (missing tool call when forced, disabled tool selected, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Persistent store I/O failure.
class StorageError : public Error {
 public:
  using Error::Error;
};

// A referenced record vanished between decision and application.
class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefmem
