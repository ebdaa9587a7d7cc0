#pragma once

#include <stdexcept>
#include <string>

namespace gem {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input documents (corpora, structured expert output, persisted files).
class ParseError : public Error {
public:
    using Error::Error;
};

// Violated precondition: bad shapes, out-of-range indices, empty batches.
class ContractError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration, detected at load time.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Accuracy table missing an entry needed for routing.
class CalibrationError : public Error {
public:
    using Error::Error;
};

// Training diverged or produced non-finite gradients.
class TrainingError : public Error {
public:
    using Error::Error;
};

// Value generation failed past the retry/repair budget.
class GenerationError : public Error {
public:
    using Error::Error;
};

// Remote provider unreachable or returned a malformed response.
class TransportError : public Error {
public:
    using Error::Error;
};

// Filesystem failures when reading or writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gem
