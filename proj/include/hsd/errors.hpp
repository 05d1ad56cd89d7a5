#pragma once

#include <stdexcept>
#include <string>

namespace hsd {

// Base for all pipeline errors. CLI maps subclasses to exit codes:
// UsageError -> 2, DataError -> 3, NetworkError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NetworkError : public Error {
public:
    using Error::Error;
};

class UnsupportedLanguageError : public DataError {
public:
    using DataError::DataError;
};

} // namespace hsd
