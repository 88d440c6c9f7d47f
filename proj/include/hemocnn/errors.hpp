#pragma once

#include <stdexcept>

namespace hemocnn {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: config/usage -> 1, shape/data/format -> 2, numeric -> 3.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

class StateError : public Error {
public:
  using Error::Error;
};

}  // namespace hemocnn
