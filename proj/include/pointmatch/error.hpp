#pragma once

#include <stdexcept>
#include <string>

namespace pointmatch {

// Base for every error the library raises.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public Error {
  public:
    using Error::Error;
};

class CorruptHeader : public Error {
  public:
    using Error::Error;
};

class PayloadSizeMismatch : public Error {
  public:
    using Error::Error;
};

class EmptySearchSpace : public Error {
  public:
    using Error::Error;
};

class InvalidConfig : public Error {
  public:
    using Error::Error;
};

// A query point that does not map to a voxel inside the source volume.
class QueryOutOfBounds : public Error {
  public:
    using Error::Error;
};

class EmptyInput : public Error {
  public:
    using Error::Error;
};

} // namespace pointmatch
