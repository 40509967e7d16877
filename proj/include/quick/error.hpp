// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception types shared by every quick module.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace quick {

/// Base class so callers can catch everything the library throws in one place.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dimensions that violate tile divisibility or do not conform.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Non-finite or otherwise unrepresentable numeric input.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Operation applied to packed weights in the wrong layout.
class LayoutError : public Error {
public:
  using Error::Error;
};

/// Shared-memory access outside the modeled byte array, or a bad lane index.
class BoundsError : public Error {
public:
  using Error::Error;
};

/// Malformed, truncated or foreign container file.
class FormatError : public Error {
public:
  using Error::Error;
};

/// A fragment register was read before anything wrote it.
class ContractError : public Error {
public:
  using Error::Error;
};

} // namespace quick
