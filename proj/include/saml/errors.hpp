// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace saml {

// Every library error derives from Error so callers (the CLI in particular)
// can map the whole family onto a single runtime-failure exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};
class NonFiniteError : public Error {
 public:
  using Error::Error;
};
class NotScalarError : public Error {
 public:
  using Error::Error;
};
class SpecError : public Error {
 public:
  using Error::Error;
};
class CongruenceError : public Error {
 public:
  using Error::Error;
};
class ConstantInputError : public Error {
 public:
  using Error::Error;
};
class EpisodeError : public Error {
 public:
  using Error::Error;
};
class DegenerateLabelsError : public Error {
 public:
  using Error::Error;
};
class PreconditionError : public Error {
 public:
  using Error::Error;
};
class SearchExhaustedError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace saml
