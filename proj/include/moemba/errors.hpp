/*
 * Copyright 2026 The moemba Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace moemba {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A math function was evaluated outside its domain (e.g. log of 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A file does not follow its binary/text format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset content violates an invariant (bad label, leaking split, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a forward pass or loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace moemba
