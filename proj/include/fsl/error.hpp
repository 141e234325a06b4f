/*
 * Copyright 2026 The fewshot-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FSL_ERROR_HPP
#define FSL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace fsl {

// Root of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Incompatible shapes, invalid axis, kernel larger than input.
class DimensionError : public Error
{
public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class ContractError : public Error
{
public:
  using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error
{
public:
  using Error::Error;
};

// Dataset content does not meet its structural requirements.
class IntegrityError : public Error
{
public:
  using Error::Error;
};

// Filesystem or decode failure.
class IoError : public Error
{
public:
  using Error::Error;
};

// A forward pass produced NaN or Inf.
class NonFiniteError : public Error
{
public:
  using Error::Error;
};

} // namespace fsl

#endif // FSL_ERROR_HPP
