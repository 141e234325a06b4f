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

#ifndef FSL_CONTAINER_HPP
#define FSL_CONTAINER_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

// Little-endian record file: magic "FSL1", u32 version, then records of
// (u32 name length, name, u8 dtype, u8 rank, u64 dims..., raw payload)
// until end of file.
enum class DType : std::uint8_t
{
  f64 = 0,
  u64 = 1,
  u8 = 2
};

struct Record
{
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;
  std::vector<std::uint8_t> u8;

  std::size_t count() const;
};

class Container
{
public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Tensor& tensor);
  void put_f64(const std::string& name, std::vector<std::uint64_t> dims, std::vector<double> data);
  void put_u64(const std::string& name, std::vector<std::uint64_t> values);
  void put_text(const std::string& name, const std::string& text);

  bool has(const std::string& name) const;
  // Throws IntegrityError if missing or of another dtype.
  const Record& get(const std::string& name, DType dtype) const;
  Tensor tensor(const std::string& name) const;
  std::vector<std::uint64_t> u64(const std::string& name) const;
  std::string text(const std::string& name) const;

  const std::vector<Record>& records() const { return records_; }

  // Writes to a sibling temporary file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

  std::string serialize() const;
  static Container deserialize(const std::string& bytes);

private:
  void add(Record record);
  std::vector<Record> records_;
};

} // namespace fsl

#endif // FSL_CONTAINER_HPP
