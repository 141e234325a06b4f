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

#include "fsl/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsl/error.hpp"

namespace fsl {

static_assert(std::endian::native == std::endian::little,
              "the container writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'S', 'L', '1'};

const char* dtype_name(DType t)
{
  switch (t)
  {
  case DType::f64:
    return "f64";
  case DType::u64:
    return "u64";
  case DType::u8:
    return "u8";
  }
  return "?";
}

template <class T>
void put_raw(std::string& out, const T& value)
{
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader
{
public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  void read(void* dst, std::size_t n, const char* what)
  {
    if (bytes_.size() - pos_ < n)
      throw IntegrityError(std::string("container: truncated ") + what + " at byte " +
                           std::to_string(pos_));
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  template <class T>
  T get(const char* what)
  {
    T value;
    read(&value, sizeof(T), what);
    return value;
  }

private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

} // namespace

std::size_t Record::count() const
{
  std::size_t n = 1;
  for (auto d : dims)
    n *= d;
  return n;
}

void Container::add(Record record)
{
  if (record.name.empty())
    throw ContractError("container: empty record name");
  if (has(record.name))
    throw ContractError("container: duplicate record '" + record.name + "'");
  if (record.dims.size() > 255)
    throw ContractError("container: rank above 255 for '" + record.name + "'");
  records_.push_back(std::move(record));
}

void Container::put(const std::string& name, const Tensor& tensor)
{
  std::vector<std::uint64_t> dims(tensor.shape().begin(), tensor.shape().end());
  put_f64(name, std::move(dims), {tensor.data().begin(), tensor.data().end()});
}

void Container::put_f64(const std::string& name, std::vector<std::uint64_t> dims,
                        std::vector<double> data)
{
  Record r;
  r.name = name;
  r.dtype = DType::f64;
  r.dims = std::move(dims);
  if (r.count() != data.size())
    throw ContractError("container: '" + name + "' dims do not match " +
                        std::to_string(data.size()) + " values");
  r.f64 = std::move(data);
  add(std::move(r));
}

void Container::put_u64(const std::string& name, std::vector<std::uint64_t> values)
{
  Record r;
  r.name = name;
  r.dtype = DType::u64;
  r.dims = {values.size()};
  r.u64 = std::move(values);
  add(std::move(r));
}

void Container::put_text(const std::string& name, const std::string& text)
{
  Record r;
  r.name = name;
  r.dtype = DType::u8;
  r.dims = {text.size()};
  r.u8.assign(text.begin(), text.end());
  add(std::move(r));
}

bool Container::has(const std::string& name) const
{
  for (const Record& r : records_)
    if (r.name == name)
      return true;
  return false;
}

const Record& Container::get(const std::string& name, DType dtype) const
{
  for (const Record& r : records_)
    if (r.name == name)
    {
      if (r.dtype != dtype)
        throw IntegrityError("container: record '" + name + "' is " + dtype_name(r.dtype) +
                             ", expected " + dtype_name(dtype));
      return r;
    }
  throw IntegrityError("container: missing record '" + name + "'");
}

Tensor Container::tensor(const std::string& name) const
{
  const Record& r = get(name, DType::f64);
  Shape shape(r.dims.begin(), r.dims.end());
  return Tensor::from(shape, r.f64);
}

std::vector<std::uint64_t> Container::u64(const std::string& name) const
{
  return get(name, DType::u64).u64;
}

std::string Container::text(const std::string& name) const
{
  const Record& r = get(name, DType::u8);
  return {r.u8.begin(), r.u8.end()};
}

std::string Container::serialize() const
{
  std::string out(kMagic, 4);
  put_raw(out, kVersion);
  for (const Record& r : records_)
  {
    put_raw(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_raw(out, static_cast<std::uint8_t>(r.dtype));
    put_raw(out, static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims)
      put_raw(out, d);
    switch (r.dtype)
    {
    case DType::f64:
      out.append(reinterpret_cast<const char*>(r.f64.data()), r.f64.size() * sizeof(double));
      break;
    case DType::u64:
      out.append(reinterpret_cast<const char*>(r.u64.data()),
                 r.u64.size() * sizeof(std::uint64_t));
      break;
    case DType::u8:
      out.append(reinterpret_cast<const char*>(r.u8.data()), r.u8.size());
      break;
    }
  }
  return out;
}

Container Container::deserialize(const std::string& bytes)
{
  Reader in(bytes);
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IntegrityError("container: bad magic (not an FSL1 file)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion)
    throw IntegrityError("container: unsupported version " + std::to_string(version));

  Container c;
  while (!in.done())
  {
    Record r;
    const auto name_len = in.get<std::uint32_t>("name length");
    r.name.resize(name_len);
    in.read(r.name.data(), name_len, "name");
    const auto dtype = in.get<std::uint8_t>("dtype");
    if (dtype > 2)
      throw IntegrityError("container: unknown dtype code " + std::to_string(dtype) + " in '" +
                           r.name + "'");
    r.dtype = static_cast<DType>(dtype);
    const auto rank = in.get<std::uint8_t>("rank");
    for (std::uint8_t i = 0; i < rank; ++i)
      r.dims.push_back(in.get<std::uint64_t>("dims"));
    const std::size_t n = r.count();
    switch (r.dtype)
    {
    case DType::f64:
      r.f64.resize(n);
      in.read(r.f64.data(), n * sizeof(double), "payload");
      break;
    case DType::u64:
      r.u64.resize(n);
      in.read(r.u64.data(), n * sizeof(std::uint64_t), "payload");
      break;
    case DType::u8:
      r.u8.resize(n);
      in.read(r.u8.data(), n, "payload");
      break;
    }
    try
    {
      c.add(std::move(r));
    }
    catch (const ContractError& e)
    {
      throw IntegrityError(e.what());
    }
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const
{
  const std::string bytes = serialize();
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Container Container::load(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

} // namespace fsl
