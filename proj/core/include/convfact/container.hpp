// Copyright 2026 The convfact Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "convfact/tensor.hpp"

namespace convfact {

enum class ContainerErrorCode {
  kMalformed,
  kTruncated,
  kOverlap,
  kShapeMismatch,
  kIo,
};

std::string_view error_code_name(ContainerErrorCode code);

class ContainerError : public std::runtime_error {
 public:
  ContainerError(ContainerErrorCode code, const std::string& message);
  ContainerErrorCode code() const { return code_; }

 private:
  ContainerErrorCode code_;
};

/// One array in the container. Values are held as float, which is what the
/// blob stores.
struct Entry {
  std::string name;
  /// One of: kernel, factor, patchbatch, gates, plan.
  std::string kind;
  std::vector<std::size_t> shape;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;
  std::map<std::string, std::string> metadata;
  std::vector<float> values;
};

/// A JSON manifest plus a little-endian f32 blob stored next to it as
/// <manifest stem>.bin.
struct Container {
  std::map<std::string, std::string> metadata;
  std::vector<Entry> entries;

  const Entry* find(std::string_view name) const;
  const Entry& get(std::string_view name) const;
  /// Replaces an entry of the same name in place or appends.
  void put(Entry entry);
};

bool is_valid_kind(std::string_view kind);

/// Builds an entry, rounding the values to float. Throws InvalidArgument on
/// a bad kind or a shape whose product differs from the value count.
Entry make_entry(std::string name, std::string kind, std::vector<std::size_t> shape,
                 std::span<const double> values,
                 std::map<std::string, std::string> metadata = {});

std::vector<double> entry_values(const Entry& entry);

Entry kernel_entry(std::string name, const Kernel4D& kernel);
Kernel4D entry_kernel(const Entry& entry);
Tensor entry_tensor(const Entry& entry);

/// Blob path paired with a manifest path.
std::filesystem::path blob_path(const std::filesystem::path& manifest);

/// Writes the manifest and blob; offsets are assigned contiguously in entry
/// order. Output is a pure function of the container contents.
void write_container(const Container& container, const std::filesystem::path& manifest);

/// Reads and validates a container. Errors carry a ContainerErrorCode.
Container read_container(const std::filesystem::path& manifest);

}  // namespace convfact
