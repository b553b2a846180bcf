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

#include "convfact/container.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "json.hpp"

namespace convfact {

namespace {

using json = nlohmann::json;

constexpr std::string_view kFormat = "convfact-container";
constexpr int kVersion = 1;

[[noreturn]] void fail(ContainerErrorCode code, const std::string& message) {
  throw ContainerError(code, message);
}

std::uint64_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::size_t b) { return a * b; });
}

void append_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float read_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

std::map<std::string, std::string> read_metadata(const json& node, const std::string& where) {
  std::map<std::string, std::string> out;
  if (node.is_null()) return out;
  if (!node.is_object()) fail(ContainerErrorCode::kMalformed, where + ": metadata must be an object");
  for (const auto& [key, value] : node.items()) {
    if (!value.is_string()) {
      fail(ContainerErrorCode::kMalformed, where + ": metadata value '" + key + "' is not a string");
    }
    out[key] = value.get<std::string>();
  }
  return out;
}

std::uint64_t read_uint(const json& node, const char* field, const std::string& where) {
  if (!node.contains(field) || !node[field].is_number_unsigned()) {
    fail(ContainerErrorCode::kMalformed,
         where + ": field '" + field + "' must be a nonnegative integer");
  }
  return node[field].get<std::uint64_t>();
}

}  // namespace

std::string_view error_code_name(ContainerErrorCode code) {
  switch (code) {
    case ContainerErrorCode::kMalformed:
      return "malformed";
    case ContainerErrorCode::kTruncated:
      return "truncated";
    case ContainerErrorCode::kOverlap:
      return "overlap";
    case ContainerErrorCode::kShapeMismatch:
      return "shape_mismatch";
    case ContainerErrorCode::kIo:
      return "io";
  }
  return "unknown";
}

ContainerError::ContainerError(ContainerErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

const Entry* Container::find(std::string_view name) const {
  for (const Entry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const Entry& Container::get(std::string_view name) const {
  const Entry* e = find(name);
  if (e == nullptr) throw InvalidArgument("container has no entry named '" + std::string(name) + "'");
  return *e;
}

void Container::put(Entry entry) {
  for (Entry& e : entries) {
    if (e.name == entry.name) {
      e = std::move(entry);
      return;
    }
  }
  entries.push_back(std::move(entry));
}

bool is_valid_kind(std::string_view kind) {
  return kind == "kernel" || kind == "factor" || kind == "patchbatch" || kind == "gates" ||
         kind == "plan";
}

Entry make_entry(std::string name, std::string kind, std::vector<std::size_t> shape,
                 std::span<const double> values, std::map<std::string, std::string> metadata) {
  if (name.empty()) throw InvalidArgument("entry name must be nonempty");
  if (!is_valid_kind(kind)) throw InvalidArgument("unknown entry kind '" + kind + "'");
  if (element_count(shape) != values.size()) {
    throw InvalidArgument("entry '" + name + "': shape does not match the value count");
  }
  Entry e;
  e.name = std::move(name);
  e.kind = std::move(kind);
  e.shape = std::move(shape);
  e.metadata = std::move(metadata);
  e.values.reserve(values.size());
  for (double v : values) e.values.push_back(static_cast<float>(v));
  e.byte_length = 4 * e.values.size();
  return e;
}

std::vector<double> entry_values(const Entry& entry) {
  return {entry.values.begin(), entry.values.end()};
}

Entry kernel_entry(std::string name, const Kernel4D& kernel) {
  return make_entry(std::move(name), "kernel",
                    {kernel.out_channels(), kernel.in_channels(), kernel.size(), kernel.size()},
                    kernel.data());
}

Kernel4D entry_kernel(const Entry& entry) {
  if (entry.shape.size() != 4 || entry.shape[2] != entry.shape[3]) {
    throw InvalidArgument("entry '" + entry.name + "' is not a (t, s, k, k) kernel");
  }
  return Kernel4D(entry.shape[0], entry.shape[1], entry.shape[2], entry_values(entry));
}

Tensor entry_tensor(const Entry& entry) { return Tensor(entry.shape, entry_values(entry)); }

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  std::filesystem::path blob = manifest;
  blob.replace_extension(".bin");
  return blob;
}

void write_container(const Container& container, const std::filesystem::path& manifest) {
  std::set<std::string> names;
  json entries = json::array();
  std::string blob;
  for (const Entry& e : container.entries) {
    if (!names.insert(e.name).second) {
      throw InvalidArgument("duplicate entry name '" + e.name + "'");
    }
    if (!is_valid_kind(e.kind)) throw InvalidArgument("unknown entry kind '" + e.kind + "'");
    if (element_count(e.shape) != e.values.size()) {
      throw InvalidArgument("entry '" + e.name + "': shape does not match the value count");
    }
    json node;
    node["name"] = e.name;
    node["kind"] = e.kind;
    node["dtype"] = "f32";
    node["shape"] = e.shape;
    node["byte_offset"] = blob.size();
    node["byte_length"] = 4 * e.values.size();
    node["metadata"] = e.metadata;
    entries.push_back(std::move(node));
    for (float v : e.values) append_f32(blob, v);
  }

  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["blob"] = blob_path(manifest).filename().string();
  doc["blob_bytes"] = blob.size();
  doc["metadata"] = container.metadata;
  doc["entries"] = std::move(entries);

  const auto blob_file = blob_path(manifest);
  std::ofstream bout(blob_file, std::ios::binary | std::ios::trunc);
  if (!bout) fail(ContainerErrorCode::kIo, "cannot open " + blob_file.string() + " for writing");
  bout.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bout) fail(ContainerErrorCode::kIo, "write failed for " + blob_file.string());

  std::ofstream mout(manifest, std::ios::binary | std::ios::trunc);
  if (!mout) fail(ContainerErrorCode::kIo, "cannot open " + manifest.string() + " for writing");
  mout << doc.dump(2) << '\n';
  if (!mout) fail(ContainerErrorCode::kIo, "write failed for " + manifest.string());
}

Container read_container(const std::filesystem::path& manifest) {
  std::ifstream min(manifest, std::ios::binary);
  if (!min) fail(ContainerErrorCode::kIo, "cannot open " + manifest.string());
  json doc;
  try {
    doc = json::parse(min);
  } catch (const json::exception& e) {
    fail(ContainerErrorCode::kMalformed, "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("format", std::string{}) != kFormat) {
    fail(ContainerErrorCode::kMalformed, "manifest format tag missing or wrong");
  }
  if (!doc.contains("version") || doc["version"] != kVersion) {
    fail(ContainerErrorCode::kMalformed, "unsupported manifest version");
  }
  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    fail(ContainerErrorCode::kMalformed, "manifest lacks an entries array");
  }

  Container out;
  out.metadata = read_metadata(doc.value("metadata", json()), "manifest");
  std::set<std::string> names;
  for (const json& node : doc["entries"]) {
    if (!node.is_object()) fail(ContainerErrorCode::kMalformed, "entry is not an object");
    Entry e;
    if (!node.contains("name") || !node["name"].is_string()) {
      fail(ContainerErrorCode::kMalformed, "entry without a string name");
    }
    e.name = node["name"].get<std::string>();
    const std::string where = "entry '" + e.name + "'";
    if (!names.insert(e.name).second) fail(ContainerErrorCode::kMalformed, where + " is duplicated");
    if (!node.contains("kind") || !node["kind"].is_string() ||
        !is_valid_kind(node["kind"].get<std::string>())) {
      fail(ContainerErrorCode::kMalformed, where + ": kind missing or unknown");
    }
    e.kind = node["kind"].get<std::string>();
    if (node.value("dtype", std::string{}) != "f32") {
      fail(ContainerErrorCode::kMalformed, where + ": dtype must be f32");
    }
    if (!node.contains("shape") || !node["shape"].is_array()) {
      fail(ContainerErrorCode::kMalformed, where + ": shape must be an array");
    }
    for (const json& d : node["shape"]) {
      if (!d.is_number_unsigned()) {
        fail(ContainerErrorCode::kMalformed, where + ": shape entries must be nonnegative integers");
      }
      e.shape.push_back(d.get<std::size_t>());
    }
    e.byte_offset = read_uint(node, "byte_offset", where);
    e.byte_length = read_uint(node, "byte_length", where);
    e.metadata = read_metadata(node.value("metadata", json()), where);
    if (4 * element_count(e.shape) != e.byte_length) {
      fail(ContainerErrorCode::kShapeMismatch,
           where + ": shape product times 4 differs from byte_length");
    }
    out.entries.push_back(std::move(e));
  }

  std::vector<const Entry*> by_offset;
  for (const Entry& e : out.entries) by_offset.push_back(&e);
  std::stable_sort(by_offset.begin(), by_offset.end(), [](const Entry* a, const Entry* b) {
    return a->byte_offset < b->byte_offset;
  });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    const Entry& prev = *by_offset[i - 1];
    if (prev.byte_length > 0 && prev.byte_offset + prev.byte_length > by_offset[i]->byte_offset &&
        by_offset[i]->byte_length > 0) {
      fail(ContainerErrorCode::kOverlap,
           "entries '" + prev.name + "' and '" + by_offset[i]->name + "' overlap");
    }
  }

  const auto blob_file = manifest.parent_path() /
                         doc.value("blob", blob_path(manifest).filename().string());
  std::ifstream bin(blob_file, std::ios::binary);
  if (!bin) fail(ContainerErrorCode::kIo, "cannot open blob " + blob_file.string());
  const std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (doc.contains("blob_bytes") && doc["blob_bytes"].is_number_unsigned() &&
      doc["blob_bytes"].get<std::uint64_t>() > blob.size()) {
    fail(ContainerErrorCode::kTruncated, "blob is shorter than the manifest records");
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (Entry& e : out.entries) {
    if (e.byte_offset + e.byte_length > blob.size()) {
      fail(ContainerErrorCode::kTruncated, "entry '" + e.name + "' extends past the blob end");
    }
    e.values.resize(e.byte_length / 4);
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      e.values[i] = read_f32(bytes + e.byte_offset + 4 * i);
    }
  }
  return out;
}

}  // namespace convfact
