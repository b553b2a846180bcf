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

#include <iosfwd>
#include <string>
#include <vector>

#include "convfact/container.hpp"
#include "convfact/data_opt.hpp"
#include "convfact/decomposition.hpp"

namespace convfact {

/// Exit codes of cli_dispatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitComputation = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (program name excluded). Reports go to `out` as
/// JSON, diagnostics and usage text to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Stores a decomposed layer as entries <name>/factor<i> (and <name>/bias),
/// each tagged with the layer's method, ranks and shape.
void store_decomposed(Container& container, const std::string& name,
                      const DecomposedLayer& layer, const std::string& source);

/// Inverse of store_decomposed.
DecomposedLayer load_decomposed(const Container& container, const std::string& name);

/// Stores a batch as <name>/inputs, <name>/ref and <name>/cur.
void store_batch(Container& container, const std::string& name, const PatchBatch& batch);
PatchBatch load_batch(const Container& container, const std::string& name);

}  // namespace convfact
