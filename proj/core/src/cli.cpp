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

#include "convfact/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "convfact/gates.hpp"
#include "convfact/pruning.hpp"
#include "convfact/rank_select.hpp"
#include "convfact/rng.hpp"
#include "json.hpp"

namespace convfact {

namespace {

using json = nlohmann::json;

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw InvalidArgument(what + ": '" + item + "' is not a nonnegative integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw InvalidArgument(what + ": empty list");
  return out;
}

std::size_t meta_size(const Entry& e, const std::string& key) {
  const auto it = e.metadata.find(key);
  if (it == e.metadata.end()) {
    throw InvalidArgument("entry '" + e.name + "' lacks metadata '" + key + "'");
  }
  return split_sizes(it->second, key).front();
}

std::vector<double> layer_bias(const Container& c, const std::string& layer) {
  const Entry* e = c.find(layer + ".bias");
  return e == nullptr ? std::vector<double>{} : entry_values(*e);
}

FeatureMap random_map(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  FeatureMap m(c, h, w);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

json cost_json(const LayerCost& cost) {
  json j;
  j["method"] = std::string(method_name(cost.method));
  j["ranks"] = cost.ranks;
  j["macs_before"] = cost.macs_original;
  j["macs_after"] = cost.macs_compressed;
  j["params_before"] = cost.params_original;
  j["params_after"] = cost.params_compressed;
  const double retained = cost.macs_original == 0
                              ? 0.0
                              : static_cast<double>(cost.macs_compressed) /
                                    static_cast<double>(cost.macs_original);
  // "ratio" is the retained MAC fraction, the same convention as --ratio.
  j["ratio"] = retained;
  j["saved_fraction"] = 1.0 - retained;
  return j;
}

double kernel_distance(const Kernel4D& a, const Kernel4D& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

void emit(std::ostream& out, const json& report) { out << report.dump(2) << '\n'; }

struct Shared {
  std::string in;
  std::string out;
  std::string layer = "conv";
  std::size_t height = 1;
  std::size_t width = 1;
  std::uint64_t seed = 0;
};

Container load_or_empty(const std::string& path) {
  return path.empty() ? Container{} : read_container(path);
}

void save(const Container& c, const std::string& path) {
  if (!path.empty()) write_container(c, path);
}

// ---------------------------------------------------------------- commands

json run_synth(const Shared& o, std::size_t t, std::size_t s, std::size_t k,
               const std::string& batch, std::size_t images, std::size_t map_size,
               std::size_t per_image, double prefix_noise) {
  Rng rng(o.seed);
  Kernel4D kernel(t, s, k);
  for (double& v : kernel.data()) v = rng.normal();
  std::vector<double> bias(t);
  for (double& v : bias) v = 0.1 * rng.normal();

  Container c = load_or_empty(o.in);
  c.put(kernel_entry(o.layer, kernel));
  c.put(make_entry(o.layer + ".bias", "kernel", {t}, bias, {{"role", "bias"}}));
  json report;
  report["command"] = "synth";
  report["layer"] = o.layer;
  report["shape"] = {t, s, k, k};
  report["seed"] = o.seed;
  if (!batch.empty()) {
    std::vector<PatchSource> sources;
    for (std::size_t img = 0; img < images; ++img) {
      const FeatureMap ref = random_map(rng, s, map_size, map_size);
      FeatureMap cur = ref;
      for (double& v : cur.data()) v += prefix_noise * rng.normal();
      sources.push_back(make_patch_source(kernel, bias, ref, cur));
    }
    const PatchBatch pb = sample_patches(sources, per_image, k, o.seed + 1);
    store_batch(c, batch, pb);
    report["batch"] = batch;
    report["batch_rows"] = pb.rows();
  }
  save(c, o.out);
  return report;
}

json run_compress(const Shared& o, const std::string& method_text, const std::string& rank_text,
                  double ratio, const std::string& name_opt) {
  const Container in = read_container(o.in);
  const Kernel4D kernel = entry_kernel(in.get(o.layer));
  const Method method = parse_method(method_text);
  const LayerDims dims{kernel.in_channels(), kernel.out_channels(), kernel.size(), o.height,
                       o.width};
  if (method == Method::kOriginal || method == Method::kAsym3d) {
    throw InvalidArgument("--method must be one of weight-svd, spatial-svd, cp, tucker, tt");
  }
  const RankVector ranks =
      rank_text.empty() ? ranks_from_ratio(method, dims, ratio) : split_sizes(rank_text, "--rank");
  if (ranks.size() != rank_arity(method)) {
    throw InvalidArgument("--rank: " + std::string(method_text) + " takes " +
                          std::to_string(rank_arity(method)) + " rank value(s)");
  }

  DecomposedLayer layer;
  switch (method) {
    case Method::kWeightSvd:
      layer = weight_svd(kernel, ranks[0]);
      break;
    case Method::kSpatialSvd:
      layer = spatial_svd(kernel, ranks[0]);
      break;
    case Method::kCp: {
      CpOptions options;
      options.seed = o.seed;
      layer = cp_als(kernel, ranks[0], options);
      break;
    }
    case Method::kTucker:
      layer = tucker_hooi(kernel, ranks[0], ranks[1]);
      break;
    case Method::kTt:
      layer = tt_svd(kernel, ranks[0], ranks[1], ranks[2]);
      break;
    default:
      break;
  }
  layer.bias = layer_bias(in, o.layer);

  const std::string name = name_opt.empty() ? o.layer + "." + method_text : name_opt;
  Container c = in;
  store_decomposed(c, name, layer, o.layer);
  save(c, o.out);

  const double error = kernel_distance(kernel, reconstruct(layer));
  json report = cost_json(layer_cost(layer, o.height, o.width));
  report["command"] = "compress";
  report["layer"] = o.layer;
  report["name"] = name;
  report["recon_error"] = error;
  const double norm = kernel.frobenius_norm();
  report["recon_error_relative"] = norm > 0.0 ? error / norm : 0.0;
  report["seed"] = o.seed;
  return report;
}

json run_reconstruct(const Shared& o, const std::string& name) {
  const Container in = read_container(o.in);
  const DecomposedLayer layer = load_decomposed(in, name);
  const Kernel4D rebuilt = reconstruct(layer);
  std::string source = o.layer;
  if (const auto it = layer.metadata.find("source"); it != layer.metadata.end()) source = it->second;

  json report = cost_json(layer_cost(layer, o.height, o.width));
  report["command"] = "reconstruct";
  report["name"] = name;
  if (const Entry* original = in.find(source)) {
    const Kernel4D kernel = entry_kernel(*original);
    const double error = kernel_distance(kernel, rebuilt);
    report["layer"] = source;
    report["recon_error"] = error;
    const double norm = kernel.frobenius_norm();
    report["recon_error_relative"] = norm > 0.0 ? error / norm : 0.0;
  } else {
    report["recon_error"] = nullptr;
  }
  Container c = in;
  Entry e = kernel_entry(name + "/reconstructed", rebuilt);
  e.metadata["source"] = name;
  c.put(std::move(e));
  save(c, o.out);
  return report;
}

json run_report(const Shared& o) {
  const Container in = read_container(o.in);
  json layers = json::array();
  std::uint64_t before = 0, after = 0;
  std::vector<std::string> decomposed;
  for (const Entry& e : in.entries) {
    if (e.kind == "kernel" && e.shape.size() == 4 && e.shape[2] == e.shape[3] &&
        !e.metadata.contains("source")) {
      const LayerDims dims{e.shape[1], e.shape[0], e.shape[2], o.height, o.width};
      json row = cost_json(mac_cost(dims, Method::kOriginal));
      row["name"] = e.name;
      row["shape"] = e.shape;
      layers.push_back(row);
      before += row["macs_before"].get<std::uint64_t>();
    }
    if (e.kind == "factor" && e.metadata.contains("layer") &&
        std::find(decomposed.begin(), decomposed.end(), e.metadata.at("layer")) ==
            decomposed.end()) {
      decomposed.push_back(e.metadata.at("layer"));
    }
  }
  json compressed = json::array();
  for (const std::string& name : decomposed) {
    const DecomposedLayer layer = load_decomposed(in, name);
    json row = cost_json(layer_cost(layer, o.height, o.width));
    row["name"] = name;
    row["source"] = layer.metadata.count("source") ? layer.metadata.at("source") : "";
    compressed.push_back(row);
    after += row["macs_after"].get<std::uint64_t>();
  }
  json report;
  report["command"] = "report";
  report["height"] = o.height;
  report["width"] = o.width;
  report["layers"] = layers;
  report["decomposed"] = compressed;
  report["macs_before"] = before;
  return report;
}

json run_dataopt(const Shared& o, const std::string& mode, const std::string& batch_name,
                 const std::string& rank_text, const std::vector<double>& lambdas,
                 const std::string& name_opt) {
  const Container in = read_container(o.in);
  const Kernel4D kernel = entry_kernel(in.get(o.layer));
  const std::vector<double> bias = layer_bias(in, o.layer);
  const PatchBatch batch = load_batch(in, batch_name);
  const RankVector ranks = split_sizes(rank_text, "--rank");
  const auto need = [&](std::size_t n) {
    if (ranks.size() != n) {
      throw InvalidArgument("--rank: mode " + mode + " takes " + std::to_string(n) + " value(s)");
    }
  };

  json report;
  RefinedLayer refined;
  if (mode == "data-svd") {
    need(1);
    refined = data_svd(kernel, bias, batch.ref_outputs, ranks[0]);
  } else if (mode == "asym") {
    need(1);
    refined = asym_data_svd(batch, kernel, bias, ranks[0]);
  } else if (mode == "relu-asym") {
    need(1);
    ReluAsymOptions options;
    if (!lambdas.empty()) options.lambda_schedule = lambdas;
    const ReluAsymResult result = relu_asym(batch, kernel, bias, ranks[0], options);
    refined = result.layer;
    report["initial_objective"] = result.initial_objective;
    report["final_objective"] = result.final_objective;
  } else if (mode == "asym3d") {
    need(2);
    refined = asym3d(kernel, bias, batch, ranks[0], ranks[1]);
  } else if (mode == "spatial-refine") {
    need(1);
    DecomposedLayer spatial = spatial_svd(kernel, ranks[0]);
    spatial.bias = bias;
    refined = spatial_refine(spatial, batch);
  } else {
    throw InvalidArgument("--mode must be one of data-svd, asym, asym3d, spatial-refine, relu-asym");
  }
  if (mode == "data-svd") {
    refined.residual = affine_residual(batch.ref_outputs, batch.ref_outputs, refined.M,
                                       refined.new_bias);
  }

  const std::string name = name_opt.empty() ? o.layer + "." + mode : name_opt;
  Container c = in;
  store_decomposed(c, name, refined.compressed, o.layer);
  save(c, o.out);

  json cost = cost_json(layer_cost(refined.compressed, o.height, o.width));
  report.update(cost);
  report["command"] = "dataopt";
  report["mode"] = mode;
  report["layer"] = o.layer;
  report["name"] = name;
  report["residual"] = refined.residual;
  report["residual_before"] = refined.residual_before;
  report["recon_error"] = kernel_distance(kernel, reconstruct(refined.compressed));
  report["batch_rows"] = batch.rows();
  report["underdetermined"] = batch.underdetermined();
  return report;
}

json run_prune(const Shared& o, const std::string& mode, const std::string& batch_name,
               std::size_t keep, double lambda_init, const std::string& name_opt) {
  const Container in = read_container(o.in);
  const Kernel4D kernel = entry_kernel(in.get(o.layer));
  PruneResult result;
  if (mode == "magnitude") {
    result = magnitude_prune(kernel, keep);
  } else if (mode == "lasso") {
    if (batch_name.empty()) throw InvalidArgument("prune --mode lasso requires --batch");
    const PatchBatch batch = load_batch(in, batch_name);
    const Eigen::MatrixXd x = patches_channel_major(batch.inputs, kernel.size(), kernel.in_channels());
    Eigen::MatrixXd y = batch.ref_outputs;
    const std::vector<double> bias = layer_bias(in, o.layer);
    for (std::size_t j = 0; j < bias.size(); ++j) y.col(static_cast<Eigen::Index>(j)).array() -= bias[j];
    result = channel_prune(kernel, x, y, keep, lambda_init);
  } else {
    throw InvalidArgument("--mode must be lasso or magnitude");
  }

  const std::string name = name_opt.empty() ? o.layer + ".pruned" : name_opt;
  Container c = in;
  Entry e = kernel_entry(name, result.refit_kernel);
  e.metadata["source"] = o.layer;
  e.metadata["kept_inputs"] = join(result.kept);
  c.put(std::move(e));
  save(c, o.out);

  const LayerDims before{kernel.in_channels(), kernel.out_channels(), kernel.size(), o.height,
                         o.width};
  const LayerDims after{result.kept.size(), kernel.out_channels(), kernel.size(), o.height,
                        o.width};
  json report;
  report["command"] = "prune";
  report["mode"] = mode;
  report["layer"] = o.layer;
  report["name"] = name;
  report["kept"] = result.kept;
  report["beta"] = result.beta;
  report["residual"] = result.residual;
  report["residual_before_refit"] = result.residual_before_refit;
  report["lambda"] = result.lambda;
  report["macs_before"] = mac_cost(before, Method::kOriginal).macs_original;
  report["macs_after"] = mac_cost(after, Method::kOriginal).macs_original;
  report["ratio"] = static_cast<double>(report["macs_after"].get<std::uint64_t>()) /
                    static_cast<double>(report["macs_before"].get<std::uint64_t>());
  return report;
}

json run_gates(const Shared& o, const std::string& kind, double lambda, std::size_t steps,
               double lr, double threshold, std::size_t samples, std::size_t informative,
               std::size_t noise) {
  ToyTrainOptions options;
  if (kind == "l0") {
    options.kind = GateKind::kHardConcrete;
  } else if (kind == "vib") {
    options.kind = GateKind::kVib;
  } else {
    throw InvalidArgument("--kind must be l0 or vib");
  }
  options.lambda_reg = lambda;
  options.steps = steps;
  options.lr = lr;
  options.seed = o.seed;
  const ToyTask task = make_toy_task(samples, informative, noise, o.seed);
  const ToyTrainResult trained = train_toy_gated(task, options);

  const std::size_t d = trained.gates.gates.size();
  std::vector<double> params, criteria;
  std::vector<std::size_t> open;
  for (std::size_t j = 0; j < d; ++j) {
    const Gate& g = trained.gates.gates[j];
    if (const auto* hc = std::get_if<HardConcreteGate>(&g)) {
      params.insert(params.end(), {hc->log_alpha, hc->beta});
    } else {
      const auto& vib = std::get<VibGate>(g);
      params.insert(params.end(), {vib.mu, vib.sigma});
    }
    criteria.push_back(gate_criterion(g));
    if (!(criteria.back() < threshold)) open.push_back(j);
  }

  Container c = load_or_empty(o.in);
  const std::map<std::string, std::string> meta{
      {"gate_kind", kind},
      {"lambda", json(lambda).dump()},
      {"seed", std::to_string(trained.seed)},
      {"draws", std::to_string(trained.draws)},
      {"columns", kind == "l0" ? "log_alpha,beta" : "mu,sigma"}};
  c.put(make_entry("gates/params", "gates", {d, 2}, params, meta));
  c.put(make_entry("gates/weights", "gates", {d}, trained.weights, meta));
  c.put(make_entry("gates/loss", "gates", {trained.loss_trace.size()}, trained.loss_trace, meta));

  json report;
  report["command"] = "gates";
  report["kind"] = kind;
  report["lambda"] = lambda;
  report["criteria"] = criteria;
  report["open"] = open;
  report["informative"] = task.informative;
  report["final_loss"] = trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back();
  report["seed"] = trained.seed;
  report["draws"] = trained.draws;

  if (!o.in.empty() && c.find(o.layer) != nullptr) {
    const Kernel4D kernel = entry_kernel(c.get(o.layer));
    const std::vector<double> bias = layer_bias(c, o.layer);
    const GatePruneResult pruned =
        prune_by_gates(trained.gates, kernel, bias, threshold, o.height, o.width);
    Entry e = kernel_entry(o.layer + ".gated", pruned.kernel);
    e.metadata["source"] = o.layer;
    e.metadata["kept_outputs"] = join(pruned.kept);
    c.put(std::move(e));
    report["layer"] = o.layer;
    report["kept"] = pruned.kept;
    report["macs_before"] = pruned.macs_before;
    report["macs_after"] = pruned.macs_after;
    report["ratio"] = static_cast<double>(pruned.macs_after) / static_cast<double>(pruned.macs_before);
  }
  save(c, o.out);
  return report;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContainerError(ContainerErrorCode::kIo, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ContainerError(ContainerErrorCode::kMalformed, path + ": " + e.what());
  }
}

json run_rank_select(const Shared& o, const std::string& strategy, double ratio,
                     const std::string& acc_path, const std::string& sv_path) {
  RankPlan plan;
  if (strategy == "equal-acc") {
    if (acc_path.empty()) throw InvalidArgument("--strategy equal-acc requires --acc-table");
    const json doc = read_json_file(acc_path);
    std::vector<AccTable> tables;
    try {
      for (const json& layer : doc.at("layers")) {
        AccTable t;
        t.p_orig = layer.at("p_orig").get<double>();
        t.macs_original = layer.at("macs_original").get<std::uint64_t>();
        for (const json& g : layer.at("grid")) {
          t.grid.push_back({g.at("ranks").get<RankVector>(), g.at("accuracy").get<double>(),
                            g.at("macs").get<std::uint64_t>()});
        }
        tables.push_back(std::move(t));
      }
    } catch (const json::exception& e) {
      throw ContainerError(ContainerErrorCode::kMalformed, acc_path + ": " + e.what());
    }
    plan = equal_acc_select(tables, ratio);
  } else if (strategy == "greedy-energy") {
    if (sv_path.empty()) throw InvalidArgument("--strategy greedy-energy requires --sv-table");
    const json doc = read_json_file(sv_path);
    std::vector<std::vector<double>> svs;
    std::vector<RankCost> costs;
    try {
      for (const json& layer : doc.at("layers")) {
        svs.push_back(layer.at("singular_values").get<std::vector<double>>());
        costs.push_back({layer.at("macs_original").get<std::uint64_t>(),
                         layer.at("macs_per_rank").get<std::uint64_t>()});
      }
    } catch (const json::exception& e) {
      throw ContainerError(ContainerErrorCode::kMalformed, sv_path + ": " + e.what());
    }
    plan = greedy_energy_select(svs, costs, ratio);
  } else {
    throw InvalidArgument("--strategy must be equal-acc or greedy-energy");
  }

  std::size_t width = 0;
  for (const auto& r : plan.ranks) width = std::max(width, r.size());
  std::vector<double> flat;
  for (const auto& r : plan.ranks)
    for (std::size_t i = 0; i < width; ++i) flat.push_back(i < r.size() ? static_cast<double>(r[i]) : 0.0);

  Container c = load_or_empty(o.in);
  c.put(make_entry("plan/ranks", "plan", {plan.ranks.size(), width}, flat,
                   {{"strategy", std::string(strategy_name(plan.strategy))},
                    {"tau", json(plan.tau).dump()},
                    {"alpha", json(ratio).dump()},
                    {"convention", plan.convention}}));
  save(c, o.out);

  json report;
  report["command"] = "rank-select";
  report["strategy"] = std::string(strategy_name(plan.strategy));
  report["ranks"] = plan.ranks;
  report["tau"] = plan.tau;
  report["macs_before"] = plan.macs_original;
  report["macs_after"] = plan.achieved_macs;
  report["ratio"] = plan.achieved_ratio;
  report["saved_fraction"] = 1.0 - plan.achieved_ratio;
  report["alpha"] = ratio;
  report["convention"] = plan.convention;
  if (plan.strategy == SelectStrategy::kGreedyEnergy) report["log_energy"] = plan.log_energy;
  return report;
}

}  // namespace

void store_decomposed(Container& container, const std::string& name,
                      const DecomposedLayer& layer, const std::string& source) {
  validate(layer);
  std::map<std::string, std::string> meta = layer.metadata;
  meta["layer"] = name;
  meta["source"] = source;
  meta["method"] = std::string(method_name(layer.method));
  meta["ranks"] = join(layer.ranks);
  meta["t"] = std::to_string(layer.t);
  meta["s"] = std::to_string(layer.s);
  meta["k"] = std::to_string(layer.k);
  meta["first_axis"] = layer.first_axis == Axis::kX ? "x" : "y";
  meta["factors"] = std::to_string(layer.factors.size());
  for (std::size_t i = 0; i < layer.factors.size(); ++i) {
    auto m = meta;
    m["index"] = std::to_string(i);
    container.put(make_entry(name + "/factor" + std::to_string(i), "factor",
                             layer.factors[i].shape(), layer.factors[i].data(), std::move(m)));
  }
  if (!layer.bias.empty()) {
    auto m = meta;
    m["role"] = "bias";
    container.put(make_entry(name + "/bias", "factor", {layer.bias.size()}, layer.bias, m));
  }
}

DecomposedLayer load_decomposed(const Container& container, const std::string& name) {
  const Entry& head = container.get(name + "/factor0");
  DecomposedLayer layer;
  layer.method = parse_method(head.metadata.at("method"));
  layer.ranks = split_sizes(head.metadata.at("ranks"), "ranks");
  layer.t = meta_size(head, "t");
  layer.s = meta_size(head, "s");
  layer.k = meta_size(head, "k");
  layer.first_axis = head.metadata.at("first_axis") == "y" ? Axis::kY : Axis::kX;
  layer.metadata = head.metadata;
  for (const char* key : {"layer", "method", "ranks", "t", "s", "k", "factors", "index"}) {
    layer.metadata.erase(key);
  }
  const std::size_t count = meta_size(head, "factors");
  for (std::size_t i = 0; i < count; ++i) {
    layer.factors.push_back(entry_tensor(container.get(name + "/factor" + std::to_string(i))));
  }
  if (const Entry* bias = container.find(name + "/bias")) layer.bias = entry_values(*bias);
  validate(layer);
  return layer;
}

void store_batch(Container& container, const std::string& name, const PatchBatch& batch) {
  const std::map<std::string, std::string> meta{{"k", std::to_string(batch.k)},
                                                {"s", std::to_string(batch.s)},
                                                {"t", std::to_string(batch.t)}};
  const auto put = [&](const std::string& part, const Eigen::MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    auto md = meta;
    md["part"] = part;
    container.put(make_entry(name + "/" + part, "patchbatch",
                             {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                             std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())),
                             std::move(md)));
  };
  put("inputs", batch.inputs);
  put("ref", batch.ref_outputs);
  put("cur", batch.cur_outputs);
}

PatchBatch load_batch(const Container& container, const std::string& name) {
  const auto get = [&](const std::string& part) {
    const Entry& e = container.get(name + "/" + part);
    if (e.shape.size() != 2) throw InvalidArgument("batch entry '" + e.name + "' must be 2-d");
    const std::vector<double> v = entry_values(e);
    return Eigen::MatrixXd(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                           Eigen::RowMajor>>(
        v.data(), static_cast<Eigen::Index>(e.shape[0]), static_cast<Eigen::Index>(e.shape[1])));
  };
  const Entry& head = container.get(name + "/inputs");
  PatchBatch batch;
  batch.k = meta_size(head, "k");
  batch.s = meta_size(head, "s");
  batch.t = meta_size(head, "t");
  batch.inputs = get("inputs");
  batch.ref_outputs = get("ref");
  batch.cur_outputs = get("cur");
  if (batch.ref_outputs.rows() != batch.inputs.rows() ||
      batch.cur_outputs.rows() != batch.inputs.rows()) {
    throw InvalidArgument("batch '" + name + "' has misaligned parts");
  }
  update_means(batch);
  return batch;
}

// First token that looks like a flag but is not an option of the selected
// subcommand (or of the top level when none is selected). Empty if none.
std::string first_unknown_flag(CLI::App& app, const std::vector<std::string>& args) {
  CLI::App* scope = &app;
  for (const std::string& token : args) {
    if (scope == &app) {
      if (CLI::App* sub = app.get_subcommand_no_throw(token)) {
        scope = sub;
        continue;
      }
    }
    if (token.size() < 2 || token[0] != '-' || std::isdigit(static_cast<unsigned char>(token[1])) ||
        token[1] == '.') {
      continue;
    }
    const std::string name = token.substr(0, token.find('='));
    if (scope->get_option_no_throw(name) == nullptr) return name;
  }
  return {};
}

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank and pruning compression of convolution layers", "convfact"};
  app.require_subcommand(1);
  Shared o;
  json report;

  const auto common = [&](CLI::App* sub, bool needs_in) {
    auto* in = sub->add_option("--in", o.in, "Input container manifest");
    if (needs_in) in->required();
    sub->add_option("--out", o.out, "Output container manifest");
    sub->add_option("--layer", o.layer, "Kernel entry name")->capture_default_str();
    sub->add_option("--height", o.height, "Output map height for MAC counts")->capture_default_str();
    sub->add_option("--width", o.width, "Output map width for MAC counts")->capture_default_str();
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  };

  std::size_t t = 6, s = 5, k = 3, images = 4, map_size = 6, per_image = 10;
  double prefix_noise = 0.1;
  std::string batch;
  auto* synth = app.add_subcommand("synth", "Write a random layer (and optionally a patch batch)");
  common(synth, false);
  synth->add_option("--t", t, "Output channels")->capture_default_str();
  synth->add_option("--s", s, "Input channels")->capture_default_str();
  synth->add_option("--k", k, "Kernel size")->capture_default_str();
  synth->add_option("--batch", batch, "Also sample a patch batch under this name");
  synth->add_option("--images", images, "Feature maps per batch")->capture_default_str();
  synth->add_option("--map-size", map_size, "Feature map height and width")->capture_default_str();
  synth->add_option("--per-image", per_image, "Patches per feature map")->capture_default_str();
  synth->add_option("--prefix-noise", prefix_noise, "Input perturbation of the compressed prefix")
      ->capture_default_str();

  std::string method, rank, name;
  double ratio = 0.0;
  auto* compress = app.add_subcommand("compress", "Decompose a layer");
  common(compress, true);
  compress->add_option("--method", method, "weight-svd|spatial-svd|cp|tucker|tt")->required();
  auto* rank_opt = compress->add_option("--rank", rank, "Rank list r[,r2[,r3]]");
  auto* ratio_opt = compress->add_option("--ratio", ratio, "Retained MAC fraction");
  rank_opt->excludes(ratio_opt);
  compress->add_option("--name", name, "Name of the decomposed layer");

  auto* recon = app.add_subcommand("reconstruct", "Rebuild a dense kernel from stored factors");
  common(recon, true);
  recon->add_option("--name", name, "Decomposed layer name")->required();

  auto* rep = app.add_subcommand("report", "MAC and parameter table of a container");
  common(rep, true);

  std::string mode;
  std::vector<double> lambdas;
  auto* dopt = app.add_subcommand("dataopt", "Data-optimized compression from a patch batch");
  common(dopt, true);
  dopt->add_option("--mode", mode, "data-svd|asym|asym3d|spatial-refine|relu-asym")->required();
  dopt->add_option("--batch", batch, "Patch batch name")->required();
  dopt->add_option("--rank", rank, "Rank (asym3d: r_s,r_d)")->required();
  dopt->add_option("--lambdas", lambdas, "relu-asym penalty schedule")->delimiter(',');
  dopt->add_option("--name", name, "Name of the compressed layer");

  std::size_t keep = 0;
  double lambda_init = 1e-4;
  std::string prune_mode = "lasso";
  auto* prune = app.add_subcommand("prune", "Input-channel pruning");
  common(prune, true);
  prune->add_option("--keep", keep, "Input channels to keep")->required();
  prune->add_option("--mode", prune_mode, "lasso|magnitude")->capture_default_str();
  prune->add_option("--batch", batch, "Patch batch name (lasso)");
  prune->add_option("--lambda-init", lambda_init, "Initial sparsity weight")->capture_default_str();
  prune->add_option("--name", name, "Name of the pruned kernel");

  std::string kind = "l0";
  double lambda = 0.5, lr = 0.1, threshold = 0.05;
  std::size_t steps = 3000, samples = 256, informative = 4, noise = 4;
  auto* gates = app.add_subcommand("gates", "Train gates on a toy task and prune by them");
  common(gates, false);
  gates->add_option("--kind", kind, "l0|vib")->capture_default_str();
  gates->add_option("--lambda", lambda, "Penalty weight")->capture_default_str();
  gates->add_option("--steps", steps, "Gradient steps")->capture_default_str();
  gates->add_option("--lr", lr, "Learning rate")->capture_default_str();
  gates->add_option("--threshold", threshold, "Pruning threshold")->capture_default_str();
  gates->add_option("--samples", samples, "Toy task samples")->capture_default_str();
  gates->add_option("--informative", informative, "Informative features")->capture_default_str();
  gates->add_option("--noise", noise, "Noise features")->capture_default_str();

  std::string strategy, acc_table, sv_table;
  auto* rs = app.add_subcommand("rank-select", "Whole-model rank allocation");
  common(rs, false);
  rs->add_option("--strategy", strategy, "equal-acc|greedy-energy")->required();
  rs->add_option("--ratio", ratio, "Retained MAC fraction")->required();
  auto* acc_opt = rs->add_option("--acc-table", acc_table, "Accuracy table JSON");
  auto* sv_opt = rs->add_option("--sv-table", sv_table, "Singular value table JSON");
  acc_opt->excludes(sv_opt);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const std::string unknown = first_unknown_flag(app, args);
    err << "error: " << (unknown.empty() ? std::string(e.what()) : "unknown option " + unknown)
        << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      if (o.out.empty()) throw InvalidArgument("synth requires --out");
      report = run_synth(o, t, s, k, batch, images, map_size, per_image, prefix_noise);
    } else if (compress->parsed()) {
      if (rank.empty() && ratio_opt->count() == 0) {
        throw InvalidArgument("compress requires exactly one of --rank or --ratio");
      }
      report = run_compress(o, method, rank, ratio, name);
    } else if (recon->parsed()) {
      report = run_reconstruct(o, name);
    } else if (rep->parsed()) {
      report = run_report(o);
    } else if (dopt->parsed()) {
      report = run_dataopt(o, mode, batch, rank, lambdas, name);
    } else if (prune->parsed()) {
      report = run_prune(o, prune_mode, batch, keep, lambda_init, name);
    } else if (gates->parsed()) {
      report = run_gates(o, kind, lambda, steps, lr, threshold, samples, informative, noise);
    } else if (rs->parsed()) {
      report = run_rank_select(o, strategy, ratio, acc_table, sv_table);
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContainerError& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  emit(out, report);
  return kExitOk;
}

}  // namespace convfact
