#include "decokan/model.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace decokan {

AblationMode ablation_from_string(const std::string& s) {
  if (s == "full_kan") return AblationMode::full_kan;
  if (s == "temporal_kan_only") return AblationMode::temporal_kan_only;
  if (s == "feature_kan_only") return AblationMode::feature_kan_only;
  if (s == "mlp_only") return AblationMode::mlp_only;
  throw config_error("unknown ablation mode '" + s + "'");
}

std::string ablation_to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full_kan: return "full_kan";
    case AblationMode::temporal_kan_only: return "temporal_kan_only";
    case AblationMode::feature_kan_only: return "feature_kan_only";
    case AblationMode::mlp_only: return "mlp_only";
  }
  throw config_error("invalid ablation mode value");
}

namespace {

StackKinds kinds_for(AblationMode mode) {
  switch (mode) {
    case AblationMode::full_kan: return {StackKind::kan, StackKind::kan};
    case AblationMode::temporal_kan_only: return {StackKind::kan, StackKind::mlp};
    case AblationMode::feature_kan_only: return {StackKind::mlp, StackKind::kan};
    case AblationMode::mlp_only: return {StackKind::mlp, StackKind::mlp};
  }
  throw config_error("invalid ablation mode value");
}

// L_i / T_i ladders: index 0 is level 1 (finest), back() is level m.
std::vector<Dim> length_ladder(Dim len, const WaveletFilterBank& bank, Dim m) {
  std::vector<Dim> out;
  Dim cur = len;
  for (Dim i = 0; i < m; ++i) {
    cur = coefficient_length(cur, bank);
    out.push_back(cur);
  }
  return out;
}

std::string branch_name(const DecoKanModel& model, std::size_t index) {
  if (index == 0) return "approx";
  const Dim lev = model.config.level - static_cast<Dim>(index) + 1;
  return "detail" + std::to_string(lev);
}

}  // namespace

DecoKanModel build_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.lookback < 1 || config.horizon < 1 || config.channels < 1)
    throw config_error("model config: lookback, horizon, channels must be >= 1");
  if (config.level < 1) throw config_error("model config: level >= 1 required");
  DecoKanModel model;
  model.config = config;
  model.bank = WaveletFilterBank::make(config.wavelet);
  model.grid = SplineGrid::make(config.grid_size, config.order);

  const auto L_ladder = length_ladder(config.lookback, model.bank, config.level);
  const auto T_ladder = length_ladder(config.horizon, model.bank, config.level);
  const Dim F = model.bank.filter_length();
  {
    Dim cur = config.lookback;
    for (Dim lev = 0; lev < config.level; ++lev) {
      if (cur < F)
        throw config_error("model config: lookback " +
                           std::to_string(config.lookback) +
                           " too short for " + std::to_string(config.level) +
                           " levels of " + config.wavelet);
      cur = coefficient_length(cur, model.bank);
    }
  }

  // Branch order: approx (level m), then details m..1.
  model.branch_series_len.push_back(L_ladder.back());
  model.branch_horizon.push_back(T_ladder.back());
  for (Dim lev = config.level; lev >= 1; --lev) {
    model.branch_series_len.push_back(L_ladder[static_cast<std::size_t>(lev - 1)]);
    model.branch_horizon.push_back(T_ladder[static_cast<std::size_t>(lev - 1)]);
  }

  std::mt19937_64 rng(seed);
  const StackKinds kinds = kinds_for(config.ablation);
  const PatchConfig patch_cfg{config.patch, config.stride};
  for (std::size_t b = 0; b < model.branch_series_len.size(); ++b) {
    BranchDims dims;
    dims.series_len = model.branch_series_len[b];
    dims.horizon = model.branch_horizon[b];
    dims.embed_dim = config.embed_dim;
    dims.tfactor = config.tfactor;
    dims.dfactor = config.dfactor;
    model.branches.push_back(
        init_branch(dims, patch_cfg, model.grid, config.dropout, kinds, rng));
  }
  return model;
}

Tensor forward(const DecoKanModel& model, const Tensor& x, EvalContext& ctx) {
  const ModelConfig& cfg = model.config;
  if (x.rank() != 2 || x.dim(0) != cfg.lookback || x.dim(1) != cfg.channels)
    throw shape_error("forward: expected input (" +
                      std::to_string(cfg.lookback) + ", " +
                      std::to_string(cfg.channels) + "), got " +
                      shape_str(x.shape()));
  auto [xn, boundary] = revin_norm(x, 1);
  Tensor xt = permute(xn, {1, 0});  // C x L
  CoefficientSet set = dwt_multilevel(xt, model.bank, cfg.level);

  const PatchConfig patch_cfg{cfg.patch, cfg.stride};
  CoefficientSet pred;
  pred.level = set.level;
  pred.approx =
      branch_forward(set.approx, model.branches[0], patch_cfg, ctx).first;
  for (std::size_t i = 0; i < set.details.size(); ++i)
    pred.details.push_back(
        branch_forward(set.details[i], model.branches[i + 1], patch_cfg, ctx)
            .first);

  Tensor y = idwt_multilevel(pred, model.bank, cfg.horizon);  // C x T
  Tensor yt = permute(y, {1, 0});                             // T x C
  return revin_denorm(yt, boundary, 1);
}

Tensor total_loss(const Tensor& pred, const Tensor& truth,
                  const DecoKanModel& model, double gamma) {
  if (pred.shape() != truth.shape())
    throw shape_error("total_loss: prediction and truth shapes differ");
  Tensor loss = mean_all(square(sub(pred, truth)));
  if (gamma == 0.0) return loss;
  Tensor reg;
  for (const KanLayerParams* layer : kan_layers(model)) {
    Tensor r = regularization_loss(*layer);
    reg = reg.defined() ? add(reg, r) : r;
  }
  if (!reg.defined()) return loss;
  return add(loss, mul_scalar(reg, gamma));
}

std::vector<NamedParam> model_parameters(const DecoKanModel& model) {
  std::vector<NamedParam> out;
  for (std::size_t b = 0; b < model.branches.size(); ++b)
    collect_params(model.branches[b], "branch." + branch_name(model, b), out);
  return out;
}

Dim parameter_count(const DecoKanModel& model) {
  Dim n = 0;
  for (const auto& np : model_parameters(model)) n += np.tensor.numel();
  return n;
}

namespace {

template <class Model, class Layer>
std::vector<Layer*> kan_layers_impl(Model& model) {
  std::vector<Layer*> out;
  for (auto& branch : model.branches)
    for (auto* mixer : {&branch.mixer1, &branch.mixer2})
      for (auto* stack : {&mixer->temporal, &mixer->feature})
        if (stack->kind == StackKind::kan)
          for (auto& layer : stack->kan.layers) out.push_back(&layer);
  return out;
}

}  // namespace

std::vector<KanLayerParams*> kan_layers(DecoKanModel& model) {
  return kan_layers_impl<DecoKanModel, KanLayerParams>(model);
}

std::vector<const KanLayerParams*> kan_layers(const DecoKanModel& model) {
  return kan_layers_impl<const DecoKanModel, const KanLayerParams>(model);
}

std::vector<KanLayerRef> kan_layer_refs(const DecoKanModel& model) {
  std::vector<KanLayerRef> out;
  std::size_t cursor = 0;
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    const auto& branch = model.branches[b];
    int mixer_no = 1;
    for (const auto* mixer : {&branch.mixer1, &branch.mixer2}) {
      for (const bool temporal : {true, false}) {
        const MixStack& stack = temporal ? mixer->temporal : mixer->feature;
        if (stack.kind != StackKind::kan) continue;
        for (std::size_t l = 0; l < stack.kan.layers.size(); ++l)
          out.push_back({cursor++, b, mixer_no, temporal, static_cast<int>(l)});
      }
      ++mixer_no;
    }
  }
  return out;
}

std::string branch_label(const DecoKanModel& model, std::size_t branch_index) {
  return branch_name(model, branch_index);
}

std::string kan_layer_label(const DecoKanModel& model, std::size_t index) {
  const auto refs = kan_layer_refs(model);
  if (index >= refs.size())
    throw contract_error("kan_layer_label: index out of range");
  const KanLayerRef& r = refs[index];
  return "branch " + branch_name(model, r.branch_index) + " / mixer " +
         std::to_string(r.mixer) + " / " +
         (r.temporal ? "temporal" : "feature") + " / layer " +
         std::to_string(r.stack_layer);
}

void ensure_compatible(const ModelConfig& expected, const ModelConfig& actual) {
  auto fail = [](const std::string& what) {
    throw config_error("checkpoint/config mismatch: " + what);
  };
  if (expected.channels != actual.channels) fail("channel count");
  if (expected.lookback != actual.lookback) fail("lookback");
  if (expected.horizon != actual.horizon) fail("horizon");
  if (expected.wavelet != actual.wavelet) fail("wavelet");
  if (expected.level != actual.level) fail("level");
}

// ---- checkpoint I/O ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'K', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw io_error("corrupt checkpoint: unexpected end of file");
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw io_error("corrupt checkpoint: unexpected end of file");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> config_to_kv(const ModelConfig& c) {
  return {
      {"config.lookback", std::to_string(c.lookback)},
      {"config.horizon", std::to_string(c.horizon)},
      {"config.channels", std::to_string(c.channels)},
      {"config.wavelet", c.wavelet},
      {"config.level", std::to_string(c.level)},
      {"config.patch", std::to_string(c.patch)},
      {"config.stride", std::to_string(c.stride)},
      {"config.embed_dim", std::to_string(c.embed_dim)},
      {"config.tfactor", std::to_string(c.tfactor)},
      {"config.dfactor", std::to_string(c.dfactor)},
      {"config.dropout", format_double(c.dropout)},
      {"config.grid_size", std::to_string(c.grid_size)},
      {"config.order", std::to_string(c.order)},
      {"config.ablation", ablation_to_string(c.ablation)},
  };
}

ModelConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto want = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw io_error("corrupt checkpoint: missing header key '" + key + "'");
    return it->second;
  };
  c.lookback = std::stoll(want("config.lookback"));
  c.horizon = std::stoll(want("config.horizon"));
  c.channels = std::stoll(want("config.channels"));
  c.wavelet = want("config.wavelet");
  c.level = std::stoll(want("config.level"));
  c.patch = std::stoll(want("config.patch"));
  c.stride = std::stoll(want("config.stride"));
  c.embed_dim = std::stoll(want("config.embed_dim"));
  c.tfactor = std::stoll(want("config.tfactor"));
  c.dfactor = std::stoll(want("config.dfactor"));
  c.dropout = std::stod(want("config.dropout"));
  c.grid_size = std::stoll(want("config.grid_size"));
  c.order = std::stoll(want("config.order"));
  c.ablation = ablation_from_string(want("config.ablation"));
  return c;
}

}  // namespace

void save_checkpoint(const DecoKanModel& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kVersion);

  std::ostringstream header;
  for (const auto& [k, v] : config_to_kv(model.config)) header << k << '=' << v << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      throw contract_error("checkpoint metadata must be single-line");
    header << "meta." << k << '=' << v << '\n';
  }
  const std::string htext = header.str();
  put_u64(os, htext.size());
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  const auto params = model_parameters(model);
  put_u64(os, params.size());
  for (const auto& np : params) {
    put_u32(os, static_cast<std::uint32_t>(np.name.size()));
    os.write(np.name.data(), static_cast<std::streamsize>(np.name.size()));
    put_u32(os, static_cast<std::uint32_t>(np.tensor.rank()));
    for (Dim d : np.tensor.shape()) {
      std::int64_t v = d;
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    const auto vals = np.tensor.values();
    os.write(reinterpret_cast<const char*>(vals.data()),
             static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }
  os.write(kMagic, sizeof kMagic);  // trailing sentinel
  if (!os) throw io_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 8) != 0)
    throw io_error("corrupt checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw io_error("checkpoint version mismatch: file has " +
                   std::to_string(version) + ", expected " +
                   std::to_string(kVersion));
  const std::uint64_t hlen = get_u64(is);
  std::string htext(hlen, '\0');
  if (!is.read(htext.data(), static_cast<std::streamsize>(hlen)))
    throw io_error("corrupt checkpoint: truncated header");

  std::map<std::string, std::string> kv;
  std::istringstream hs(htext);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw io_error("corrupt checkpoint: malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  Checkpoint ckpt;
  ckpt.model = build_model(config_from_kv(kv), /*seed=*/0);
  for (const auto& [k, v] : kv)
    if (k.rfind("meta.", 0) == 0) ckpt.metadata[k.substr(5)] = v;

  auto params = model_parameters(ckpt.model);
  const std::uint64_t count = get_u64(is);
  if (count != params.size())
    throw io_error("corrupt checkpoint: parameter count mismatch");
  for (auto& np : params) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw io_error("corrupt checkpoint: truncated parameter name");
    if (name != np.name)
      throw io_error("corrupt checkpoint: parameter '" + name +
                     "' does not match expected '" + np.name + "'");
    const std::uint32_t rank = get_u32(is);
    Shape shape(rank);
    for (auto& d : shape) {
      std::int64_t v = 0;
      if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw io_error("corrupt checkpoint: truncated shape");
      d = v;
    }
    if (shape != np.tensor.shape())
      throw io_error("corrupt checkpoint: shape mismatch for '" + name + "'");
    auto vals = np.tensor.mutable_values();
    if (!is.read(reinterpret_cast<char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double))))
      throw io_error("corrupt checkpoint: truncated parameter data");
  }
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 8) != 0)
    throw io_error("corrupt checkpoint: missing end sentinel");
  return ckpt;
}

}  // namespace decokan
