#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "forge/decoder.hpp"

namespace forge {
namespace {
using json = nlohmann::ordered_json;

json cfg_to_json(const TrainConfig& cfg) {
  return {{"lr0", cfg.lr0},
          {"halve_every", cfg.halve_every},
          {"lambda_z", cfg.lambda_z},
          {"delta", cfg.delta},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"latent_init_std", cfg.latent_init_std},
          {"seed", cfg.seed}};
}

TrainConfig cfg_from_json(const json& j) {
  TrainConfig cfg;
  cfg.lr0 = j.at("lr0").get<double>();
  cfg.halve_every = j.at("halve_every").get<int>();
  cfg.lambda_z = j.at("lambda_z").get<double>();
  cfg.delta = j.at("delta").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.latent_init_std = j.at("latent_init_std").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

}  // namespace

void save_latents(const LatentTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_latents: cannot open " + path.string());
  out << "design_id";
  for (int d = 0; d < table.dim(); ++d) out << ",z" << d;
  out << "\n";
  char num[40];
  for (int i = 0; i < table.count(); ++i) {
    out << table.design_ids[i];
    for (int d = 0; d < table.dim(); ++d) {
      std::snprintf(num, sizeof(num), ",%.12g", table.codes(i, d));
      out << num;
    }
    out << "\n";
  }
}

LatentTable load_latents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_latents: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("load_latents: empty file");
  int dim = 0;
  for (char c : line) dim += c == ',';

  LatentTable table;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t pos = line.find(',');
    if (pos == std::string::npos) throw Error("load_latents: bad row");
    table.design_ids.push_back(line.substr(0, pos));
    const char* cur = line.c_str() + pos;
    for (int d = 0; d < dim; ++d) {
      char* end = nullptr;
      values.push_back(std::strtod(cur + 1, &end));
      cur = end;
    }
  }
  table.codes.resize(static_cast<Eigen::Index>(table.design_ids.size()), dim);
  for (int i = 0; i < table.count(); ++i)
    for (int d = 0; d < dim; ++d) table.codes(i, d) = values[i * dim + d];
  return table;
}

template <typename S>
void save_checkpoint(const DecoderModelT<S>& model, const TrainConfig& cfg,
                     int epoch, const std::vector<double>& loss_curve,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["schema"] = 1;
  const auto& mlp = model.mlp;
  manifest["arch"] = {
      {"latent_dim", model.latent_dim},
      {"hidden_layers", static_cast<int>(mlp.layer_count()) - 1},
      {"hidden_width", mlp.layer(0).out_dim()},
      {"dropout_p", static_cast<double>(mlp.layer(0).dropout_p)}};
  manifest["cfg"] = cfg_to_json(cfg);
  manifest["epoch"] = epoch;
  manifest["loss_curve_csv"] = "loss_curve.csv";
  manifest["weights"] = "decoder.f32";

  std::ofstream blob(dir / "decoder.f32", std::ios::binary);
  if (!blob) throw Error("save_checkpoint: cannot open weight blob");
  json tensors = json::array();
  size_t offset = 0;
  std::vector<float> scratch;
  mlp.visit_tensors([&](const std::string& name, const S* data, Eigen::Index r,
                        Eigen::Index c, bool trainable) {
    const size_t n = static_cast<size_t>(r * c);
    scratch.resize(n);
    for (size_t i = 0; i < n; ++i) scratch[i] = static_cast<float>(data[i]);
    blob.write(reinterpret_cast<const char*>(scratch.data()), n * sizeof(float));
    tensors.push_back({{"name", name},
                       {"rows", r},
                       {"cols", c},
                       {"offset", offset},
                       {"trainable", trainable}});
    offset += n;
  });
  manifest["tensors"] = std::move(tensors);
  if (!blob) throw Error("save_checkpoint: blob write failed");

  std::ofstream meta(dir / "decoder.json");
  if (!meta) throw Error("save_checkpoint: cannot open manifest");
  meta << manifest.dump(2) << "\n";

  std::ofstream curve(dir / "loss_curve.csv");
  curve << "epoch,loss\n";
  char rowbuf[48];
  for (size_t e = 0; e < loss_curve.size(); ++e) {
    std::snprintf(rowbuf, sizeof(rowbuf), "%zu,%.12g\n", e + 1, loss_curve[e]);
    curve << rowbuf;
  }
}

template void save_checkpoint<float>(const DecoderModelT<float>&,
                                     const TrainConfig&, int,
                                     const std::vector<double>&,
                                     const std::filesystem::path&);
template void save_checkpoint<double>(const DecoderModelT<double>&,
                                      const TrainConfig&, int,
                                      const std::vector<double>&,
                                      const std::filesystem::path&);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "decoder.json");
  if (!meta) throw Error("load_checkpoint: missing manifest in " + dir.string());
  json manifest = json::parse(meta);

  DecoderArch arch;
  arch.latent_dim = manifest.at("arch").at("latent_dim").get<int>();
  arch.hidden_layers = manifest.at("arch").at("hidden_layers").get<int>();
  arch.hidden_width = manifest.at("arch").at("hidden_width").get<int>();
  arch.dropout_p = manifest.at("arch").at("dropout_p").get<double>();

  LoadedCheckpoint out;
  out.model = make_decoder<float>(arch, 0);
  out.cfg = cfg_from_json(manifest.at("cfg"));
  out.epoch = manifest.at("epoch").get<int>();

  std::ifstream blob(dir / manifest.at("weights").get<std::string>(),
                     std::ios::binary);
  if (!blob) throw Error("load_checkpoint: missing weight blob");
  std::unordered_map<std::string, const json*> by_name;
  for (const auto& t : manifest.at("tensors"))
    by_name[t.at("name").get<std::string>()] = &t;

  out.model.mlp.visit_tensors([&](const std::string& name, float* data,
                                  Eigen::Index r, Eigen::Index c, bool) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("load_checkpoint: missing tensor " + name);
    const json& t = *it->second;
    if (t.at("rows").get<Eigen::Index>() != r || t.at("cols").get<Eigen::Index>() != c)
      throw Error("load_checkpoint: shape mismatch for " + name);
    blob.seekg(static_cast<std::streamoff>(t.at("offset").get<size_t>() * sizeof(float)));
    blob.read(reinterpret_cast<char*>(data), r * c * sizeof(float));
    if (!blob) throw Error("load_checkpoint: truncated blob at " + name);
  });

  std::ifstream curve(dir / manifest.at("loss_curve_csv").get<std::string>());
  if (curve) {
    std::string line;
    std::getline(curve, line);  // header
    while (std::getline(curve, line)) {
      const size_t pos = line.find(',');
      if (pos != std::string::npos)
        out.loss_curve.push_back(std::strtod(line.c_str() + pos + 1, nullptr));
    }
  }
  return out;
}

}  // namespace forge
