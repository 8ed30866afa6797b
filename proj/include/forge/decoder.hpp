#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>

#include "forge/nn.hpp"
#include "forge/sdf_label.hpp"
#include "forge/types.hpp"

namespace forge {

/// Decoder network shape. Defaults follow the production setup: eight
/// hidden layers of width 512 with batch norm and dropout 0.2, 256-D codes.
struct DecoderArch {
  int latent_dim = 256;
  int hidden_layers = 8;
  int hidden_width = 512;
  double dropout_p = 0.2;
};

template <typename S>
struct DecoderModelT {
  nn::Mlp<S> mlp;
  int latent_dim = 0;

  uint64_t weight_hash() const { return mlp.weight_hash(); }
};
using DecoderModel = DecoderModelT<float>;

template <typename S>
DecoderModelT<S> make_decoder(const DecoderArch& arch, uint64_t seed) {
  DecoderModelT<S> model;
  model.latent_dim = arch.latent_dim;
  model.mlp = nn::Mlp<S>::create(
      arch.latent_dim + 3,
      std::vector<int>(arch.hidden_layers, arch.hidden_width), 1, true,
      static_cast<S>(arch.dropout_p), seed);
  return model;
}

/// One latent code per design.
struct LatentTable {
  std::vector<std::string> design_ids;
  Eigen::MatrixXd codes;  // n x latent_dim

  int dim() const { return static_cast<int>(codes.cols()); }
  int count() const { return static_cast<int>(codes.rows()); }
  std::optional<int> find(const std::string& id) const {
    for (int i = 0; i < count(); ++i)
      if (design_ids[i] == id) return i;
    return std::nullopt;
  }
};

void save_latents(const LatentTable& table, const std::filesystem::path& path);
LatentTable load_latents(const std::filesystem::path& path);

struct TrainConfig {
  double lr0 = 1e-3;
  int halve_every = 500;
  double lambda_z = 1e-4;
  double delta = 0.1;
  int epochs = 200;
  int batch_size = 4096;
  double latent_init_std = 0.01;
  uint64_t seed = 0;

  void validate() const {
    if (!(lr0 > 0) || halve_every <= 0 || !(lambda_z >= 0) || !(delta > 0) ||
        epochs < 0 || batch_size <= 0 || !(latent_init_std > 0))
      throw ValidationError("TrainConfig: non-positive field");
  }
};

/// Single-query decode: f_theta(z, x).
template <typename S>
S decode_one(const DecoderModelT<S>& model, const VecX<S>& z, const Vec3& x,
             nn::Mode mode = nn::Mode::kEval, Rng* rng = nullptr) {
  if (z.size() != model.latent_dim)
    throw Error("decode_one: latent dimension mismatch");
  MatX<S> in(1, model.latent_dim + 3);
  in.row(0).head(model.latent_dim) = z.transpose();
  in(0, model.latent_dim + 0) = static_cast<S>(x.x());
  in(0, model.latent_dim + 1) = static_cast<S>(x.y());
  in(0, model.latent_dim + 2) = static_cast<S>(x.z());
  return model.mlp.forward(in, mode, rng)(0, 0);
}

/// Batched decode of many query points against one code.
template <typename S>
VecX<S> decode_batch(const DecoderModelT<S>& model, const VecX<S>& z,
                     const std::vector<Vec3>& xs) {
  MatX<S> in(static_cast<Eigen::Index>(xs.size()), model.latent_dim + 3);
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    in.row(r).head(model.latent_dim) = z.transpose();
    in(r, model.latent_dim + 0) = static_cast<S>(xs[r].x());
    in(r, model.latent_dim + 1) = static_cast<S>(xs[r].y());
    in(r, model.latent_dim + 2) = static_cast<S>(xs[r].z());
  }
  return model.mlp.forward(in, nn::Mode::kEval);
}

/// Joint clamped-L1 + latent prior loss over a mixed batch, with optional
/// gradients. `design_of_row[r]` indexes rows of `codes`; code gradients
/// come back per distinct design in `touched`.
template <typename S>
struct JointGradients {
  nn::MlpGrad<S> theta;
  std::vector<int> touched;   // distinct code rows in the batch
  MatX<S> code_grads;         // touched.size() x latent_dim
};

template <typename S>
S joint_loss(DecoderModelT<S>& model, const MatX<S>& codes,
             const std::vector<int>& design_of_row, const MatX<S>& queries,
             const VecX<S>& targets, S lambda_z, S delta, nn::Mode mode,
             Rng* rng, bool update_running, JointGradients<S>* grads) {
  const Eigen::Index batch = queries.rows();
  if (batch == 0) throw Error("joint_loss: empty batch");
  const int k = model.latent_dim;

  MatX<S> input(batch, k + 3);
  for (Eigen::Index r = 0; r < batch; ++r)
    input.row(r).head(k) = codes.row(design_of_row[r]);
  input.rightCols(3) = queries;

  typename nn::Mlp<S>::Cache cache;
  const MatX<S> raw = model.mlp.forward(input, mode, rng, &cache, update_running);

  VecX<S> pred = raw.col(0).cwiseMax(-delta).cwiseMin(delta);
  VecX<S> residual = pred - targets;
  S data_term = residual.array().abs().mean();

  std::vector<int> touched;
  for (int r : design_of_row)
    if (std::find(touched.begin(), touched.end(), r) == touched.end())
      touched.push_back(r);
  S prior = 0;
  for (int r : touched) prior += codes.row(r).squaredNorm();
  prior *= lambda_z / static_cast<S>(touched.size());

  if (grads) {
    MatX<S> d_out(batch, 1);
    for (Eigen::Index r = 0; r < batch; ++r) {
      const S inside = std::abs(raw(r, 0)) < delta ? S(1) : S(0);
      const S sgn = residual[r] > 0 ? S(1) : (residual[r] < 0 ? S(-1) : S(0));
      d_out(r, 0) = sgn * inside / static_cast<S>(batch);
    }
    grads->theta = model.mlp.make_grad();
    const MatX<S> d_input = model.mlp.backward(cache, d_out, grads->theta);

    grads->touched = touched;
    grads->code_grads = MatX<S>::Zero(touched.size(), k);
    std::vector<int> slot(codes.rows(), -1);
    for (size_t i = 0; i < touched.size(); ++i) slot[touched[i]] = static_cast<int>(i);
    for (Eigen::Index r = 0; r < batch; ++r)
      grads->code_grads.row(slot[design_of_row[r]]) += d_input.row(r).head(k);
    for (size_t i = 0; i < touched.size(); ++i)
      grads->code_grads.row(i) +=
          S(2) * lambda_z / static_cast<S>(touched.size()) * codes.row(touched[i]);
  }
  return data_term + prior;
}

template <typename S>
struct TrainResult {
  DecoderModelT<S> model;
  LatentTable latents;
  std::vector<double> loss_curve;  // one entry per epoch
};

struct TrainIo {
  std::filesystem::path out_dir;
  int checkpoint_every = 0;  // 0: final only
};

template <typename S>
void save_checkpoint(const DecoderModelT<S>& model, const TrainConfig& cfg,
                     int epoch, const std::vector<double>& loss_curve,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
  DecoderModel model;
  TrainConfig cfg;
  int epoch = 0;
  std::vector<double> loss_curve;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Auto-decoder training: jointly optimizes decoder weights and one code
/// per design with Adam under the halving step schedule. Mixed batches are
/// drawn uniformly over all (design, sample) pairs.
template <typename S>
TrainResult<S> train(const std::vector<SdfSampleSet>& dataset,
                     const DecoderArch& arch, const TrainConfig& cfg,
                     const TrainIo* io = nullptr) {
  cfg.validate();
  if (dataset.empty()) throw Error("train: empty dataset");

  TrainResult<S> result;
  result.model = make_decoder<S>(arch, substream_seed(cfg.seed, 1));
  const int n_designs = static_cast<int>(dataset.size());
  const int k = arch.latent_dim;

  MatX<S> codes(n_designs, k);
  {
    Rng rng(substream_seed(cfg.seed, 2));
    for (int i = 0; i < n_designs; ++i)
      for (int d = 0; d < k; ++d)
        codes(i, d) = static_cast<S>(rng.normal(0.0, cfg.latent_init_std));
  }

  std::vector<std::pair<int, int>> slots;  // (design, sample)
  for (int i = 0; i < n_designs; ++i)
    for (size_t j = 0; j < dataset[i].size(); ++j)
      slots.emplace_back(i, static_cast<int>(j));

  nn::AdamMlp<S> opt_theta(result.model.mlp, static_cast<S>(cfg.lr0), cfg.halve_every);
  nn::AdamRows<S> opt_codes(n_designs, k);
  Rng dropout_rng(substream_seed(cfg.seed, 3));
  Rng shuffle_rng(substream_seed(cfg.seed, 4));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(slots.begin(), slots.end(), shuffle_rng.engine());
    double epoch_loss = 0;
    int n_batches = 0;
    for (size_t start = 0; start < slots.size(); start += cfg.batch_size) {
      const size_t count = std::min<size_t>(cfg.batch_size, slots.size() - start);
      MatX<S> queries(count, 3);
      VecX<S> targets(count);
      std::vector<int> design_of_row(count);
      for (size_t r = 0; r < count; ++r) {
        const auto [di, si] = slots[start + r];
        design_of_row[r] = di;
        queries.row(r) = dataset[di].points[si].template cast<S>().transpose();
        targets[r] = static_cast<S>(dataset[di].sdf[si]);
      }

      JointGradients<S> grads;
      const S loss = joint_loss<S>(result.model, codes, design_of_row, queries,
                                   targets, static_cast<S>(cfg.lambda_z),
                                   static_cast<S>(cfg.delta), nn::Mode::kTrain,
                                   &dropout_rng, true, &grads);
      if (!std::isfinite(static_cast<double>(loss)))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch));

      const S lr = opt_theta.lr();
      opt_theta.step(result.model.mlp, grads.theta);
      opt_codes.step(codes, grads.touched, grads.code_grads, lr);
      epoch_loss += static_cast<double>(loss);
      ++n_batches;
    }
    result.loss_curve.push_back(epoch_loss / std::max(1, n_batches));
    if (io && io->checkpoint_every > 0 && (epoch + 1) % io->checkpoint_every == 0)
      save_checkpoint(result.model, cfg, epoch + 1, result.loss_curve, io->out_dir);
  }

  result.latents.design_ids.reserve(n_designs);
  for (const auto& set : dataset) result.latents.design_ids.push_back(set.design_id);
  result.latents.codes = codes.template cast<double>();
  if (io) save_checkpoint(result.model, cfg, cfg.epochs, result.loss_curve, io->out_dir);
  return result;
}

struct InferOptions {
  int steps = 1000;
  int batch_size = 2048;
};

template <typename S>
struct InferResult {
  VecX<S> code;
  double best_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
};

/// Frozen-decoder latent inference: only the code moves, initialized at
/// zero, Adam with the training step schedule. If the loss keeps rising at
/// the schedule floor the best code seen so far is returned with a warning.
template <typename S>
InferResult<S> infer_latent(const DecoderModelT<S>& model,
                            const SdfSampleSet& samples, const TrainConfig& cfg,
                            const InferOptions& opts = {}) {
  cfg.validate();
  if (samples.size() == 0) throw Error("infer_latent: empty sample set");
  const int k = model.latent_dim;

  // The decoder itself must stay untouched; work on a shallow copy whose
  // weights are shared semantics-wise (Mlp is a value type, so copy).
  DecoderModelT<S> frozen = model;

  MatX<S> codes = MatX<S>::Zero(1, k);
  nn::AdamRows<S> opt(1, k);
  Rng shuffle_rng(substream_seed(cfg.seed, 5));

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  InferResult<S> out;
  out.code = VecX<S>::Zero(k);
  const S floor_lr =
      nn::scheduled_lr(static_cast<S>(cfg.lr0), cfg.halve_every, opts.steps - 1);
  double prev_loss = std::numeric_limits<double>::infinity();
  int rising = 0;

  size_t cursor = samples.size();
  for (int step = 0; step < opts.steps; ++step) {
    const size_t batch = std::min<size_t>(opts.batch_size, samples.size());
    MatX<S> queries(batch, 3);
    VecX<S> targets(batch);
    std::vector<int> design_of_row(batch, 0);
    for (size_t r = 0; r < batch; ++r) {
      if (cursor >= samples.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        cursor = 0;
      }
      const int si = order[cursor++];
      queries.row(r) = samples.points[si].template cast<S>().transpose();
      targets[r] = static_cast<S>(samples.sdf[si]);
    }

    JointGradients<S> grads;
    const S loss = joint_loss<S>(frozen, codes, design_of_row, queries, targets,
                                 static_cast<S>(cfg.lambda_z),
                                 static_cast<S>(cfg.delta), nn::Mode::kEval,
                                 nullptr, false, &grads);
    const S lr = nn::scheduled_lr(static_cast<S>(cfg.lr0), cfg.halve_every,
                                  static_cast<int64_t>(step));
    opt.step(codes, grads.touched, grads.code_grads, lr);

    const double l = static_cast<double>(loss);
    if (l < out.best_loss) {
      out.best_loss = l;
      out.code = codes.row(0).transpose();
    }
    if (l > prev_loss && lr == floor_lr) {
      if (++rising >= 10) {
        out.diverged = true;
        return out;
      }
    } else {
      rising = 0;
    }
    prev_loss = l;
  }
  // Final candidate: evaluate the last code on the full set once.
  {
    MatX<S> queries(samples.size(), 3);
    VecX<S> targets(samples.size());
    std::vector<int> design_of_row(samples.size(), 0);
    for (size_t r = 0; r < samples.size(); ++r) {
      queries.row(r) = samples.points[r].template cast<S>().transpose();
      targets[r] = static_cast<S>(samples.sdf[r]);
    }
    const S full = joint_loss<S>(frozen, codes, design_of_row, queries, targets,
                                 static_cast<S>(cfg.lambda_z),
                                 static_cast<S>(cfg.delta), nn::Mode::kEval,
                                 nullptr, false, nullptr);
    if (static_cast<double>(full) < out.best_loss) {
      out.best_loss = static_cast<double>(full);
      out.code = codes.row(0).transpose();
    }
  }
  return out;
}

}  // namespace forge
