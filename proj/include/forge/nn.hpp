#pragma once

#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <vector>

#include "forge/types.hpp"

namespace forge::nn {

enum class Mode { kTrain, kEval };

/// Affine layer with optional batch normalization, ReLU and dropout,
/// applied in that order. The output layer of a network is affine only.
template <typename S>
struct Dense {
  MatX<S> W;  // out x in
  VecX<S> b;
  bool batch_norm = false;
  VecX<S> gamma, beta, running_mean, running_var;
  bool relu = false;
  S dropout_p = 0;

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }
};

template <typename S>
struct MlpGrad {
  std::vector<MatX<S>> W;
  std::vector<VecX<S>> b, gamma, beta;

  void set_zero() {
    for (auto& g : W) g.setZero();
    for (auto& g : b) g.setZero();
    for (auto& g : gamma) g.setZero();
    for (auto& g : beta) g.setZero();
  }
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Multilayer perceptron with hand-rolled reverse-mode gradients.
/// Batches are row-major: one sample per row.
template <typename S>
class Mlp {
 public:
  Mlp() = default;

  static Mlp create(int input_dim, const std::vector<int>& hidden, int out_dim,
                    bool batch_norm, S dropout_p, uint64_t seed) {
    Mlp net;
    Rng rng(seed);
    int in = input_dim;
    for (int width : hidden) {
      net.layers_.push_back(make_layer(in, width, batch_norm, true, dropout_p, rng));
      in = width;
    }
    net.layers_.push_back(make_layer(in, out_dim, false, false, S(0), rng));
    return net;
  }

  struct Cache {
    Mode mode = Mode::kEval;
    std::vector<MatX<S>> input;    // per layer: activations entering it
    std::vector<MatX<S>> xhat;     // bn normalized activations
    std::vector<VecX<S>> inv_std;  // bn 1/sqrt(var+eps) actually used
    std::vector<MatX<S>> act;      // post-relu, pre-dropout
    std::vector<MatX<S>> mask;     // dropout masks (scaled)
  };

  /// rng is required only when dropout is active in train mode.
  /// update_running folds the batch statistics into the running ones.
  MatX<S> forward(const MatX<S>& x, Mode mode, Rng* rng = nullptr,
                  Cache* cache = nullptr, bool update_running = false) {
    const size_t L = layers_.size();
    if (cache) {
      cache->mode = mode;
      cache->input.assign(L, {});
      cache->xhat.assign(L, {});
      cache->inv_std.assign(L, {});
      cache->act.assign(L, {});
      cache->mask.assign(L, {});
    }
    MatX<S> h = x;
    for (size_t l = 0; l < L; ++l) {
      Dense<S>& layer = layers_[l];
      if (cache) cache->input[l] = h;
      MatX<S> a = (h * layer.W.transpose()).rowwise() + layer.b.transpose();

      if (layer.batch_norm) {
        VecX<S> inv_std;
        MatX<S> xhat;
        if (mode == Mode::kTrain) {
          const S batch = static_cast<S>(a.rows());
          VecX<S> mu = a.colwise().mean();
          MatX<S> centered = a.rowwise() - mu.transpose();
          VecX<S> var = centered.array().square().colwise().mean();
          inv_std = (var.array() + S(kBnEps)).rsqrt().matrix();
          xhat = (centered.array().rowwise() * inv_std.transpose().array()).matrix();
          if (update_running && batch > 0) {
            layer.running_mean =
                (S(1) - S(kBnMomentum)) * layer.running_mean + S(kBnMomentum) * mu;
            layer.running_var =
                (S(1) - S(kBnMomentum)) * layer.running_var + S(kBnMomentum) * var;
          }
        } else {
          inv_std = (layer.running_var.array() + S(kBnEps)).rsqrt().matrix();
          xhat = ((a.rowwise() - layer.running_mean.transpose()).array().rowwise() *
                  inv_std.transpose().array())
                     .matrix();
        }
        a = (xhat.array().rowwise() * layer.gamma.transpose().array()).matrix();
        a.rowwise() += layer.beta.transpose();
        if (cache) {
          cache->xhat[l] = std::move(xhat);
          cache->inv_std[l] = std::move(inv_std);
        }
      }

      if (layer.relu) a = a.cwiseMax(S(0));
      if (cache) cache->act[l] = a;

      if (layer.dropout_p > 0 && mode == Mode::kTrain) {
        if (!rng) throw Error("Mlp::forward: dropout needs an rng in train mode");
        const S keep = S(1) - layer.dropout_p;
        MatX<S> m(a.rows(), a.cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rng->uniform(0.0, 1.0) < layer.dropout_p ? S(0) : S(1) / keep;
        a = a.cwiseProduct(m);
        if (cache) cache->mask[l] = std::move(m);
      }
      h = std::move(a);
    }
    return h;
  }

  /// Read-only forward: never touches running statistics.
  MatX<S> forward(const MatX<S>& x, Mode mode, Rng* rng = nullptr,
                  Cache* cache = nullptr) const {
    return const_cast<Mlp*>(this)->forward(x, mode, rng, cache, false);
  }

  /// Reverse-mode pass. Returns the gradient w.r.t. the network input.
  MatX<S> backward(const Cache& cache, const MatX<S>& d_out, MlpGrad<S>& grad) const {
    MatX<S> d = d_out;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const Dense<S>& layer = layers_[l];
      if (layer.dropout_p > 0 && cache.mode == Mode::kTrain)
        d = d.cwiseProduct(cache.mask[l]);
      if (layer.relu)
        d = d.cwiseProduct((cache.act[l].array() > S(0)).template cast<S>().matrix());

      if (layer.batch_norm) {
        grad.gamma[l] += (d.cwiseProduct(cache.xhat[l])).colwise().sum().transpose();
        grad.beta[l] += d.colwise().sum().transpose();
        MatX<S> dxhat =
            (d.array().rowwise() * layer.gamma.transpose().array()).matrix();
        if (cache.mode == Mode::kTrain) {
          // Backprop through the batch statistics themselves.
          const S batch = static_cast<S>(d.rows());
          VecX<S> sum_dxhat = dxhat.colwise().sum();
          VecX<S> sum_dxhat_xhat =
              dxhat.cwiseProduct(cache.xhat[l]).colwise().sum();
          MatX<S> tmp = batch * dxhat;
          tmp.rowwise() -= sum_dxhat.transpose();
          tmp -= (cache.xhat[l].array().rowwise() *
                  sum_dxhat_xhat.transpose().array())
                     .matrix();
          d = (tmp.array().rowwise() *
               (cache.inv_std[l] / batch).transpose().array())
                  .matrix();
        } else {
          d = (dxhat.array().rowwise() * cache.inv_std[l].transpose().array())
                  .matrix();
        }
      }

      grad.W[l].noalias() += d.transpose() * cache.input[l];
      grad.b[l] += d.colwise().sum().transpose();
      d = (d * layer.W).eval();
    }
    return d;
  }

  MlpGrad<S> make_grad() const {
    MlpGrad<S> g;
    for (const auto& layer : layers_) {
      g.W.push_back(MatX<S>::Zero(layer.W.rows(), layer.W.cols()));
      g.b.push_back(VecX<S>::Zero(layer.b.size()));
      g.gamma.push_back(VecX<S>::Zero(layer.gamma.size()));
      g.beta.push_back(VecX<S>::Zero(layer.beta.size()));
    }
    return g;
  }

  size_t layer_count() const { return layers_.size(); }
  Dense<S>& layer(size_t i) { return layers_[i]; }
  const Dense<S>& layer(size_t i) const { return layers_[i]; }
  int input_dim() const { return layers_.front().in_dim(); }
  int output_dim() const { return layers_.back().out_dim(); }

  /// Enumerates every tensor (trainable flag marks Adam-visible ones).
  template <typename Fn>
  void visit_tensors(Fn&& fn) {
    for (size_t l = 0; l < layers_.size(); ++l) {
      auto& ly = layers_[l];
      const std::string tag = "layer" + std::to_string(l);
      fn(tag + ".W", ly.W.data(), ly.W.rows(), ly.W.cols(), true);
      fn(tag + ".b", ly.b.data(), ly.b.size(), Eigen::Index(1), true);
      if (ly.batch_norm) {
        fn(tag + ".gamma", ly.gamma.data(), ly.gamma.size(), Eigen::Index(1), true);
        fn(tag + ".beta", ly.beta.data(), ly.beta.size(), Eigen::Index(1), true);
        fn(tag + ".running_mean", ly.running_mean.data(), ly.running_mean.size(),
           Eigen::Index(1), false);
        fn(tag + ".running_var", ly.running_var.data(), ly.running_var.size(),
           Eigen::Index(1), false);
      }
    }
  }
  template <typename Fn>
  void visit_tensors(Fn&& fn) const {
    const_cast<Mlp*>(this)->visit_tensors(
        [&](const std::string& name, S* data, Eigen::Index r, Eigen::Index c,
            bool trainable) { fn(name, static_cast<const S*>(data), r, c, trainable); });
  }

  uint64_t weight_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    visit_tensors([&](const std::string&, const S* data, Eigen::Index r,
                      Eigen::Index c, bool) {
      h = fnv1a64(data, sizeof(S) * static_cast<size_t>(r * c), h);
    });
    return h;
  }

  /// Upper bound on the Lipschitz constant in eval mode: product of layer
  /// operator norms (spectral norm of W times the largest |bn scale|).
  double lipschitz_bound() const {
    double bound = 1.0;
    for (const auto& ly : layers_) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(ly.W.template cast<double>());
      double factor = svd.singularValues()(0);
      if (ly.batch_norm) {
        const Eigen::ArrayXd scale =
            ly.gamma.template cast<double>().array() /
            (ly.running_var.template cast<double>().array() + kBnEps).sqrt();
        factor *= scale.abs().maxCoeff();
      }
      bound *= factor;
    }
    return bound;
  }

 private:
  static Dense<S> make_layer(int in, int out, bool bn, bool relu, S dropout_p,
                             Rng& rng) {
    Dense<S> ly;
    ly.W.resize(out, in);
    const double std = std::sqrt(2.0 / in);  // He init for ReLU stacks
    for (Eigen::Index i = 0; i < ly.W.rows(); ++i)
      for (Eigen::Index j = 0; j < ly.W.cols(); ++j)
        ly.W(i, j) = static_cast<S>(rng.normal(0.0, std));
    ly.b = VecX<S>::Zero(out);
    ly.batch_norm = bn;
    if (bn) {
      ly.gamma = VecX<S>::Ones(out);
      ly.beta = VecX<S>::Zero(out);
      ly.running_mean = VecX<S>::Zero(out);
      ly.running_var = VecX<S>::Ones(out);
    }
    ly.relu = relu;
    ly.dropout_p = relu ? dropout_p : S(0);
    return ly;
  }

  std::vector<Dense<S>> layers_;
};

/// Learning-rate step schedule: halves every `halve_every` optimizer steps.
template <typename S>
S scheduled_lr(S lr0, int halve_every, int64_t step) {
  return lr0 * static_cast<S>(std::pow(0.5, static_cast<double>(step / halve_every)));
}

/// Adam over the trainable tensors of an Mlp.
template <typename S>
class AdamMlp {
 public:
  AdamMlp(const Mlp<S>& model, S lr0, int halve_every)
      : lr0_(lr0), halve_(halve_every) {
    for (size_t l = 0; l < model.layer_count(); ++l) {
      const auto& ly = model.layer(l);
      m_W.push_back(MatX<S>::Zero(ly.W.rows(), ly.W.cols()));
      v_W.push_back(MatX<S>::Zero(ly.W.rows(), ly.W.cols()));
      m_b.push_back(VecX<S>::Zero(ly.b.size()));
      v_b.push_back(VecX<S>::Zero(ly.b.size()));
      m_gamma.push_back(VecX<S>::Zero(ly.gamma.size()));
      v_gamma.push_back(VecX<S>::Zero(ly.gamma.size()));
      m_beta.push_back(VecX<S>::Zero(ly.beta.size()));
      v_beta.push_back(VecX<S>::Zero(ly.beta.size()));
    }
  }

  S lr() const { return scheduled_lr(lr0_, halve_, t_); }
  int64_t steps() const { return t_; }

  void step(Mlp<S>& model, const MlpGrad<S>& g) {
    const S lr = this->lr();
    const S bc1 = S(1) - static_cast<S>(std::pow(kBeta1, double(t_ + 1)));
    const S bc2 = S(1) - static_cast<S>(std::pow(kBeta2, double(t_ + 1)));
    for (size_t l = 0; l < model.layer_count(); ++l) {
      auto& ly = model.layer(l);
      update(ly.W, g.W[l], m_W[l], v_W[l], lr, bc1, bc2);
      update(ly.b, g.b[l], m_b[l], v_b[l], lr, bc1, bc2);
      if (ly.batch_norm) {
        update(ly.gamma, g.gamma[l], m_gamma[l], v_gamma[l], lr, bc1, bc2);
        update(ly.beta, g.beta[l], m_beta[l], v_beta[l], lr, bc1, bc2);
      }
    }
    ++t_;
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  template <typename T, typename G>
  static void update(T& p, const G& g, T& m, T& v, S lr, S bc1, S bc2) {
    m = S(kBeta1) * m + (S(1) - S(kBeta1)) * g;
    v = S(kBeta2) * v + (S(1) - S(kBeta2)) * g.cwiseProduct(g);
    p.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + S(kEps));
  }

  S lr0_;
  int halve_;
  int64_t t_ = 0;
  std::vector<MatX<S>> m_W, v_W;
  std::vector<VecX<S>> m_b, v_b, m_gamma, v_gamma, m_beta, v_beta;
};

/// Adam over rows of a code table; rows are updated sparsely and carry
/// their own bias-correction counters.
template <typename S>
class AdamRows {
 public:
  AdamRows(Eigen::Index rows, Eigen::Index cols)
      : m_(MatX<S>::Zero(rows, cols)),
        v_(MatX<S>::Zero(rows, cols)),
        t_(Eigen::VectorXi::Zero(rows)) {}

  void step(MatX<S>& codes, const std::vector<int>& rows,
            const MatX<S>& row_grads, S lr) {
    for (size_t i = 0; i < rows.size(); ++i) {
      const int r = rows[i];
      t_[r] += 1;
      const S bc1 = S(1) - static_cast<S>(std::pow(AdamMlp<S>::kBeta1, double(t_[r])));
      const S bc2 = S(1) - static_cast<S>(std::pow(AdamMlp<S>::kBeta2, double(t_[r])));
      m_.row(r) = S(AdamMlp<S>::kBeta1) * m_.row(r) +
                  (S(1) - S(AdamMlp<S>::kBeta1)) * row_grads.row(i);
      v_.row(r) = S(AdamMlp<S>::kBeta2) * v_.row(r) +
                  (S(1) - S(AdamMlp<S>::kBeta2)) *
                      row_grads.row(i).cwiseProduct(row_grads.row(i));
      codes.row(r).array() -= lr * (m_.row(r).array() / bc1) /
                              ((v_.row(r).array() / bc2).sqrt() + S(AdamMlp<S>::kEps));
    }
  }

 private:
  MatX<S> m_, v_;
  Eigen::VectorXi t_;
};

}  // namespace forge::nn
