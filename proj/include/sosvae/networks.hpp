#pragma once

#include "sosvae/distributions.hpp"
#include "sosvae/params.hpp"
#include "sosvae/rng.hpp"

namespace sosvae {

// Single-hidden-layer MLP encoder with mean and log-variance heads.
struct EncoderArch {
  int input_dim = 0;
  int hidden_dim = 512;
  int latent_dim = 20;
};

enum class DecoderKind { Mlp, Nmf };
enum class Likelihood { Gaussian, Bernoulli };

struct DecoderArch {
  DecoderKind kind = DecoderKind::Mlp;
  int latent_dim = 20;
  int hidden_dim = 512;  // MLP only
  int output_dim = 0;
  Likelihood head = Likelihood::Gaussian;
};

struct ClassifierArch {
  int latent_dim = 20;
  int classes = 2;
};

// Initialization: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn from the
// given stream in a fixed parameter order.
ParamSet init_encoder(const EncoderArch& arch, Rng& rng, const std::string& prefix = "enc");
ParamSet init_decoder(const DecoderArch& arch, Rng& rng);
ParamSet init_classifier(const ClassifierArch& arch, Rng& rng);

// Forward builders over batches. `params` may come from param_leaves (trained
// path) or param_constants (frozen path).
DiagGaussianVars encode(const VarMap& params, Var x, const EncoderArch& arch,
                        const std::string& prefix = "enc");
// Pre-head decoder output: affine output for MLP, softplus(W) @ softplus(s)^T
// rows for NMF. Bernoulli heads consume these as logits.
Var decode_pre(const VarMap& params, Var s, const DecoderArch& arch);
// Reconstruction parameters: sigmoid applied for Bernoulli heads.
Var decode(const VarMap& params, Var s, const DecoderArch& arch);
Var classify_logits(const VarMap& params, Var s);
// log p(y = c | s) for all c, (B, C)
Var classify(const VarMap& params, Var s);

// Convenience value-level forwards (no gradient tracking).
DiagGaussian encode_one(const ParamSet& params, const EncoderArch& arch, const Tensor& x,
                        const std::string& prefix = "enc");
Tensor encode_means(const ParamSet& params, const EncoderArch& arch, const Tensor& X,
                    const std::string& prefix = "enc");
std::pair<Tensor, Tensor> encode_batch(const ParamSet& params, const EncoderArch& arch,
                                       const Tensor& X, const std::string& prefix = "enc");
Tensor decode_batch(const ParamSet& params, const DecoderArch& arch, const Tensor& S);
Tensor classify_log_probs(const ParamSet& params, const Tensor& S);

// Adam in descent convention: params -= lr * m_hat / (sqrt(v_hat) + eps).
// Trainers maximize objectives by passing gradients of the negated objective.
// Step counters are kept per parameter so that updating groups separately or
// jointly yields bit-identical trajectories.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& params, const GradMap& grads, double lr);

  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  const std::map<std::string, long>& counts() const { return t_; }
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
               std::map<std::string, long> t);

 private:
  double beta1_, beta2_, eps_;
  std::map<std::string, Tensor> m_, v_;
  std::map<std::string, long> t_;
};

// Base rate halves once after the decay epoch (0-indexed: epochs >= decay_epoch
// run at factor * base).
struct LrSchedule {
  double base = 1e-3;
  int decay_epoch = 50;
  double factor = 0.5;
  bool enabled = true;

  double at(int epoch) const {
    return (enabled && epoch >= decay_epoch) ? base * factor : base;
  }
};

}  // namespace sosvae
