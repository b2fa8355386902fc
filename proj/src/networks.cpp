#include "sosvae/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace sosvae {

namespace {

Tensor init_weight(std::size_t out, std::size_t in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(out * in);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::matrix(out, in, std::move(w));
}

Tensor init_bias(std::size_t out, std::size_t in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> b(out);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  return Tensor::vec(std::move(b));
}

}  // namespace

ParamSet init_encoder(const EncoderArch& arch, Rng& rng, const std::string& prefix) {
  std::size_t p = arch.input_dim, h = arch.hidden_dim, L = arch.latent_dim;
  ParamSet ps;
  ps.emplace(prefix + ".W1", init_weight(h, p, rng));
  ps.emplace(prefix + ".b1", init_bias(h, p, rng));
  ps.emplace(prefix + ".Wm", init_weight(L, h, rng));
  ps.emplace(prefix + ".bm", init_bias(L, h, rng));
  ps.emplace(prefix + ".Wv", init_weight(L, h, rng));
  ps.emplace(prefix + ".bv", init_bias(L, h, rng));
  return ps;
}

ParamSet init_decoder(const DecoderArch& arch, Rng& rng) {
  std::size_t L = arch.latent_dim, h = arch.hidden_dim, p = arch.output_dim;
  ParamSet ps;
  if (arch.kind == DecoderKind::Mlp) {
    ps.emplace("dec.W1", init_weight(h, L, rng));
    ps.emplace("dec.b1", init_bias(h, L, rng));
    ps.emplace("dec.W2", init_weight(p, h, rng));
    ps.emplace("dec.b2", init_bias(p, h, rng));
  } else {
    // Unconstrained pre-activation; softplus at use keeps the effective
    // factor matrix nonnegative.
    ps.emplace("dec.W", init_weight(p, L, rng));
  }
  return ps;
}

ParamSet init_classifier(const ClassifierArch& arch, Rng& rng) {
  ParamSet ps;
  ps.emplace("cls.W", init_weight(arch.classes, arch.latent_dim, rng));
  ps.emplace("cls.b", init_bias(arch.classes, arch.latent_dim, rng));
  return ps;
}

DiagGaussianVars encode(const VarMap& params, Var x, const EncoderArch& arch,
                        const std::string& prefix) {
  if (x.value().rank() != 2 || x.value().cols() != static_cast<std::size_t>(arch.input_dim))
    throw std::invalid_argument("encode: input dim mismatch, got " + x.value().shape_str());
  Var hidden = relu(affine(x, params.at(prefix + ".W1"), params.at(prefix + ".b1")));
  Var mean = affine(hidden, params.at(prefix + ".Wm"), params.at(prefix + ".bm"));
  Var log_var = affine(hidden, params.at(prefix + ".Wv"), params.at(prefix + ".bv"));
  return DiagGaussianVars{mean, log_var};
}

Var decode_pre(const VarMap& params, Var s, const DecoderArch& arch) {
  if (s.value().rank() != 2 || s.value().cols() != static_cast<std::size_t>(arch.latent_dim))
    throw std::invalid_argument("decode: latent dim mismatch, got " + s.value().shape_str());
  if (arch.kind == DecoderKind::Mlp) {
    Var hidden = relu(affine(s, params.at("dec.W1"), params.at("dec.b1")));
    return affine(hidden, params.at("dec.W2"), params.at("dec.b2"));
  }
  // x_hat = softplus(s) @ softplus(W)^T, elementwise >= 0 for every (W, s).
  return matmul(softplus(s), transpose(softplus(params.at("dec.W"))));
}

Var decode(const VarMap& params, Var s, const DecoderArch& arch) {
  Var pre = decode_pre(params, s, arch);
  if (arch.kind == DecoderKind::Mlp && arch.head == Likelihood::Bernoulli) return sigmoid(pre);
  return pre;
}

Var classify_logits(const VarMap& params, Var s) {
  return affine(s, params.at("cls.W"), params.at("cls.b"));
}

Var classify(const VarMap& params, Var s) {
  return log_softmax(classify_logits(params, s));
}

DiagGaussian encode_one(const ParamSet& params, const EncoderArch& arch, const Tensor& x,
                        const std::string& prefix) {
  Graph g;
  Tensor row = x.rank() == 1 ? Tensor::matrix(1, x.size(), x.data()) : x;
  const auto vars = param_constants(g, params);
  DiagGaussianVars q = encode(vars, g.constant(row), arch, prefix);
  return DiagGaussian{Tensor::vec(q.mean.value().data()), Tensor::vec(q.log_var.value().data())};
}

std::pair<Tensor, Tensor> encode_batch(const ParamSet& params, const EncoderArch& arch,
                                       const Tensor& X, const std::string& prefix) {
  Graph g;
  const auto vars = param_constants(g, params);
  DiagGaussianVars q = encode(vars, g.constant(X), arch, prefix);
  return {q.mean.value(), q.log_var.value()};
}

Tensor encode_means(const ParamSet& params, const EncoderArch& arch, const Tensor& X,
                    const std::string& prefix) {
  return encode_batch(params, arch, X, prefix).first;
}

Tensor decode_batch(const ParamSet& params, const DecoderArch& arch, const Tensor& S) {
  Graph g;
  const auto vars = param_constants(g, params);
  return decode(vars, g.constant(S), arch).value();
}

Tensor classify_log_probs(const ParamSet& params, const Tensor& S) {
  Graph g;
  const auto vars = param_constants(g, params);
  return classify(vars, g.constant(S)).value();
}

void Adam::step(ParamSet& params, const GradMap& grads, double lr) {
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& grad = git->second;
    if (!grad.same_shape(p))
      throw std::invalid_argument("Adam: gradient shape mismatch for " + name);

    auto mit = m_.try_emplace(name, Tensor::zeros(p.shape())).first;
    auto vit = v_.try_emplace(name, Tensor::zeros(p.shape())).first;
    long& t = t_.try_emplace(name, 0).first->second;
    ++t;

    Tensor& m = mit->second;
    Tensor& v = vit->second;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = grad.data()[i];
      m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
      v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
      double m_hat = m.data()[i] / bc1;
      double v_hat = v.data()[i] / bc2;
      p.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

void Adam::restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
                   std::map<std::string, long> t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = std::move(t);
}

}  // namespace sosvae
