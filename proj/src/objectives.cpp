#include "sosvae/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace sosvae {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double value_or_zero(Var v) { return v.valid() ? v.value().scalar_value() : 0.0; }
}  // namespace

LossBreakdown LossVars::values(double lambda, double mu) const {
  LossBreakdown out;
  out.reconstruction = value_or_zero(recon);
  out.prior_kl = value_or_zero(prior_kl);
  out.supervised = value_or_zero(supervised);
  out.coupling_kl = value_or_zero(coupling_kl);
  out.total = value_or_zero(total);
  (void)lambda;
  (void)mu;
  return out;
}

Var recon_log_lik(Var pre, Var x, Likelihood head) {
  if (!pre.value().same_shape(x.value()))
    throw std::invalid_argument("recon_log_lik: shape mismatch " + pre.value().shape_str() +
                                " vs " + x.value().shape_str());
  if (head == Likelihood::Gaussian) {
    Var per = scale(add_scalar(square(sub(x, pre)), kLog2Pi), -0.5);
    return row_sum(per);
  }
  // x * (-softplus(-z)) + (1 - x) * (-softplus(z))
  Var pos = mul(x, softplus(neg(pre)));
  Var negt = mul(add_scalar(neg(x), 1.0), softplus(pre));
  return neg(row_sum(add(pos, negt)));
}

Var masked_recon_log_lik(Graph& g, Var pre_full, Var x_obs,
                         std::shared_ptr<const std::vector<int>> observed, Likelihood head) {
  std::size_t rows = pre_full.value().rows();
  if (observed->empty()) return g.constant(Tensor::zeros({rows}));
  Var pre_obs = gather_cols(pre_full, observed);
  return recon_log_lik(pre_obs, x_obs, head);
}

namespace {

// Shared generative core; svae_loss extends it with the supervised term on
// the same latent sample, so the lambda = 0 reduction is bit-exact.
LossVars generative_core(const VarMap& dec, const VarMap& enc, Var x, Var eps,
                         const DecoderArch& dec_arch, const EncoderArch& enc_arch,
                         const std::string& enc_prefix, Var* s_out) {
  DiagGaussianVars q = encode(enc, x, enc_arch, enc_prefix);
  Var s = reparameterize(q, eps);
  Var pre = decode_pre(dec, s, dec_arch);

  LossVars out;
  out.recon = mean(recon_log_lik(pre, x, dec_arch.head));
  out.prior_kl = mean(kl_to_standard(q));
  out.total = sub(out.recon, out.prior_kl);
  if (s_out) *s_out = s;
  return out;
}

}  // namespace

LossVars elbo(const VarMap& dec, const VarMap& enc, Var x, Var eps,
              const DecoderArch& dec_arch, const EncoderArch& enc_arch,
              const std::string& enc_prefix) {
  return generative_core(dec, enc, x, eps, dec_arch, enc_arch, enc_prefix, nullptr);
}

LossVars svae_loss(const VarMap& dec, const VarMap& enc, const VarMap& cls, Var x,
                   std::shared_ptr<const std::vector<int>> y, Var eps, double lambda,
                   const DecoderArch& dec_arch, const EncoderArch& enc_arch) {
  if (lambda < 0) throw std::invalid_argument("svae_loss: lambda must be >= 0");
  Var s;
  LossVars out = generative_core(dec, enc, x, eps, dec_arch, enc_arch, "enc", &s);
  if (lambda == 0.0) return out;  // bit-exact reduction to the ELBO

  Var logits = classify_logits(cls, s);
  out.supervised = neg(mean(softmax_cross_entropy(logits, std::move(y))));
  out.total = add(out.total, scale(out.supervised, lambda));
  return out;
}

LossVars dvae_loss(const VarMap& dec, const DiagGaussianVars& q1, const VarMap& enc2,
                   const VarMap& cls, Var x, std::shared_ptr<const std::vector<int>> y, Var eps,
                   double lambda, double mu, const DecoderArch& dec_arch,
                   const EncoderArch& enc2_arch, const std::string& enc2_prefix) {
  if (lambda < 0 || mu < 0) throw std::invalid_argument("dvae_loss: weights must be >= 0");
  DiagGaussianVars q2 = encode(enc2, x, enc2_arch, enc2_prefix);
  if (!q2.mean.value().same_shape(q1.mean.value()))
    throw std::invalid_argument("dvae_loss: encoder latent dims differ");
  Var s2 = reparameterize(q2, eps);

  LossVars out;
  Var logits = classify_logits(cls, s2);
  out.supervised = neg(mean(softmax_cross_entropy(logits, std::move(y))));
  out.recon = mean(recon_log_lik(decode_pre(dec, s2, dec_arch), x, dec_arch.head));
  out.coupling_kl = mean(kl_between(q2, q1));
  out.total = sub(add(scale(out.supervised, lambda), out.recon), scale(out.coupling_kl, mu));
  return out;
}

namespace {
Tensor as_row(const Tensor& x) {
  return x.rank() == 1 ? Tensor::matrix(1, x.size(), x.data()) : x;
}
}  // namespace

LossBreakdown elbo_value(const ParamSet& dec, const ParamSet& enc, const Tensor& x,
                         const Tensor& eps, const DecoderArch& dec_arch,
                         const EncoderArch& enc_arch) {
  Graph g;
  LossVars lv = elbo(param_constants(g, dec), param_constants(g, enc), g.constant(as_row(x)),
                     g.constant(as_row(eps)), dec_arch, enc_arch);
  return lv.values(0.0, 0.0);
}

LossBreakdown svae_loss_value(const ParamSet& dec, const ParamSet& enc, const ParamSet& cls,
                              const Tensor& x, int y, const Tensor& eps, double lambda,
                              const DecoderArch& dec_arch, const EncoderArch& enc_arch) {
  Graph g;
  auto labels = std::make_shared<const std::vector<int>>(std::vector<int>{y});
  LossVars lv =
      svae_loss(param_constants(g, dec), param_constants(g, enc), param_constants(g, cls),
                g.constant(as_row(x)), labels, g.constant(as_row(eps)), lambda, dec_arch, enc_arch);
  return lv.values(lambda, 0.0);
}

}  // namespace sosvae
