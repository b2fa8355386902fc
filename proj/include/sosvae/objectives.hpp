#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sosvae/networks.hpp"

namespace sosvae {

// Scalar objective terms for one minibatch. Reconstruction is summed over
// coordinates per datum; every term is then averaged over the batch, so the
// supervised weight absorbs any dimensional imbalance.
struct LossBreakdown {
  double reconstruction = 0.0;
  double prior_kl = 0.0;
  double supervised = 0.0;
  double coupling_kl = 0.0;
  double total = 0.0;
};

// Graph nodes for the same terms; invalid Vars mark absent terms.
struct LossVars {
  Var recon;
  Var prior_kl;
  Var supervised;
  Var coupling_kl;
  Var total;

  LossBreakdown values(double lambda, double mu) const;
};

// Per-datum reconstruction log-likelihood (length B).
// Gaussian head: sum_d [-log(2 pi)/2 - (x_d - pre_d)^2 / 2] (unit variance).
// Bernoulli head: sum_d [x_d * log sigmoid(pre_d) + (1-x_d) * log sigmoid(-pre_d)]
// computed from pre-head logits for stability.
Var recon_log_lik(Var pre, Var x, Likelihood head);

// Masked variant: only decoder output coordinates listed in `observed` are
// scored against x_obs (B x |observed|). Empty mask gives zeros.
Var masked_recon_log_lik(Graph& g, Var pre_full, Var x_obs,
                         std::shared_ptr<const std::vector<int>> observed, Likelihood head);

// Single-sample reparameterized ELBO estimate, batch mean:
//   E[log p(x | g_phi(eps, x))] - KL(q_phi(.|x) || N(0, I)).
LossVars elbo(const VarMap& dec, const VarMap& enc, Var x, Var eps,
              const DecoderArch& dec_arch, const EncoderArch& enc_arch,
              const std::string& enc_prefix = "enc");

// elbo + lambda * E[log p_psi(y | s)]; lambda = 0 reduces exactly to elbo.
LossVars svae_loss(const VarMap& dec, const VarMap& enc, const VarMap& cls, Var x,
                   std::shared_ptr<const std::vector<int>> y, Var eps, double lambda,
                   const DecoderArch& dec_arch, const EncoderArch& enc_arch);

// Predictive-encoder path of the double-encoder objective:
//   lambda * E[log p_psi(y | g_{phi2})] + E[log p_theta(x | g_{phi2})]
//     - mu * KL(q_{phi2} || q_{phi1}).
// Components are exposed separately; the phi2/psi updates use only the
// supervised and coupling terms. q1 enters as given (typically frozen values
// of the generative encoder after its update).
LossVars dvae_loss(const VarMap& dec, const DiagGaussianVars& q1, const VarMap& enc2,
                   const VarMap& cls, Var x, std::shared_ptr<const std::vector<int>> y, Var eps,
                   double lambda, double mu, const DecoderArch& dec_arch,
                   const EncoderArch& enc2_arch, const std::string& enc2_prefix = "enc2");

// Value-level single-sample wrappers.
LossBreakdown elbo_value(const ParamSet& dec, const ParamSet& enc, const Tensor& x,
                         const Tensor& eps, const DecoderArch& dec_arch,
                         const EncoderArch& enc_arch);
LossBreakdown svae_loss_value(const ParamSet& dec, const ParamSet& enc, const ParamSet& cls,
                              const Tensor& x, int y, const Tensor& eps, double lambda,
                              const DecoderArch& dec_arch, const EncoderArch& enc_arch);

}  // namespace sosvae
