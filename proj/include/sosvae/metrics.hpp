#pragma once

#include <vector>

#include "sosvae/data.hpp"
#include "sosvae/trainers.hpp"

namespace sosvae {

// Exact-match fraction. Throws on empty or mismatched inputs.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// Macro-averaged one-vs-rest AUC via the rank/pairwise formulation (ties
// count 1/2); classes missing a positive or negative example are skipped, and
// at least one task must be computable.
double auc_macro(const Tensor& scores, const std::vector<int>& labels);

// 10 log10(max_value^2 / MSE), capped at the 99 dB sentinel (exact
// reconstructions would otherwise be infinite).
double psnr(const Tensor& x, const Tensor& x_hat, double max_value);

// Mean SSIM over 8x8 sliding windows (stride 1), C1 = (0.01 R)^2,
// C2 = (0.03 R)^2. Inputs are 2-D images at least 8x8.
double ssim(const Tensor& x, const Tensor& x_hat, double dynamic_range);

// Prediction through the encoder mean of the prediction-path encoder.
std::vector<int> predict_labels(const ModelBundle& bundle, const Tensor& X, std::size_t t = 0);
Tensor predict_probs(const ModelBundle& bundle, const Tensor& X, std::size_t t = 0);  // N x C
// Reconstructions from the generative encoder mean (for PSNR/SSIM).
Tensor reconstruct(const ModelBundle& bundle, const Tensor& X, std::size_t t = 0);

// The paper's utility metric: refit a fresh encoder on the generative
// objective with the decoder frozen, then report the mean per-sample
// KL(q_supervised || q_refit) over `data`. Lower is better.
double scientific_utility(const ModelBundle& bundle, const LabeledDataset& data,
                          int refit_epochs = -1, std::size_t t = 0);

// Mean per-sample KL(q_phi2 || q_phi1) for double-encoder bundles.
double coupling_kl(const ModelBundle& bundle, const Tensor& X, std::size_t t = 0);

// Mean per-sample recon log-likelihood at the generative encoder mean.
double recon_log_lik_mean(const ModelBundle& bundle, const LabeledDataset& data, std::size_t t = 0);

// Per-sample PSNR (and SSIM when the dataset rows are images) of the
// reconstruction at the generative encoder mean, averaged over samples.
// SSIM is NaN for non-image data.
std::pair<double, double> recon_quality(const ModelBundle& bundle, const LabeledDataset& data,
                                        std::size_t t = 0);

// ---- stationary-point probes -------------------------------------------------

// Weighted eps draws: gradients are formed as sum_k w_k * grad(terms at E_k),
// which lets tests integrate the eps-expectation by quadrature while training
// probes use Monte-Carlo draws (weights 1/K).
struct EpsDraws {
  std::vector<std::pair<Tensor, double>> draws;  // (B x L eps matrix, weight)

  static EpsDraws monte_carlo(std::size_t k, std::size_t rows, std::size_t latent,
                              std::uint64_t seed);
};

struct ResidualReport {
  double phi = 0.0;    // ||grad_phi generative||_inf
  double theta = 0.0;  // ||grad_theta generative + lambda * second-order supervised||_inf
  double psi = 0.0;    // ||grad_psi supervised||_inf
};

ResidualReport stationary_residuals(const ModelBundle& bundle, const Tensor& X,
                                    const std::vector<int>& y, double lambda,
                                    const EpsDraws& eps, std::size_t t = 0);

// ---- linear-Gaussian oracle comparison ---------------------------------------

// Mean KL from the encoder posterior to the analytic posterior of `spec`,
// after aligning the encoder's latent basis to the true one with the best
// orthogonal transform (fit on means over X). Gaussian VAE latents are only
// identified up to rotation, so the raw comparison would be meaningless.
double aligned_posterior_kl(const EncoderStack& enc, const LinearGaussianSpec& spec,
                            const Tensor& X);

}  // namespace sosvae
