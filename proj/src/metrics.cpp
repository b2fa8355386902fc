#include "sosvae/metrics.hpp"

#include "sosvae/second_order.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sosvae {

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

namespace {

// One-vs-rest AUC from average ranks; ties contribute 1/2 pairs.
double auc_binary(const std::vector<double>& scores, const std::vector<bool>& positive) {
  std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (positive[k]) {
      rank_sum += rank[k];
      ++n_pos;
    }
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return -1.0;  // task not computable
  double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

double auc_macro(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.rank() != 2 || scores.rows() != labels.size())
    throw std::invalid_argument("auc_macro: scores must be N x C with N labels");
  const std::size_t classes = scores.cols();
  if (classes < 2) throw std::invalid_argument("auc_macro: need at least 2 classes");

  double total = 0.0;
  std::size_t tasks = 0;
  std::vector<double> col(scores.rows());
  std::vector<bool> pos(scores.rows());
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      col[i] = scores.at(i, c);
      pos[i] = labels[i] == static_cast<int>(c);
    }
    double auc = auc_binary(col, pos);
    if (auc >= 0.0) {
      total += auc;
      ++tasks;
    }
  }
  if (tasks == 0) throw std::invalid_argument("auc_macro: no computable one-vs-rest task");
  return total / static_cast<double>(tasks);
}

double psnr(const Tensor& x, const Tensor& x_hat, double max_value) {
  if (!x.same_shape(x_hat)) throw std::invalid_argument("psnr: shape mismatch");
  if (x.size() == 0 || max_value <= 0) throw std::invalid_argument("psnr: bad inputs");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x.data()[i] - x_hat.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_value * max_value / mse));
}

double ssim(const Tensor& x, const Tensor& x_hat, double dynamic_range) {
  if (x.rank() != 2 || !x.same_shape(x_hat)) throw std::invalid_argument("ssim: need equal 2-D images");
  const std::size_t win = 8;
  if (x.rows() < win || x.cols() < win)
    throw std::invalid_argument("ssim: image smaller than 8x8 window");
  const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
  const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;
  const double inv_n = 1.0 / static_cast<double>(win * win);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + win <= x.rows(); ++r) {
    for (std::size_t c = 0; c + win <= x.cols(); ++c) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          double a = x.at(r + i, c + j), b = x_hat.at(r + i, c + j);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      double mx = sx * inv_n, my = sy * inv_n;
      double vx = sxx * inv_n - mx * mx;
      double vy = syy * inv_n - my * my;
      double cov = sxy * inv_n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

Tensor predict_probs(const ModelBundle& bundle, const Tensor& X, std::size_t t) {
  const EncoderStack& enc = bundle.pred_enc.at(t);
  Tensor means = encode_means(enc.params, enc.arch, X, enc.prefix);
  Tensor log_probs = classify_log_probs(bundle.classifier, means);
  for (double& v : log_probs.data()) v = std::exp(v);
  return log_probs;
}

std::vector<int> predict_labels(const ModelBundle& bundle, const Tensor& X, std::size_t t) {
  Tensor probs = predict_probs(bundle, X, t);
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c)
      if (probs.at(i, c) > probs.at(i, best)) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

Tensor reconstruct(const ModelBundle& bundle, const Tensor& X, std::size_t t) {
  const EncoderStack& enc = bundle.generative_encoder(t);
  Tensor means = encode_means(enc.params, enc.arch, X, enc.prefix);
  return decode_batch(bundle.decoder, bundle.dec_arch, means);
}

double scientific_utility(const ModelBundle& bundle, const LabeledDataset& data,
                          int refit_epochs, std::size_t t) {
  const EncoderStack& sup = bundle.pred_enc.at(t);
  if (data.dim() != sup.mask.observed.size())
    throw std::invalid_argument("scientific_utility: data dim does not match encoder mask");
  int epochs = refit_epochs < 0 ? bundle.config.refit_epochs_or_default() : refit_epochs;
  EncoderStack refit = refit_encoder(bundle, data, sup.mask, epochs, "utility");

  auto [m_sup, lv_sup] = encode_batch(sup.params, sup.arch, data.X, sup.prefix);
  auto [m_ref, lv_ref] = encode_batch(refit.params, refit.arch, data.X, refit.prefix);

  double total = 0.0;
  const std::size_t L = m_sup.cols();
  for (std::size_t i = 0; i < data.size(); ++i) {
    DiagGaussian a{Tensor::zeros({L}), Tensor::zeros({L})};
    DiagGaussian b{Tensor::zeros({L}), Tensor::zeros({L})};
    for (std::size_t d = 0; d < L; ++d) {
      a.mean.at(d) = m_sup.at(i, d);
      a.log_var.at(d) = lv_sup.at(i, d);
      b.mean.at(d) = m_ref.at(i, d);
      b.log_var.at(d) = lv_ref.at(i, d);
    }
    total += kl_between(a, b);
  }
  return total / static_cast<double>(data.size());
}

double coupling_kl(const ModelBundle& bundle, const Tensor& X, std::size_t t) {
  if (bundle.gen_enc.empty())
    throw std::invalid_argument("coupling_kl: bundle has a single encoder");
  const EncoderStack& e1 = bundle.gen_enc.at(t);
  const EncoderStack& e2 = bundle.pred_enc.at(t);
  auto [m1, lv1] = encode_batch(e1.params, e1.arch, X, e1.prefix);
  auto [m2, lv2] = encode_batch(e2.params, e2.arch, X, e2.prefix);
  const std::size_t L = m1.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    DiagGaussian a{Tensor::zeros({L}), Tensor::zeros({L})};
    DiagGaussian b{Tensor::zeros({L}), Tensor::zeros({L})};
    for (std::size_t d = 0; d < L; ++d) {
      a.mean.at(d) = m2.at(i, d);
      a.log_var.at(d) = lv2.at(i, d);
      b.mean.at(d) = m1.at(i, d);
      b.log_var.at(d) = lv1.at(i, d);
    }
    total += kl_between(a, b);
  }
  return total / static_cast<double>(X.rows());
}

double recon_log_lik_mean(const ModelBundle& bundle, const LabeledDataset& data, std::size_t t) {
  const EncoderStack& enc = bundle.generative_encoder(t);
  Tensor means = encode_means(enc.params, enc.arch, data.X, enc.prefix);
  Graph g;
  Var pre = decode_pre(param_constants(g, bundle.decoder), g.constant(means), bundle.dec_arch);
  Var x = g.constant(data.X);
  auto observed = std::make_shared<const std::vector<int>>(enc.mask.observed);
  Var ll = enc.mask.full(bundle.dec_arch.output_dim)
               ? recon_log_lik(pre, x, bundle.dec_arch.head)
               : masked_recon_log_lik(g, pre, x, observed, bundle.dec_arch.head);
  return mean(ll).value().scalar_value();
}

std::pair<double, double> recon_quality(const ModelBundle& bundle, const LabeledDataset& data,
                                        std::size_t t) {
  Tensor recon = reconstruct(bundle, data.X, t);
  const bool image = data.image_rows >= 8 && data.image_cols >= 8;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> xr(data.dim()), rr(data.dim());
    for (std::size_t j = 0; j < data.dim(); ++j) {
      xr[j] = data.X.at(i, j);
      rr[j] = recon.at(i, j);
    }
    psnr_sum += psnr(Tensor::vec(xr), Tensor::vec(rr), data.value_range);
    if (image) {
      std::size_t r = data.image_rows, c = data.image_cols;
      ssim_sum += ssim(Tensor::matrix(r, c, xr), Tensor::matrix(r, c, rr), data.value_range);
    }
  }
  double n = static_cast<double>(data.size());
  return {psnr_sum / n, image ? ssim_sum / n : std::numeric_limits<double>::quiet_NaN()};
}

EpsDraws EpsDraws::monte_carlo(std::size_t k, std::size_t rows, std::size_t latent,
                               std::uint64_t seed) {
  EpsDraws out;
  Rng rng = Rng::stream(seed, "residual_eps");
  double w = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i)
    out.draws.emplace_back(Tensor::matrix(rows, latent, rng.normal_vec(rows * latent)), w);
  return out;
}

namespace {

void accumulate_scaled(GradMap& into, const GradMap& from, double w) {
  for (const auto& [name, t] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor scaled = t;
      for (double& v : scaled.data()) v *= w;
      into.emplace(name, std::move(scaled));
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) it->second.data()[i] += w * t.data()[i];
    }
  }
}

double inf_norm(const GradMap& g) { return max_abs(g); }

}  // namespace

ResidualReport stationary_residuals(const ModelBundle& bundle, const Tensor& X,
                                    const std::vector<int>& y, double lambda,
                                    const EpsDraws& eps, std::size_t t) {
  const EncoderStack& enc = bundle.generative_encoder(t);
  const int full_dim = bundle.dec_arch.output_dim;
  auto observed = std::make_shared<const std::vector<int>>(enc.mask.observed);
  const bool masked = !enc.mask.full(full_dim);
  auto labels = std::make_shared<const std::vector<int>>(y);

  GradMap phi_acc, theta_gen_acc, theta_sos_acc, psi_acc;
  for (const auto& [E, w] : eps.draws) {
    {
      Graph g;
      Var x = g.constant(X);
      VarMap dv = param_leaves(g, bundle.decoder);
      VarMap ev = param_leaves(g, enc.params);
      DiagGaussianVars q = encode(ev, x, enc.arch, enc.prefix);
      Var s = reparameterize(q, g.constant(E));
      Var pre = decode_pre(dv, s, bundle.dec_arch);
      Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, bundle.dec_arch.head)
                         : recon_log_lik(pre, x, bundle.dec_arch.head);
      Var total = sub(mean(recon), mean(kl_to_standard(q)));
      accumulate_scaled(phi_acc, grad_values(gradient(total, ev)), w);
      accumulate_scaled(theta_gen_acc, grad_values(gradient(total, dv)), w);

      if (!bundle.classifier.empty()) {
        VarMap cv = param_leaves(g, bundle.classifier);
        Var sup = neg(mean(softmax_cross_entropy(classify_logits(cv, s), labels)));
        accumulate_scaled(psi_acc, grad_values(gradient(sup, cv)), w);
      }
    }
    if (lambda > 0 && !bundle.classifier.empty()) {
      const DecoderArch da = bundle.dec_arch;
      const EncoderArch ea = enc.arch;
      const std::string prefix = enc.prefix;
      const ParamSet cls = bundle.classifier;
      LossBuilder inner = [&](Graph& g, const VarMap& th, const VarMap& ph) {
        Var x = g.constant(X);
        DiagGaussianVars q = encode(ph, x, ea, prefix);
        Var s = reparameterize(q, g.constant(E));
        Var pre = decode_pre(th, s, da);
        Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, da.head)
                           : recon_log_lik(pre, x, da.head);
        return sub(mean(recon), mean(kl_to_standard(q)));
      };
      LossBuilder outer = [&](Graph& g, const VarMap& th, const VarMap& ph_plus) {
        (void)th;
        DiagGaussianVars q = encode(ph_plus, g.constant(X), ea, prefix);
        Var s = reparameterize(q, g.constant(E));
        VarMap cv = param_constants(g, cls);
        return neg(mean(softmax_cross_entropy(classify_logits(cv, s), labels)));
      };
      GradMap hyper = grad_through_update(inner, outer, bundle.decoder, enc.params,
                                          bundle.config.alpha, SecondOrderBackend::Exact, 1);
      accumulate_scaled(theta_sos_acc, hyper, w * lambda);
    }
  }

  ResidualReport out;
  out.phi = inf_norm(phi_acc);
  out.psi = inf_norm(psi_acc);
  accumulate_scaled(theta_gen_acc, theta_sos_acc, 1.0);
  out.theta = inf_norm(theta_gen_acc);
  return out;
}

double aligned_posterior_kl(const EncoderStack& enc, const LinearGaussianSpec& spec,
                            const Tensor& X) {
  const std::size_t n = X.rows();
  const std::size_t L = enc.arch.latent_dim;
  if (static_cast<std::size_t>(spec.A.cols()) != L)
    throw std::invalid_argument("aligned_posterior_kl: latent dims differ from spec");

  auto [means, log_vars] = encode_batch(enc.params, enc.arch, X, enc.prefix);

  // True posterior covariance is x-independent; compute it once from row 0.
  std::vector<double> row0(X.cols());
  for (std::size_t j = 0; j < X.cols(); ++j) row0[j] = X.at(0, j);
  FullGaussian post0 = analytic_posterior(spec, Tensor::vec(row0));

  Eigen::MatrixXd post_means(n, L);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(X.cols());
    for (std::size_t j = 0; j < X.cols(); ++j) row[j] = X.at(i, j);
    FullGaussian p = analytic_posterior(spec, Tensor::vec(row));
    for (std::size_t d = 0; d < L; ++d) post_means(i, d) = p.mean.at(d);
  }

  Eigen::MatrixXd enc_means(n, L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < L; ++d) enc_means(i, d) = means.at(i, d);

  // Orthogonal Procrustes: R = argmin ||M R - P||_F = U V^T from svd(M^T P).
  Eigen::MatrixXd mtp = enc_means.transpose() * post_means;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(mtp, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd R = svd.matrixU() * svd.matrixV().transpose();

  // KL( N(R^T m, R^T D R) || posterior ), full-covariance closed form.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> post_cov(post0.cov.data().data(), L, L);
  Eigen::MatrixXd cov_p = post_cov;
  Eigen::LLT<Eigen::MatrixXd> llt(cov_p);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("aligned_posterior_kl: singular posterior covariance");
  Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(L, L));
  double logdet_p = 0;
  Eigen::MatrixXd Lc = llt.matrixL();
  for (std::size_t i = 0; i < L; ++i) logdet_p += 2.0 * std::log(Lc(i, i));

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd d_q(L);
    double logdet_q = 0;
    for (std::size_t d = 0; d < L; ++d) {
      d_q(d) = std::exp(log_vars.at(i, d));
      logdet_q += log_vars.at(i, d);  // rotation leaves the determinant unchanged
    }
    Eigen::MatrixXd cov_q = R.transpose() * d_q.asDiagonal() * R;
    Eigen::VectorXd m_q = R.transpose() * enc_means.row(i).transpose();
    Eigen::VectorXd dm = post_means.row(i).transpose() - m_q;
    double trace = (prec * cov_q).trace();
    double quad = dm.dot(prec * dm);
    total += 0.5 * (logdet_p - logdet_q - static_cast<double>(L) + trace + quad);
  }
  return total / static_cast<double>(n);
}

}  // namespace sosvae
