#include "sosvae/trainers.hpp"

#include "sosvae/second_order.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sosvae {

namespace {

const std::vector<std::string> kMethodNames = {"vae",     "svae",  "svae-refit", "vae-refit",
                                               "sos-vae", "sdvae", "sos-dvae",   "missing"};

std::shared_ptr<const std::vector<int>> batch_labels(const LabeledDataset& d,
                                                     const std::vector<std::size_t>& rows) {
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = d.y[rows[i]];
  return std::make_shared<const std::vector<int>>(std::move(y));
}

Tensor batch_rows(const LabeledDataset& d, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::zeros({rows.size(), d.X.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d.X.cols(); ++j) out.at(i, j) = d.X.at(rows[i], j);
  return out;
}

Tensor eps_matrix(Rng& rng, std::size_t rows, std::size_t latent) {
  return Tensor::matrix(rows, latent, rng.normal_vec(rows * latent));
}

void check_finite(double v, const TrainConfig& cfg, int epoch, const char* what) {
  if (!std::isfinite(v))
    throw std::runtime_error("non-finite " + std::string(what) + " (method " +
                             method_name(cfg.method) + ", epoch " + std::to_string(epoch) +
                             "); aborting");
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

// Per-sample-mean deterministic terms at the encoder mean (eps = 0), summed
// over row chunks so evaluation memory stays bounded.
struct EvalTerms {
  double recon = 0.0, prior_kl = 0.0, supervised = 0.0, coupling_kl = 0.0;
};

EvalTerms eval_terms(const ParamSet& dec, const DecoderArch& da, const EncoderStack& enc,
                     const ParamSet* cls, const EncoderStack* enc2, const LabeledDataset& data,
                     int full_dim) {
  EvalTerms sums;
  const std::size_t chunk = 512;
  auto observed = std::make_shared<const std::vector<int>>(enc.mask.observed);
  const bool masked = !enc.mask.full(full_dim);
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    std::vector<std::size_t> rows(std::min(chunk, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    Tensor Xb = batch_rows(data, rows);

    Graph g;
    Var x = g.constant(Xb);
    VarMap dv = param_constants(g, dec);
    VarMap e1 = param_constants(g, enc.params);
    DiagGaussianVars q1 = encode(e1, x, enc.arch, enc.prefix);
    Var pre = decode_pre(dv, q1.mean, da);  // s = mean
    Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, da.head)
                       : recon_log_lik(pre, x, da.head);
    sums.recon += sum(recon).value().scalar_value();
    sums.prior_kl += sum(kl_to_standard(q1)).value().scalar_value();

    if (cls) {
      const EncoderStack& pe = enc2 ? *enc2 : enc;
      VarMap e2 = enc2 ? param_constants(g, enc2->params) : e1;
      DiagGaussianVars q2 = enc2 ? encode(e2, x, pe.arch, pe.prefix) : q1;
      VarMap cv = param_constants(g, *cls);
      Var ce = softmax_cross_entropy(classify_logits(cv, q2.mean), batch_labels(data, rows));
      sums.supervised -= sum(ce).value().scalar_value();
      if (enc2) sums.coupling_kl += sum(kl_between(q2, q1)).value().scalar_value();
    }
  }
  return sums;
}

LrSchedule schedule(double base, const DecayConfig& d) {
  return LrSchedule{base, d.epoch, d.factor, d.enabled};
}

// ---- single-encoder family (vae / svae / sos-vae) ---------------------------

ModelBundle train_single(const LabeledDataset& data, const TrainConfig& cfg) {
  const std::size_t n = data.size();
  const int p = static_cast<int>(data.dim());

  ModelBundle b;
  b.method = cfg.method;
  b.config = cfg;
  b.dec_arch = DecoderArch{cfg.decoder, cfg.latent, cfg.hidden, p, cfg.head};
  b.cls_arch = ClassifierArch{cfg.latent, data.classes};

  EncoderArch ea{p, cfg.hidden, cfg.latent};
  Rng enc_rng = Rng::stream(cfg.seed, "init/enc");
  Rng dec_rng = Rng::stream(cfg.seed, "init/dec");
  b.pred_enc.push_back(EncoderStack{ea, init_encoder(ea, enc_rng, "enc"),
                                    ExperimentMask::all(p), "enc"});
  b.decoder = init_decoder(b.dec_arch, dec_rng);
  const bool supervised = cfg.method != Method::Vae;
  if (supervised) {
    Rng cls_rng = Rng::stream(cfg.seed, "init/cls");
    b.classifier = init_classifier(b.cls_arch, cls_rng);
  }

  ParamSet& enc = b.pred_enc[0].params;
  Adam adam;
  LrSchedule alpha_s = schedule(cfg.alpha, cfg.decay);
  LrSchedule beta_s = schedule(cfg.beta_base(), cfg.decay);
  const bool sos = cfg.method == Method::SosVae;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Timer timer;
    const double a = alpha_s.at(epoch);
    const double be = beta_s.at(epoch);
    Rng eps_rng = Rng::stream(cfg.seed, "eps/" + std::to_string(epoch) + "/0");
    double batch_obj = 0.0;
    auto bs = batches(n, std::min<std::size_t>(cfg.batch, n), cfg.seed, epoch, 0);

    for (const auto& rows : bs) {
      Tensor Xb = batch_rows(data, rows);
      Tensor Eb = eps_matrix(eps_rng, rows.size(), cfg.latent);
      auto yb = batch_labels(data, rows);

      if (cfg.method == Method::Svae && cfg.lambda > 0) {
        // joint ascent of the full objective
        Graph g;
        VarMap dv = param_leaves(g, b.decoder);
        VarMap ev = param_leaves(g, enc);
        VarMap cv = param_leaves(g, b.classifier);
        LossVars lv = svae_loss(dv, ev, cv, g.constant(Xb), yb, g.constant(Eb), cfg.lambda,
                                b.dec_arch, ea);
        double total = lv.total.value().scalar_value();
        check_finite(total, cfg, epoch, "training loss");
        batch_obj += total;
        Var loss = neg(lv.total);
        GradMap gd = grad_values(gradient(loss, dv));
        GradMap ge = grad_values(gradient(loss, ev));
        GradMap gc = grad_values(gradient(loss, cv));
        adam.step(b.decoder, gd, a);
        adam.step(enc, ge, a);
        adam.step(b.classifier, gc, a);
        continue;
      }

      // vae, sos-vae, and svae with lambda = 0 share the generative step;
      // steps 1-2 take both gradients at the pre-update values.
      ParamSet phi_pre = enc;
      double gen_total;
      {
        Graph g;
        VarMap dv = param_leaves(g, b.decoder);
        VarMap ev = param_leaves(g, enc);
        LossVars lv = elbo(dv, ev, g.constant(Xb), g.constant(Eb), b.dec_arch, ea);
        gen_total = lv.total.value().scalar_value();
        check_finite(gen_total, cfg, epoch, "training loss");
        Var loss = neg(lv.total);
        GradMap gd = grad_values(gradient(loss, dv));
        GradMap ge = grad_values(gradient(loss, ev));
        adam.step(b.decoder, gd, a);
        for (int u = 0; u < (sos ? cfg.inner_updates : 1); ++u) {
          if (u > 0) {
            // extra inner updates re-linearize the generative loss
            Graph g2;
            VarMap dv2 = param_constants(g2, b.decoder);
            VarMap ev2 = param_leaves(g2, enc);
            LossVars lv2 = elbo(dv2, ev2, g2.constant(Xb), g2.constant(Eb), b.dec_arch, ea);
            ge = grad_values(gradient(neg(lv2.total), ev2));
          }
          adam.step(enc, ge, a);
        }
      }
      batch_obj += gen_total;

      if (!sos) continue;

      // step 3: classifier ascent on the updated encoder's latent sample
      if (cfg.lambda > 0) {
        Graph g;
        VarMap ev = param_constants(g, enc);
        VarMap cv = param_leaves(g, b.classifier);
        DiagGaussianVars q = encode(ev, g.constant(Xb), ea, "enc");
        Var s = reparameterize(q, g.constant(Eb));
        Var sup = neg(mean(softmax_cross_entropy(classify_logits(cv, s), yb)));
        double sup_v = sup.value().scalar_value();
        check_finite(sup_v, cfg, epoch, "supervised loss");
        batch_obj += cfg.lambda * sup_v;
        adam.step(b.classifier, grad_values(gradient(neg(scale(sup, cfg.lambda)), cv)), a);
      }

      // step 4: second-order decoder update through the recorded encoder
      // update, rebuilt on the post-step-1 decoder values.
      if (cfg.second_order && be != 0.0 && cfg.lambda > 0) {
        const DecoderArch da = b.dec_arch;
        const ParamSet cls_plus = b.classifier;
        LossBuilder inner = [&](Graph& g, const VarMap& th, const VarMap& ph) {
          return elbo(th, ph, g.constant(Xb), g.constant(Eb), da, ea).total;
        };
        LossBuilder outer = [&](Graph& g, const VarMap& th, const VarMap& ph_plus) {
          (void)th;
          DiagGaussianVars q = encode(ph_plus, g.constant(Xb), ea, "enc");
          Var s = reparameterize(q, g.constant(Eb));
          VarMap cv = param_constants(g, cls_plus);
          return scale(neg(mean(softmax_cross_entropy(classify_logits(cv, s), yb))), cfg.lambda);
        };
        GradMap hyper = grad_through_update(inner, outer, b.decoder, phi_pre, a,
                                            SecondOrderBackend::Exact, cfg.inner_updates);
        for (auto& [name, t] : b.decoder) {
          const Tensor& h = hyper.at(name);
          for (std::size_t i = 0; i < t.size(); ++i) {
            t.data()[i] += be * h.data()[i];
            check_finite(t.data()[i], cfg, epoch, "second-order update");
          }
        }
      }
    }

    EvalTerms sums = eval_terms(b.decoder, b.dec_arch, b.pred_enc[0],
                                supervised ? &b.classifier : nullptr, nullptr, data, p);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.recon = sums.recon / static_cast<double>(n);
    rec.prior_kl = sums.prior_kl / static_cast<double>(n);
    rec.supervised = sums.supervised / static_cast<double>(n);
    rec.objective = rec.recon - rec.prior_kl + cfg.lambda * rec.supervised;
    rec.batch_objective = batch_obj / static_cast<double>(bs.size());
    rec.wall_ms = timer.ms();
    check_finite(rec.objective, cfg, epoch, "epoch objective");
    b.history.push_back(rec);
  }

  b.adam_m = adam.first_moments();
  b.adam_v = adam.second_moments();
  b.adam_t = adam.counts();
  return b;
}

}  // namespace

// ---- multi-encoder family (sdvae / sos-dvae / missing) ----------------------

ModelBundle train_missing(const std::vector<MaskedDataset>& experiments, int full_dim,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (experiments.empty()) throw std::invalid_argument("train_missing: no experiments");
  const bool sos_rule = cfg.method != Method::Sdvae;  // sdvae = no second-order step
  int classes = experiments[0].data.classes;
  for (const auto& e : experiments) {
    if (e.data.size() == 0) throw std::invalid_argument("train_missing: empty dataset");
    if (e.data.classes != classes)
      throw std::invalid_argument("train_missing: inconsistent class counts");
    if (e.data.dim() != e.mask.observed.size())
      throw std::invalid_argument("train_missing: dataset dim does not match mask");
    for (int c : e.mask.observed)
      if (c < 0 || c >= full_dim)
        throw std::invalid_argument("train_missing: mask index outside full space");
  }

  ModelBundle b;
  b.method = cfg.method;
  b.config = cfg;
  b.dec_arch = DecoderArch{cfg.decoder, cfg.latent, cfg.hidden, full_dim, cfg.head};
  b.cls_arch = ClassifierArch{cfg.latent, classes};
  {
    Rng dec_rng = Rng::stream(cfg.seed, "init/dec");
    b.decoder = init_decoder(b.dec_arch, dec_rng);
    Rng cls_rng = Rng::stream(cfg.seed, "init/cls");
    b.classifier = init_classifier(b.cls_arch, cls_rng);
  }

  const std::size_t T = experiments.size();
  for (std::size_t t = 0; t < T; ++t) {
    EncoderArch ea{static_cast<int>(experiments[t].data.dim()), cfg.hidden, cfg.latent};
    std::string p1 = "enc1." + std::to_string(t);
    std::string p2 = "enc2." + std::to_string(t);
    Rng r1 = Rng::stream(cfg.seed, "init/" + p1);
    Rng r2 = Rng::stream(cfg.seed, "init/" + p2);
    b.gen_enc.push_back(EncoderStack{ea, init_encoder(ea, r1, p1), experiments[t].mask, p1});
    b.pred_enc.push_back(EncoderStack{ea, init_encoder(ea, r2, p2), experiments[t].mask, p2});
  }

  Adam adam;
  LrSchedule alpha_s = schedule(cfg.alpha, cfg.decay);
  LrSchedule beta_s = schedule(cfg.beta_base(), cfg.decay);
  std::size_t total_n = 0;
  for (const auto& e : experiments) total_n += e.data.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Timer timer;
    const double a = alpha_s.at(epoch);
    const double be = beta_s.at(epoch);
    double batch_obj = 0.0;
    std::size_t batch_count = 0;

    for (std::size_t t = 0; t < T; ++t) {
      const LabeledDataset& data = experiments[t].data;
      EncoderStack& s1 = b.gen_enc[t];
      EncoderStack& s2 = b.pred_enc[t];
      auto observed = std::make_shared<const std::vector<int>>(s1.mask.observed);
      const bool masked = !s1.mask.full(full_dim);
      Rng eps_rng =
          Rng::stream(cfg.seed, "eps/" + std::to_string(epoch) + "/" + std::to_string(t));
      auto bs = batches(data.size(), std::min<std::size_t>(cfg.batch, data.size()), cfg.seed,
                        epoch, static_cast<int>(t));

      for (const auto& rows : bs) {
        Tensor Xb = batch_rows(data, rows);
        Tensor Eb = eps_matrix(eps_rng, rows.size(), cfg.latent);
        auto yb = batch_labels(data, rows);
        ++batch_count;

        // steps 1-2: decoder and generative encoder ascend the masked ELBO
        ParamSet phi1_pre = s1.params;
        {
          Graph g;
          Var x = g.constant(Xb);
          VarMap dv = param_leaves(g, b.decoder);
          VarMap e1 = param_leaves(g, s1.params);
          DiagGaussianVars q1 = encode(e1, x, s1.arch, s1.prefix);
          Var s = reparameterize(q1, g.constant(Eb));
          Var pre = decode_pre(dv, s, b.dec_arch);
          Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, b.dec_arch.head)
                             : recon_log_lik(pre, x, b.dec_arch.head);
          Var total = sub(mean(recon), mean(kl_to_standard(q1)));
          double tv = total.value().scalar_value();
          check_finite(tv, cfg, epoch, "generative loss");
          batch_obj += tv;
          Var loss = neg(total);
          GradMap gd = grad_values(gradient(loss, dv));
          GradMap g1 = grad_values(gradient(loss, e1));
          adam.step(b.decoder, gd, a);
          adam.step(s1.params, g1, a);
        }

        // steps 3-4: classifier and predictive encoder ascend
        // lambda * log p(y|s2) - mu * KL(q2 || q1+), with q1+ frozen.
        ParamSet psi_pre = b.classifier;
        {
          auto [m1, lv1] = encode_batch(s1.params, s1.arch, Xb, s1.prefix);
          Graph g;
          Var x = g.constant(Xb);
          VarMap cv = param_leaves(g, b.classifier);
          VarMap e2 = param_leaves(g, s2.params);
          DiagGaussianVars q1p{g.constant(m1), g.constant(lv1)};
          DiagGaussianVars q2 = encode(e2, x, s2.arch, s2.prefix);
          Var sv = reparameterize(q2, g.constant(Eb));
          Var sup = neg(mean(softmax_cross_entropy(classify_logits(cv, sv), yb)));
          Var coup = mean(kl_between(q2, q1p));
          Var obj = sub(scale(sup, cfg.lambda), scale(coup, cfg.mu));
          double ov = obj.value().scalar_value();
          check_finite(ov, cfg, epoch, "supervised loss");
          batch_obj += ov;
          Var loss = neg(obj);
          GradMap gc = grad_values(gradient(loss, cv));
          GradMap g2m = grad_values(gradient(loss, e2));
          adam.step(b.classifier, gc, a);
          adam.step(s2.params, g2m, a);
        }

        // step 5: second-order decoder update through phi1's recorded update,
        // on the post-step-1 decoder values.
        if (sos_rule && cfg.second_order && be != 0.0 && cfg.lambda > 0) {
          const DecoderArch da = b.dec_arch;
          const EncoderArch ea = s1.arch;
          const std::string prefix = s1.prefix;
          LossBuilder inner = [&](Graph& g, const VarMap& th, const VarMap& ph) {
            Var x = g.constant(Xb);
            DiagGaussianVars q1 = encode(ph, x, ea, prefix);
            Var s = reparameterize(q1, g.constant(Eb));
            Var pre = decode_pre(th, s, da);
            Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, da.head)
                               : recon_log_lik(pre, x, da.head);
            return sub(mean(recon), mean(kl_to_standard(q1)));
          };
          LossBuilder outer = [&](Graph& g, const VarMap& th, const VarMap& ph_plus) {
            (void)th;
            DiagGaussianVars q = encode(ph_plus, g.constant(Xb), ea, prefix);
            Var s = reparameterize(q, g.constant(Eb));
            VarMap cv = param_constants(g, psi_pre);
            return scale(neg(mean(softmax_cross_entropy(classify_logits(cv, s), yb))),
                         cfg.lambda);
          };
          GradMap hyper = grad_through_update(inner, outer, b.decoder, phi1_pre, a,
                                              SecondOrderBackend::Exact, cfg.inner_updates);
          for (auto& [name, tsr] : b.decoder) {
            const Tensor& h = hyper.at(name);
            for (std::size_t i = 0; i < tsr.size(); ++i) {
              tsr.data()[i] += be * h.data()[i];
              check_finite(tsr.data()[i], cfg, epoch, "second-order update");
            }
          }
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    EvalTerms sums;
    for (std::size_t t = 0; t < T; ++t) {
      EvalTerms et = eval_terms(b.decoder, b.dec_arch, b.gen_enc[t], &b.classifier,
                                &b.pred_enc[t], experiments[t].data, full_dim);
      sums.recon += et.recon;
      sums.prior_kl += et.prior_kl;
      sums.supervised += et.supervised;
      sums.coupling_kl += et.coupling_kl;
    }
    rec.recon = sums.recon / static_cast<double>(total_n);
    rec.prior_kl = sums.prior_kl / static_cast<double>(total_n);
    rec.supervised = sums.supervised / static_cast<double>(total_n);
    rec.coupling_kl = sums.coupling_kl / static_cast<double>(total_n);
    rec.objective =
        rec.recon - rec.prior_kl + cfg.lambda * rec.supervised - cfg.mu * rec.coupling_kl;
    rec.batch_objective = batch_obj / static_cast<double>(batch_count);
    rec.wall_ms = timer.ms();
    check_finite(rec.objective, cfg, epoch, "epoch objective");
    b.history.push_back(rec);
  }

  b.adam_m = adam.first_moments();
  b.adam_v = adam.second_moments();
  b.adam_t = adam.counts();
  return b;
}

EncoderStack refit_encoder(const ModelBundle& bundle, const LabeledDataset& data,
                           const ExperimentMask& mask, int epochs, const std::string& salt) {
  if (data.dim() != mask.observed.size())
    throw std::invalid_argument("refit_encoder: data dim does not match mask");
  const TrainConfig& cfg = bundle.config;
  const int full_dim = bundle.dec_arch.output_dim;
  for (int c : mask.observed)
    if (c < 0 || c >= full_dim)
      throw std::invalid_argument("refit_encoder: mask index outside decoder space");

  EncoderArch ea{static_cast<int>(data.dim()), cfg.hidden, cfg.latent};
  if (ea.latent_dim != bundle.dec_arch.latent_dim)
    throw std::invalid_argument("refit_encoder: latent dim mismatch with decoder");
  const std::uint64_t seed = Rng::derive_seed(cfg.seed, salt);
  Rng init_rng = Rng::stream(seed, "init/enc");
  ParamSet params = init_encoder(ea, init_rng, "enc");

  auto observed = std::make_shared<const std::vector<int>>(mask.observed);
  const bool masked = !mask.full(full_dim);
  Adam adam;
  LrSchedule alpha_s = schedule(cfg.alpha, cfg.decay);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double a = alpha_s.at(epoch);
    Rng eps_rng = Rng::stream(seed, "eps/" + std::to_string(epoch) + "/0");
    auto bs = batches(data.size(), std::min<std::size_t>(cfg.batch, data.size()), seed, epoch, 0);
    for (const auto& rows : bs) {
      Tensor Xb = batch_rows(data, rows);
      Tensor Eb = eps_matrix(eps_rng, rows.size(), cfg.latent);
      Graph g;
      Var x = g.constant(Xb);
      VarMap dv = param_constants(g, bundle.decoder);
      VarMap ev = param_leaves(g, params);
      DiagGaussianVars q = encode(ev, x, ea, "enc");
      Var s = reparameterize(q, g.constant(Eb));
      Var pre = decode_pre(dv, s, bundle.dec_arch);
      Var recon = masked ? masked_recon_log_lik(g, pre, x, observed, bundle.dec_arch.head)
                         : recon_log_lik(pre, x, bundle.dec_arch.head);
      Var total = sub(mean(recon), mean(kl_to_standard(q)));
      check_finite(total.value().scalar_value(), cfg, epoch, "refit loss");
      adam.step(params, grad_values(gradient(neg(total), ev)), a);
    }
  }
  return EncoderStack{ea, std::move(params), mask, "enc"};
}

void fit_classifier(ModelBundle& bundle, const LabeledDataset& data, int epochs,
                    const std::string& salt) {
  const TrainConfig& cfg = bundle.config;
  const EncoderStack& enc = bundle.pred_enc.at(0);
  const std::uint64_t seed = Rng::derive_seed(cfg.seed, salt);
  Adam adam;
  LrSchedule alpha_s = schedule(cfg.alpha, cfg.decay);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double a = alpha_s.at(epoch);
    Rng eps_rng = Rng::stream(seed, "eps/" + std::to_string(epoch) + "/0");
    auto bs = batches(data.size(), std::min<std::size_t>(cfg.batch, data.size()), seed, epoch, 0);
    for (const auto& rows : bs) {
      Tensor Xb = batch_rows(data, rows);
      Tensor Eb = eps_matrix(eps_rng, rows.size(), cfg.latent);
      auto yb = batch_labels(data, rows);
      Graph g;
      VarMap ev = param_constants(g, enc.params);
      VarMap cv = param_leaves(g, bundle.classifier);
      DiagGaussianVars q = encode(ev, g.constant(Xb), enc.arch, enc.prefix);
      Var s = reparameterize(q, g.constant(Eb));
      Var sup = neg(mean(softmax_cross_entropy(classify_logits(cv, s), yb)));
      check_finite(sup.value().scalar_value(), cfg, epoch, "classifier loss");
      adam.step(bundle.classifier, grad_values(gradient(neg(sup), cv)), a);
    }
  }
}

std::string method_name(Method m) { return kMethodNames[static_cast<int>(m)]; }

const std::vector<std::string>& method_names() { return kMethodNames; }

Method parse_method(const std::string& name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i)
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  std::string valid;
  for (const auto& m : kMethodNames) valid += (valid.empty() ? "" : ", ") + m;
  throw std::invalid_argument("unknown method \"" + name + "\"; valid methods: " + valid);
}

void TrainConfig::validate() const {
  if (lambda < 0 || mu < 0) throw std::invalid_argument("config: lambda and mu must be >= 0");
  if (alpha <= 0) throw std::invalid_argument("config: alpha must be > 0");
  if (epochs < 1 || batch < 1) throw std::invalid_argument("config: epochs and batch must be >= 1");
  if (latent < 1 || hidden < 1) throw std::invalid_argument("config: latent and hidden must be >= 1");
  if (inner_updates < 1) throw std::invalid_argument("config: inner_updates must be >= 1");
}

ModelBundle train(const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (static_cast<std::size_t>(cfg.batch) > data.size())
    throw std::invalid_argument("train: batch size exceeds dataset size");
  for (int label : data.y)
    if (label < 0 || label >= data.classes)
      throw std::invalid_argument("train: label out of range");

  switch (cfg.method) {
    case Method::Vae:
    case Method::Svae:
    case Method::SosVae:
      return train_single(data, cfg);

    case Method::VaeRefit: {
      TrainConfig sub = cfg;
      sub.method = Method::Vae;
      ModelBundle b = train_single(data, sub);
      b.method = Method::VaeRefit;
      b.config = cfg;
      Rng cls_rng = Rng::stream(cfg.seed, "init/cls");
      b.classifier = init_classifier(b.cls_arch, cls_rng);
      fit_classifier(b, data, cfg.refit_epochs_or_default(), "clsfit");
      return b;
    }

    case Method::SvaeRefit: {
      TrainConfig sub = cfg;
      sub.method = Method::Svae;
      ModelBundle b = train_single(data, sub);
      b.method = Method::SvaeRefit;
      b.config = cfg;
      // Encoder refit on the generative objective only; decoder and
      // classifier stay frozen, prediction then flows through the refit
      // encoder.
      EncoderStack refit = refit_encoder(b, data, ExperimentMask::all(data.dim()),
                                         cfg.refit_epochs_or_default(), "refit");
      b.pred_enc[0] = std::move(refit);
      return b;
    }

    case Method::Sdvae:
    case Method::SosDvae: {
      std::vector<MaskedDataset> exps;
      exps.push_back(MaskedDataset{data, ExperimentMask::all(data.dim())});
      return train_missing(exps, static_cast<int>(data.dim()), cfg);
    }

    case Method::Missing:
      throw std::invalid_argument("train: method 'missing' needs train_missing(experiments, ...)");
  }
  throw std::logic_error("train: unhandled method");
}

}  // namespace sosvae
