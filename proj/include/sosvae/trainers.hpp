#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sosvae/data.hpp"
#include "sosvae/networks.hpp"
#include "sosvae/objectives.hpp"

namespace sosvae {

enum class Method { Vae, Svae, SvaeRefit, VaeRefit, SosVae, Sdvae, SosDvae, Missing };

std::string method_name(Method m);
Method parse_method(const std::string& name);  // throws listing valid tags
const std::vector<std::string>& method_names();

struct DecayConfig {
  int epoch = 50;
  double factor = 0.5;
  bool enabled = true;
};

struct TrainConfig {
  Method method = Method::Vae;
  double lambda = 0.0;
  double mu = 0.0;
  double alpha = 1e-3;
  double beta = -1.0;  // second-order rate; < 0 means "same as alpha"
  int epochs = 10;
  int batch = 128;
  int latent = 20;
  int hidden = 512;
  DecoderKind decoder = DecoderKind::Mlp;
  Likelihood head = Likelihood::Gaussian;
  std::uint64_t seed = 0;
  DecayConfig decay;
  int inner_updates = 1;      // encoder updates per batch (paper uses 1)
  bool second_order = true;   // disables the second-order decoder step when false
  int refit_epochs = -1;      // refit phases; < 0 means "same as epochs"

  double beta_base() const { return beta < 0 ? alpha : beta; }
  int refit_epochs_or_default() const { return refit_epochs < 0 ? epochs : refit_epochs; }
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  // End-of-epoch deterministic terms over the training set, at the encoder
  // mean (eps = 0), averaged per sample.
  double recon = 0.0;
  double prior_kl = 0.0;
  double supervised = 0.0;
  double coupling_kl = 0.0;
  double objective = 0.0;
  // Mean of the per-batch optimized totals seen during the epoch.
  double batch_objective = 0.0;
  double wall_ms = 0.0;
};

struct EncoderStack {
  EncoderArch arch;
  ParamSet params;
  ExperimentMask mask;       // observed coordinates this encoder consumes
  std::string prefix = "enc";  // parameter-name prefix inside `params`
};

struct ModelBundle {
  Method method = Method::Vae;
  std::vector<EncoderStack> pred_enc;  // prediction-path encoders (phi, or phi2 per experiment)
  std::vector<EncoderStack> gen_enc;   // generative-path encoders (phi1); empty when shared
  DecoderArch dec_arch;
  ParamSet decoder;
  ClassifierArch cls_arch;
  ParamSet classifier;
  TrainConfig config;
  std::vector<EpochRecord> history;
  std::map<std::string, Tensor> adam_m, adam_v;
  std::map<std::string, long> adam_t;

  const EncoderStack& generative_encoder(std::size_t t = 0) const {
    return gen_enc.empty() ? pred_enc.at(t) : gen_enc.at(t);
  }
  std::size_t experiments() const { return pred_enc.size(); }
};

struct MaskedDataset {
  LabeledDataset data;   // rows already restricted to mask.observed
  ExperimentMask mask;
};

// Dispatch on cfg.method; handles every single-dataset method (vae, svae,
// vae-refit, svae-refit, sos-vae, sdvae, sos-dvae). sdvae / sos-dvae run as a
// single full-mask experiment of the multi-encoder driver.
ModelBundle train(const LabeledDataset& data, const TrainConfig& cfg);

// Multi-encoder missing-data driver: shared decoder/classifier, per-experiment
// encoder pairs consuming only observed coordinates. cfg.method selects the
// sdvae (no second-order step) or sos-dvae update rule.
ModelBundle train_missing(const std::vector<MaskedDataset>& experiments, int full_dim,
                          const TrainConfig& cfg);

// Fresh encoder maximizing the generative objective with the bundle's decoder
// frozen. `data` rows must match mask.observed. All randomness derives from
// derive_seed(cfg.seed, salt), so distinct phases never share draws.
EncoderStack refit_encoder(const ModelBundle& bundle, const LabeledDataset& data,
                           const ExperimentMask& mask, int epochs, const std::string& salt);

// Classifier fit on frozen latents (the cutting-the-feedback baseline phase).
void fit_classifier(ModelBundle& bundle, const LabeledDataset& data, int epochs,
                    const std::string& salt);

}  // namespace sosvae
