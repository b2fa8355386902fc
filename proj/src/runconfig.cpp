#include "sosvae/runconfig.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace sosvae {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

DatasetSpec parse_dataset(const json& j) {
  DatasetSpec d;
  d.name = j.at("name").get<std::string>();
  if (d.name != "linear_gaussian" && d.name != "surrogate" && d.name != "idx")
    throw std::invalid_argument("config: unknown dataset \"" + d.name +
                                "\" (expected linear_gaussian, surrogate or idx)");
  d.p = get_or(j, "p", d.p);
  d.l_true = get_or(j, "l_true", d.l_true);
  d.classes = get_or(j, "classes", d.classes);
  d.sigma = get_or(j, "sigma", d.sigma);
  d.nuisance_ratio = get_or(j, "nuisance_ratio", d.nuisance_ratio);
  d.label_noise = get_or(j, "label_noise", d.label_noise);
  d.n = get_or(j, "n", d.n);
  d.seed = get_or(j, "seed", d.seed);
  d.split = get_or(j, "split", d.split);
  d.images = get_or<std::string>(j, "images", "");
  d.labels = get_or<std::string>(j, "labels", "");
  d.limit = get_or(j, "limit", d.limit);
  if (d.name == "idx" && (d.images.empty() || d.labels.empty()))
    throw std::invalid_argument("config: idx dataset needs \"images\" and \"labels\" paths");
  return d;
}

TrainConfig parse_training(const json& model, const json& training) {
  TrainConfig c;
  c.method = parse_method(model.at("method").get<std::string>());
  std::string dec = get_or<std::string>(model, "decoder", "mlp");
  if (dec != "mlp" && dec != "nmf")
    throw std::invalid_argument("config: decoder must be \"mlp\" or \"nmf\"");
  c.decoder = dec == "nmf" ? DecoderKind::Nmf : DecoderKind::Mlp;
  std::string head = get_or<std::string>(model, "likelihood", "gaussian");
  if (head != "gaussian" && head != "bernoulli")
    throw std::invalid_argument("config: likelihood must be \"gaussian\" or \"bernoulli\"");
  c.head = head == "bernoulli" ? Likelihood::Bernoulli : Likelihood::Gaussian;
  c.latent = get_or(model, "latent", c.latent);
  c.hidden = get_or(model, "hidden", c.hidden);

  c.lambda = get_or(training, "lambda", c.lambda);
  c.mu = get_or(training, "mu", c.mu);
  c.alpha = get_or(training, "alpha", c.alpha);
  c.beta = get_or(training, "beta", c.beta);
  c.epochs = get_or(training, "epochs", c.epochs);
  c.batch = get_or(training, "batch", c.batch);
  c.seed = get_or(training, "seed", c.seed);
  c.decay.epoch = get_or(training, "decay_epoch", c.decay.epoch);
  c.decay.factor = get_or(training, "decay_factor", c.decay.factor);
  c.decay.enabled = get_or(training, "decay_enabled", c.decay.enabled);
  c.inner_updates = get_or(training, "inner_updates", c.inner_updates);
  c.second_order = get_or(training, "second_order", c.second_order);
  c.refit_epochs = get_or(training, "refit_epochs", c.refit_epochs);
  c.validate();
  return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text);
  RunConfig rc;
  rc.dataset = parse_dataset(j.at("dataset"));
  rc.training = parse_training(j.at("model"), get_or(j, "training", json::object()));

  json eval = get_or(j, "evaluation", json::object());
  rc.metrics = get_or(eval, "metrics", rc.metrics);
  rc.seeds = get_or(eval, "seeds", std::vector<std::uint64_t>{});
  if (rc.seeds.empty()) rc.seeds = {rc.training.seed};
  rc.folds = get_or(eval, "folds", 1);
  if (rc.folds < 1) throw std::invalid_argument("config: folds must be >= 1");

  json missing = get_or(j, "missing", json::object());
  rc.missing.experiments = get_or(missing, "experiments", 0);
  rc.missing.observed_fraction = get_or(missing, "observed_fraction", 0.8);
  rc.missing.seed = get_or(missing, "seed", rc.missing.seed);
  if (rc.training.method == Method::Missing && rc.missing.experiments < 1)
    throw std::invalid_argument("config: method \"missing\" needs missing.experiments >= 1");
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

DatasetBundle materialize_dataset(const DatasetSpec& spec) {
  DatasetBundle out;
  if (spec.name == "linear_gaussian") {
    LinearGaussianSpec lg = make_biased_spec(spec.p, spec.l_true, spec.classes,
                                             spec.nuisance_ratio, spec.sigma, spec.label_noise,
                                             spec.seed);
    LabeledDataset all = gen_linear_gaussian(lg, spec.n, spec.seed);
    auto [train, test] = split_dataset(all, spec.split);
    out.train = std::move(train);
    out.test = std::move(test);
    out.oracle = std::move(lg);
  } else if (spec.name == "surrogate") {
    SurrogateData s = gen_spectral_surrogate(spec.p, spec.classes, spec.n, spec.seed);
    auto [train, test] = split_dataset(s.data, spec.split);
    out.train = std::move(train);
    out.test = std::move(test);
    out.layout = s.layout;
  } else {
    LabeledDataset all = load_idx(spec.images, spec.labels);
    if (spec.limit > 0 && spec.limit < all.size()) {
      std::vector<std::size_t> head(spec.limit);
      std::iota(head.begin(), head.end(), 0);
      all = all.subset(head);
    }
    auto [train, test] = split_dataset(all, spec.split);
    out.train = std::move(train);
    out.test = std::move(test);
  }
  return out;
}

std::vector<MaskedDataset> build_missing_experiments(const LabeledDataset& data,
                                                     const MissingSpec& spec) {
  if (spec.experiments < 1)
    throw std::invalid_argument("build_missing_experiments: experiments >= 1 required");
  const int T = spec.experiments;
  std::vector<MaskedDataset> out;
  out.reserve(T);
  for (int t = 0; t < T; ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = static_cast<std::size_t>(t); i < data.size(); i += T) rows.push_back(i);
    ExperimentMask mask =
        random_mask(static_cast<int>(data.dim()), spec.observed_fraction, spec.seed, t);
    LabeledDataset sub = data.subset(rows);
    out.push_back(MaskedDataset{apply_mask(sub, mask), std::move(mask)});
  }
  return out;
}

}  // namespace sosvae
