#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sosvae/data.hpp"
#include "sosvae/trainers.hpp"

namespace sosvae {

// Dataset block of a run-config file: a generator spec or an IDX file pair.
struct DatasetSpec {
  std::string name;  // linear_gaussian | surrogate | idx

  // linear_gaussian
  int p = 30;
  int l_true = 5;
  double sigma = 1.0;
  double nuisance_ratio = 15.0;
  double label_noise = 0.1;

  // shared
  int classes = 3;
  std::size_t n = 5000;
  std::uint64_t seed = 1;
  double split = 0.8;  // train fraction

  // idx
  std::string images, labels;
  std::size_t limit = 0;  // keep the first `limit` rows (0 = all)

  // surrogate dimension reuses `p`
};

struct MissingSpec {
  int experiments = 0;  // 0 = not a missing-data run
  double observed_fraction = 0.8;
  std::uint64_t seed = 13;
};

struct RunConfig {
  DatasetSpec dataset;
  TrainConfig training;
  std::vector<std::string> metrics = {"acc", "auc"};
  std::vector<std::uint64_t> seeds;  // sweep / fold seeds; defaults to {training.seed}
  int folds = 1;
  MissingSpec missing;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

struct DatasetBundle {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<LinearGaussianSpec> oracle;
  std::optional<FeatureLayout> layout;
};

DatasetBundle materialize_dataset(const DatasetSpec& spec);

// Round-robin partition of rows into per-experiment masked views; experiment
// masks come from random_mask(p, observed_fraction, seed, t).
std::vector<MaskedDataset> build_missing_experiments(const LabeledDataset& data,
                                                     const MissingSpec& spec);

}  // namespace sosvae
