#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sosvae/distributions.hpp"
#include "sosvae/rng.hpp"
#include "sosvae/tensor.hpp"

namespace sosvae {

struct LabeledDataset {
  Tensor X;                // N x p
  std::vector<int> y;      // labels in [0, classes)
  std::string name;
  int classes = 0;
  double value_range = 1.0;  // dynamic range of features (for PSNR/SSIM)
  int image_rows = 0, image_cols = 0;  // nonzero when rows are images

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return X.rank() == 2 ? X.cols() : 0; }
  Tensor row(std::size_t i) const;
  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
};

// Deterministic head/tail split; shuffle first with the dataset generator's
// seed if order matters.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d,
                                                        double train_fraction);

// ---- linear-Gaussian testbed with analytic posterior ----------------------
//
// s ~ N(0, I), x = A s + sigma * noise, label from the w-projection of s.
// The factory builds A with orthonormal columns scaled per latent, putting
// most of the x-variance on nuisance latents and a small share on the
// label-carrying latent; this is the regime where the supervised encoder
// bias is large.
struct LinearGaussianSpec {
  Tensor A;           // p x L_true, full column rank
  double sigma = 1.0;
  Tensor w;           // L_true, label weight vector on latents
  double label_noise = 0.0;
  int classes = 2;
};

LinearGaussianSpec make_biased_spec(int p, int l_true, int classes, double nuisance_ratio,
                                    double sigma, double label_noise, std::uint64_t seed);

LabeledDataset gen_linear_gaussian(const LinearGaussianSpec& spec, std::size_t n,
                                   std::uint64_t seed);

// Exact posterior p(s | x): cov = (I + A^T A / sigma^2)^-1, mean = cov A^T x / sigma^2.
struct FullGaussian {
  Tensor mean;  // L
  Tensor cov;   // L x L
  DiagGaussian diagonal() const;  // diagonal comparison mode
};

FullGaussian analytic_posterior(const LinearGaussianSpec& spec, const Tensor& x);
// KL(q || p) between a diagonal Gaussian and a full-covariance Gaussian.
double kl_diag_to_full(const DiagGaussian& q, const FullGaussian& p);

// ---- spectral-feature surrogate --------------------------------------------
//
// Stand-in for band power/coherence features: channel-block-major layout,
// [power per channel x F frequencies, then coherence per unordered channel
// pair x F]. Features are positive mixtures of nonnegative templates; the
// class label is the dominant class-template activation.
struct FeatureLayout {
  int channels = 0;
  int freqs = 0;

  int dim() const { return (channels + channels * (channels - 1) / 2) * freqs; }
  int power_offset(int channel) const { return channel * freqs; }
  int coherence_offset(int pair_index) const { return (channels + pair_index) * freqs; }
  // unordered pairs (a, b), a < b, in lexicographic order
  std::vector<std::pair<int, int>> pairs() const;
  // every coordinate touching one of the given channels (power + coherence)
  std::vector<int> channel_coords(const std::vector<int>& chans) const;
  std::string to_json() const;  // layout manifest
};

// Picks the largest channel count <= 8 whose block count divides p.
FeatureLayout layout_for_dim(int p);

struct SurrogateData {
  LabeledDataset data;
  FeatureLayout layout;
  Tensor class_templates;  // C x p, the planted class factors
};

SurrogateData gen_spectral_surrogate(int p, int classes, std::size_t n, std::uint64_t seed);

// ---- IDX ingestion ----------------------------------------------------------

// Canonical IDX pair (image magic 2051, label magic 2049); pixels scaled to
// [0, 1]. Throws on bad magic, truncated payload, or image/label count
// mismatch.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// ---- missing-data masks ------------------------------------------------------

struct ExperimentMask {
  int id = 0;
  std::vector<int> observed;  // sorted unique indices into [0, full_dim)

  bool full(int full_dim) const { return static_cast<int>(observed.size()) == full_dim; }
  static ExperimentMask all(int full_dim, int id = 0);
};

ExperimentMask mask_without_channels(const FeatureLayout& layout,
                                     const std::vector<int>& removed_channels, int id = 0);
ExperimentMask random_mask(int full_dim, double observed_fraction, std::uint64_t seed, int id);

// Restrict rows to the observed coordinates of a mask.
LabeledDataset apply_mask(const LabeledDataset& d, const ExperimentMask& mask);

// ---- batching ---------------------------------------------------------------

// Seeded per-epoch shuffle; every row appears exactly once, last batch may be
// short. `tag` separates streams when several datasets batch under one seed.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, int epoch, int tag = 0);

}  // namespace sosvae
