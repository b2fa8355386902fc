#include "sosvae/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sosvae {

namespace {

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Acklam-style rational approximation of the standard normal quantile,
// accurate to ~1e-9; used only to place label bin edges.
double norm_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("norm_quantile: p in (0,1) required");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

std::uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw std::runtime_error(std::string("idx: truncated ") + what);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Tensor LabeledDataset::row(std::size_t i) const {
  std::vector<double> v(X.cols());
  for (std::size_t j = 0; j < X.cols(); ++j) v[j] = X.at(i, j);
  return Tensor::vec(std::move(v));
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  LabeledDataset out = *this;
  out.X = Tensor::zeros({rows.size(), X.cols()});
  out.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) out.X.at(i, j) = X.at(rows[i], j);
    out.y[i] = y[rows[i]];
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d,
                                                        double train_fraction) {
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw std::invalid_argument("split_dataset: fraction in (0,1] required");
  std::size_t n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(d.size()));
  std::vector<std::size_t> head(n_train), tail(d.size() - n_train);
  std::iota(head.begin(), head.end(), 0);
  std::iota(tail.begin(), tail.end(), n_train);
  return {d.subset(head), d.subset(tail)};
}

LinearGaussianSpec make_biased_spec(int p, int l_true, int classes, double nuisance_ratio,
                                    double sigma, double label_noise, std::uint64_t seed) {
  if (p < l_true || l_true < 1) throw std::invalid_argument("make_biased_spec: need p >= l_true >= 1");
  if (sigma <= 0) throw std::invalid_argument("make_biased_spec: sigma > 0 required");

  // Random orthonormal columns via modified Gram-Schmidt (deterministic).
  Rng rng = Rng::stream(seed, "biased_spec");
  std::vector<std::vector<double>> cols(l_true, std::vector<double>(p));
  for (auto& c : cols)
    for (auto& v : c) v = rng.normal();
  for (int k = 0; k < l_true; ++k) {
    for (int j = 0; j < k; ++j) {
      double dot = 0;
      for (int i = 0; i < p; ++i) dot += cols[k][i] * cols[j][i];
      for (int i = 0; i < p; ++i) cols[k][i] -= dot * cols[j][i];
    }
    double norm = 0;
    for (int i = 0; i < p; ++i) norm += cols[k][i] * cols[k][i];
    norm = std::sqrt(norm);
    if (norm < 1e-8) throw std::runtime_error("make_biased_spec: degenerate basis draw");
    for (int i = 0; i < p; ++i) cols[k][i] /= norm;
  }

  // Column 0 carries the label at a scale `nuisance_ratio` times smaller than
  // the nuisance columns.
  const double nuisance_scale = 3.0;
  const double label_scale = nuisance_scale / nuisance_ratio;
  Tensor A = Tensor::zeros({static_cast<std::size_t>(p), static_cast<std::size_t>(l_true)});
  for (int k = 0; k < l_true; ++k) {
    double s = (k == 0) ? label_scale : nuisance_scale;
    for (int i = 0; i < p; ++i) A.at(i, k) = s * cols[k][i];
  }

  Tensor w = Tensor::zeros({static_cast<std::size_t>(l_true)});
  w.at(0) = 1.0;

  LinearGaussianSpec spec;
  spec.A = std::move(A);
  spec.sigma = sigma;
  spec.w = std::move(w);
  spec.label_noise = label_noise;
  spec.classes = classes;
  return spec;
}

LabeledDataset gen_linear_gaussian(const LinearGaussianSpec& spec, std::size_t n,
                                   std::uint64_t seed) {
  const std::size_t p = spec.A.rows(), l = spec.A.cols();
  if (spec.w.size() != l) throw std::invalid_argument("gen_linear_gaussian: w length mismatch");
  {
    Eigen::Map<const Eigen::MatrixXd> a(spec.A.data().data(), l, p);  // A^T in column-major view
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a.transpose());
    if (static_cast<std::size_t>(lu.rank()) != l)
      throw std::invalid_argument("gen_linear_gaussian: A must have full column rank");
  }

  Rng rng = Rng::stream(seed, "linear_gaussian");
  Tensor X = Tensor::zeros({n, p});
  std::vector<int> y(n);

  // Label bin edges: t = w.s + label_noise * xi is N(0, |w|^2 + label_noise^2);
  // equal-probability bins give uniform marginals for symmetric w.
  double w2 = 0;
  for (std::size_t d = 0; d < l; ++d) w2 += spec.w.at(d) * spec.w.at(d);
  const double t_sd = std::sqrt(w2 + spec.label_noise * spec.label_noise);
  std::vector<double> edges;
  for (int k = 1; k < spec.classes; ++k)
    edges.push_back(t_sd * norm_quantile(static_cast<double>(k) / spec.classes));

  std::vector<double> s(l);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < l; ++d) s[d] = rng.normal();
    for (std::size_t j = 0; j < p; ++j) {
      double v = 0;
      for (std::size_t d = 0; d < l; ++d) v += spec.A.at(j, d) * s[d];
      X.at(i, j) = v + spec.sigma * rng.normal();
    }
    double t = 0;
    for (std::size_t d = 0; d < l; ++d) t += spec.w.at(d) * s[d];
    t += spec.label_noise * rng.normal();
    int label = 0;
    for (double e : edges) label += t > e ? 1 : 0;
    y[i] = label;
  }

  LabeledDataset out;
  out.X = std::move(X);
  out.y = std::move(y);
  out.name = "linear_gaussian";
  out.classes = spec.classes;
  out.value_range = 1.0;
  return out;
}

DiagGaussian FullGaussian::diagonal() const {
  std::size_t l = mean.size();
  Tensor lv = Tensor::zeros({l});
  for (std::size_t d = 0; d < l; ++d) lv.at(d) = std::log(cov.at(d, d));
  return DiagGaussian{mean, std::move(lv)};
}

FullGaussian analytic_posterior(const LinearGaussianSpec& spec, const Tensor& x) {
  const std::size_t p = spec.A.rows(), l = spec.A.cols();
  if (x.size() != p) throw std::invalid_argument("analytic_posterior: x dim mismatch");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> A(spec.A.data().data(), p, l);
  Eigen::Map<const Eigen::VectorXd> xv(x.data().data(), p);
  const double inv_s2 = 1.0 / (spec.sigma * spec.sigma);

  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(l, l) + inv_s2 * (A.transpose() * A);
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("analytic_posterior: singular precision");
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(l, l));
  Eigen::VectorXd mean = cov * (inv_s2 * (A.transpose() * xv));

  FullGaussian out;
  out.mean = Tensor::vec(std::vector<double>(mean.data(), mean.data() + l));
  out.cov = Tensor::zeros({l, l});
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) out.cov.at(i, j) = cov(i, j);
  return out;
}

double kl_diag_to_full(const DiagGaussian& q, const FullGaussian& p) {
  const std::size_t l = q.dim();
  if (p.mean.size() != l) throw std::invalid_argument("kl_diag_to_full: dimension mismatch");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> cov(p.cov.data().data(), l, l);
  Eigen::MatrixXd cov_dense = cov;
  Eigen::LLT<Eigen::MatrixXd> llt(cov_dense);
  if (llt.info() != Eigen::Success) throw std::runtime_error("kl_diag_to_full: singular covariance");

  double logdet_p = 0;
  Eigen::MatrixXd L = llt.matrixL();
  for (std::size_t i = 0; i < l; ++i) logdet_p += 2.0 * std::log(L(i, i));

  double logdet_q = 0, trace = 0;
  Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(l, l));
  Eigen::VectorXd dm(l);
  for (std::size_t i = 0; i < l; ++i) {
    logdet_q += q.log_var.at(i);
    trace += prec(i, i) * std::exp(q.log_var.at(i));
    dm(i) = p.mean.at(i) - q.mean.at(i);
  }
  double quad = dm.dot(prec * dm);
  return 0.5 * (logdet_p - logdet_q - static_cast<double>(l) + trace + quad);
}

std::vector<std::pair<int, int>> FeatureLayout::pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < channels; ++a)
    for (int b = a + 1; b < channels; ++b) out.emplace_back(a, b);
  return out;
}

std::vector<int> FeatureLayout::channel_coords(const std::vector<int>& chans) const {
  std::vector<int> out;
  auto touches = [&](int c) {
    return std::find(chans.begin(), chans.end(), c) != chans.end();
  };
  for (int c : chans)
    for (int f = 0; f < freqs; ++f) out.push_back(power_offset(c) + f);
  auto prs = pairs();
  for (std::size_t k = 0; k < prs.size(); ++k)
    if (touches(prs[k].first) || touches(prs[k].second))
      for (int f = 0; f < freqs; ++f) out.push_back(coherence_offset(static_cast<int>(k)) + f);
  std::sort(out.begin(), out.end());
  return out;
}

std::string FeatureLayout::to_json() const {
  std::ostringstream os;
  os << "{\"channels\":" << channels << ",\"freqs\":" << freqs << ",\"dim\":" << dim()
     << ",\"order\":\"power per channel x freqs, then coherence per pair (a<b, lexicographic) x freqs\""
     << ",\"pairs\":[";
  auto prs = pairs();
  for (std::size_t k = 0; k < prs.size(); ++k)
    os << (k ? "," : "") << "[" << prs[k].first << "," << prs[k].second << "]";
  os << "]}";
  return os.str();
}

FeatureLayout layout_for_dim(int p) {
  for (int ch = 8; ch >= 2; --ch) {
    int blocks = ch + ch * (ch - 1) / 2;
    if (p % blocks == 0) return FeatureLayout{ch, p / blocks};
  }
  throw std::invalid_argument("layout_for_dim: no channel/frequency layout divides dim " +
                              std::to_string(p));
}

SurrogateData gen_spectral_surrogate(int p, int classes, std::size_t n, std::uint64_t seed) {
  if (p < 1 || classes < 1 || n < 1) throw std::invalid_argument("gen_spectral_surrogate: bad sizes");
  FeatureLayout layout = layout_for_dim(p);
  Rng rng = Rng::stream(seed, "surrogate");

  // Templates: class templates plus nuisance templates, each a small network
  // of channels with a smooth bump over frequencies on its power and
  // within-network coherence blocks.
  const int n_nuisance = std::max(2, classes);
  const int n_templates = classes + n_nuisance;
  std::vector<std::vector<double>> templates(n_templates, std::vector<double>(p, 0.0));
  auto prs = layout.pairs();

  for (int j = 0; j < n_templates; ++j) {
    int k_channels = 2 + static_cast<int>(rng.below(std::max(1, layout.channels - 1)));
    std::vector<int> chans(layout.channels);
    std::iota(chans.begin(), chans.end(), 0);
    rng.shuffle(chans);
    chans.resize(std::min<std::size_t>(k_channels, chans.size()));
    std::sort(chans.begin(), chans.end());

    double center = rng.uniform(0.15, 0.85) * layout.freqs;
    double width = rng.uniform(0.08, 0.25) * layout.freqs;
    auto bump = [&](int f) {
      double z = (f - center) / width;
      return std::exp(-0.5 * z * z);
    };

    for (int c : chans)
      for (int f = 0; f < layout.freqs; ++f)
        templates[j][layout.power_offset(c) + f] = bump(f);
    for (std::size_t k = 0; k < prs.size(); ++k) {
      bool a_in = std::find(chans.begin(), chans.end(), prs[k].first) != chans.end();
      bool b_in = std::find(chans.begin(), chans.end(), prs[k].second) != chans.end();
      if (a_in && b_in)
        for (int f = 0; f < layout.freqs; ++f)
          templates[j][layout.coherence_offset(static_cast<int>(k)) + f] = 0.7 * bump(f);
    }
  }

  Tensor X = Tensor::zeros({n, static_cast<std::size_t>(p)});
  std::vector<int> y(n);
  double max_v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.below(classes));
    std::vector<double> act(n_templates);
    int best = 0;
    for (int j = 0; j < n_templates; ++j) {
      double base = j < classes ? (j == c ? 2.5 : -0.5) : 0.8;
      act[j] = softplus(base + rng.normal());
      if (j < classes && act[j] > act[best]) best = j;
    }
    y[i] = best;  // dominant class-template activation
    for (int j = 0; j < n_templates; ++j)
      for (int d = 0; d < p; ++d) X.at(i, d) += act[j] * templates[j][d];
    for (int d = 0; d < p; ++d) {
      X.at(i, d) += 0.05 * std::fabs(rng.normal());
      max_v = std::max(max_v, X.at(i, d));
    }
  }

  SurrogateData out;
  out.data.X = std::move(X);
  out.data.y = std::move(y);
  out.data.name = "surrogate";
  out.data.classes = classes;
  out.data.value_range = max_v;
  out.layout = layout;
  out.class_templates = Tensor::zeros({static_cast<std::size_t>(classes), static_cast<std::size_t>(p)});
  for (int c = 0; c < classes; ++c)
    for (int d = 0; d < p; ++d) out.class_templates.at(c, d) = templates[c][d];
  return out;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);

  std::uint32_t img_magic = read_be_u32(img, "image magic");
  if (img_magic != 2051)
    throw std::runtime_error("idx: bad image magic " + std::to_string(img_magic) +
                             " (expected 2051)");
  std::uint32_t n_img = read_be_u32(img, "image count");
  std::uint32_t rows = read_be_u32(img, "rows");
  std::uint32_t cols = read_be_u32(img, "cols");

  std::uint32_t lab_magic = read_be_u32(lab, "label magic");
  if (lab_magic != 2049)
    throw std::runtime_error("idx: bad label magic " + std::to_string(lab_magic) +
                             " (expected 2049)");
  std::uint32_t n_lab = read_be_u32(lab, "label count");
  if (n_img != n_lab)
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n_img) + " vs " +
                             std::to_string(n_lab) + ")");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(static_cast<std::size_t>(n_img) * pixels);
  if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw std::runtime_error("idx: truncated image payload");
  std::vector<unsigned char> lbuf(n_lab);
  if (!lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(lbuf.size())))
    throw std::runtime_error("idx: truncated label payload");

  LabeledDataset out;
  out.X = Tensor::zeros({n_img, pixels});
  out.y.resize(n_lab);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    for (std::size_t j = 0; j < pixels; ++j)
      out.X.at(i, j) = static_cast<double>(buf[i * pixels + j]) / 255.0;
    out.y[i] = static_cast<int>(lbuf[i]);
    max_label = std::max(max_label, out.y[i]);
  }
  out.name = "idx";
  out.classes = max_label + 1;
  out.value_range = 1.0;
  out.image_rows = static_cast<int>(rows);
  out.image_cols = static_cast<int>(cols);
  return out;
}

ExperimentMask ExperimentMask::all(int full_dim, int id) {
  ExperimentMask m;
  m.id = id;
  m.observed.resize(full_dim);
  std::iota(m.observed.begin(), m.observed.end(), 0);
  return m;
}

ExperimentMask mask_without_channels(const FeatureLayout& layout,
                                     const std::vector<int>& removed_channels, int id) {
  std::vector<int> removed = layout.channel_coords(removed_channels);
  ExperimentMask m;
  m.id = id;
  std::size_t r = 0;
  for (int d = 0; d < layout.dim(); ++d) {
    if (r < removed.size() && removed[r] == d) {
      ++r;
      continue;
    }
    m.observed.push_back(d);
  }
  return m;
}

ExperimentMask random_mask(int full_dim, double observed_fraction, std::uint64_t seed, int id) {
  if (observed_fraction <= 0.0 || observed_fraction > 1.0)
    throw std::invalid_argument("random_mask: fraction in (0,1] required");
  std::vector<int> idx(full_dim);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::stream(seed, "mask/" + std::to_string(id));
  rng.shuffle(idx);
  std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(observed_fraction * full_dim));
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  ExperimentMask m;
  m.id = id;
  m.observed = std::move(idx);
  return m;
}

LabeledDataset apply_mask(const LabeledDataset& d, const ExperimentMask& mask) {
  for (int c : mask.observed)
    if (c < 0 || static_cast<std::size_t>(c) >= d.dim())
      throw std::invalid_argument("apply_mask: mask index out of range");
  LabeledDataset out = d;
  out.X = Tensor::zeros({d.size(), mask.observed.size()});
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < mask.observed.size(); ++j)
      out.X.at(i, j) = d.X.at(i, static_cast<std::size_t>(mask.observed[j]));
  out.image_rows = out.image_cols = 0;
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, int epoch, int tag) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  if (batch_size > n) throw std::invalid_argument("batches: batch size exceeds dataset size");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, "batches/" + std::to_string(epoch) + "/" + std::to_string(tag));
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

}  // namespace sosvae
