#include <doctest.h>

#include <cmath>

#include "../common/test_util.hpp"
#include "sosvae/metrics.hpp"

using namespace sosvae;
using testutil::random_tensor;

TEST_CASE("accuracy") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({0, 0, 0}, {1, 2, 3}) == 0.0);
  CHECK(accuracy({1, 2, 3}, {1, 2, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy({1}, {1, 2}), std::invalid_argument);
}

namespace {
// exhaustive pairwise oracle: P(score_pos > score_neg) + 0.5 P(equal)
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  return wins / static_cast<double>(pairs);
}
}  // namespace

TEST_CASE("auc against the exhaustive pairwise oracle") {
  // binary scores as a 2-column (1-p, p) matrix
  auto as_scores = [](const std::vector<double>& p) {
    Tensor t = Tensor::zeros({p.size(), 2});
    for (std::size_t i = 0; i < p.size(); ++i) {
      t.at(i, 0) = 1.0 - p[i];
      t.at(i, 1) = p[i];
    }
    return t;
  };
  std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  std::vector<int> y{0, 0, 1, 1};
  CHECK(auc_macro(as_scores(s), y) == doctest::Approx(0.75).epsilon(1e-12));

  // random scores with ties, multiple sizes
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 6 + rng.below(20);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    std::vector<bool> pos(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform(0, 4)) / 4.0;  // force ties
      labels[i] = static_cast<int>(rng.below(2));
      pos[i] = labels[i] == 1;
      (pos[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    // the class-1 task of auc_macro equals the binary oracle; class-0 is its
    // complement task, so compare the mean of both oracles
    std::vector<bool> neg(n);
    std::vector<double> inv(n);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = !pos[i];
      inv[i] = 1.0 - scores[i];
    }
    double oracle = 0.5 * (pairwise_auc(scores, pos) + pairwise_auc(inv, neg));
    CHECK(auc_macro(as_scores(scores), labels) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("auc degenerate and invariance properties") {
  // perfectly separating scores
  Tensor sep = Tensor::zeros({4, 2});
  std::vector<int> y{0, 0, 1, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    sep.at(i, 1) = i < 2 ? 0.1 : 0.9;
    sep.at(i, 0) = 1.0 - sep.at(i, 1);
  }
  CHECK(auc_macro(sep, y) == 1.0);

  // identical scores for all samples
  Tensor flat = Tensor::full({4, 2}, 0.5);
  CHECK(auc_macro(flat, y) == 0.5);

  // invariant under strictly increasing transforms
  Rng rng(9);
  Tensor scores = random_tensor({12, 3}, rng, 0.01, 0.99);
  std::vector<int> labels(12);
  for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<int>(rng.below(3));
  double base = auc_macro(scores, labels);
  Tensor warped = scores;
  for (double& v : warped.data()) v = std::exp(3.0 * v) - std::log1p(v);
  CHECK(auc_macro(warped, labels) == doctest::Approx(base).epsilon(1e-12));

  // single-class labels leave no computable task
  std::vector<int> ones(4, 1);
  Tensor two = random_tensor({4, 2}, rng);
  CHECK_THROWS_AS(auc_macro(two, ones), std::invalid_argument);
}

TEST_CASE("psnr") {
  Tensor x = Tensor::vec({0.0, 0.0, 0.0, 0.0});
  Tensor off = Tensor::vec({1.0, 1.0, 1.0, 1.0});
  CHECK(psnr(x, off, 1.0) == doctest::Approx(0.0));          // MSE = max^2
  CHECK(psnr(x, x, 1.0) == 99.0);                            // sentinel cap
  Tensor close = Tensor::vec({0.1, -0.1, 0.1, -0.1});
  CHECK(psnr(x, close, 1.0) == doctest::Approx(20.0));       // MSE = 0.01

  // strictly decreasing in MSE
  double prev = 1e9;
  for (double e = 0.05; e < 0.9; e += 0.1) {
    Tensor xe = Tensor::vec({e, e, e, e});
    double v = psnr(x, xe, 1.0);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(psnr(x, Tensor::vec({1.0}), 1.0), std::invalid_argument);
}

TEST_CASE("ssim") {
  Rng rng(5);
  Tensor img = random_tensor({9, 9}, rng, 0.0, 1.0);
  CHECK(ssim(img, img, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  // constant equal images: zero variance, constants dominate identically
  Tensor flat = Tensor::full({8, 8}, 0.37);
  CHECK(ssim(flat, flat, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  // inverted checkerboard, hand evaluation on one 8x8 window:
  // means 0.5, variances 0.25, covariance -0.25
  Tensor board = Tensor::zeros({8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) board.at(i, j) = static_cast<double>((i + j) % 2);
  Tensor inverted = board;
  for (double& v : inverted.data()) v = 1.0 - v;
  const double c1 = 0.0001, c2 = 0.0009;
  double reference = ((2 * 0.5 * 0.5 + c1) * (2 * -0.25 + c2)) /
                     ((0.5 * 0.5 + 0.5 * 0.5 + c1) * (0.25 + 0.25 + c2));
  double got = ssim(board, inverted, 1.0);
  CHECK(got < 0.0);
  CHECK(got == doctest::Approx(reference).epsilon(1e-9));

  CHECK_THROWS_AS(ssim(Tensor::zeros({4, 4}), Tensor::zeros({4, 4}), 1.0),
                  std::invalid_argument);
}

namespace {

// Two-point linear-Gaussian toy at its exact finite-batch optimum. With
// decoder x_hat = a s + b, the batch {x1, x2} is jointly stationary when
// b = (x1 + x2)/2 and (x2 - x1) = 2 sqrt(a^2 + 1); the encoder matches the
// per-sample posterior N(a (x - b) / (a^2 + 1), 1 / (a^2 + 1)). The affine
// maps are realized with relu pairs whose pre-activations never change sign
// on the probe range, so every parameter gradient of the realization
// inherits the abstract stationarity exactly.
struct ToyOptimum {
  double a = 1.0;
  double x1 = 10.0;
  double x2 = 10.0 + 2.0 * std::sqrt(2.0);
  double b = 0.5 * (x1 + x2);
  double hidden_shift = 50.0;  // keeps decoder relu inputs positive for |s| < 50

  ModelBundle bundle() const {
    double denom = a * a + 1.0;
    double c = a / denom;       // encoder mean slope
    double d = -a * b / denom;  // encoder mean bias
    double lv = std::log(1.0 / denom);
    double w1 = 0.5 * a + 0.1, w2 = -0.5 * a + 0.1;
    double b2 = b - hidden_shift * (w1 + w2);

    ModelBundle m;
    m.method = Method::Vae;
    m.config.method = Method::Vae;
    m.config.alpha = 1e-3;
    m.config.latent = 1;
    m.config.hidden = 2;
    m.dec_arch = DecoderArch{DecoderKind::Mlp, 1, 2, 1, Likelihood::Gaussian};
    m.cls_arch = ClassifierArch{1, 2};
    m.decoder = ParamSet{{"dec.W1", Tensor::matrix(2, 1, {1.0, -1.0})},
                         {"dec.b1", Tensor::vec({hidden_shift, hidden_shift})},
                         {"dec.W2", Tensor::matrix(1, 2, {w1, w2})},
                         {"dec.b2", Tensor::vec({b2})}};
    m.classifier = ParamSet{{"cls.W", Tensor::matrix(2, 1, {0.0, 0.0})},
                            {"cls.b", Tensor::vec({0.0, 0.0})}};
    EncoderArch ea{1, 2, 1};
    ParamSet enc{{"enc.W1", Tensor::matrix(2, 1, {1.0, -1.0})},
                 {"enc.b1", Tensor::vec({0.0, 0.0})},
                 {"enc.Wm", Tensor::matrix(1, 2, {c, -c})},
                 {"enc.bm", Tensor::vec({d})},
                 {"enc.Wv", Tensor::matrix(1, 2, {0.0, 0.0})},
                 {"enc.bv", Tensor::vec({lv})}};
    m.pred_enc.push_back(EncoderStack{ea, std::move(enc), ExperimentMask::all(1), "enc"});
    return m;
  }

  // duplicated labels per point keep the uniform classifier stationary
  // sample-by-sample
  Tensor probe_x() const { return Tensor::matrix(4, 1, {x1, x1, x2, x2}); }
  std::vector<int> probe_y() const { return {0, 1, 0, 1}; }
};

EpsDraws trapezoid_eps(std::size_t rows, int nodes, double lo, double hi) {
  EpsDraws out;
  double h = (hi - lo) / (nodes - 1);
  for (int k = 0; k < nodes; ++k) {
    double eps = lo + k * h;
    double w = std::exp(-0.5 * eps * eps) / std::sqrt(2.0 * M_PI) * h;
    if (k == 0 || k == nodes - 1) w *= 0.5;
    out.draws.emplace_back(Tensor::full({rows, 1}, eps), w);
  }
  return out;
}

}  // namespace

TEST_CASE("stationary residuals vanish at the analytic toy optimum") {
  ToyOptimum toy;
  ResidualReport r = stationary_residuals(toy.bundle(), toy.probe_x(), toy.probe_y(), 0.0,
                                          trapezoid_eps(4, 2001, -8, 8));
  CHECK(r.phi < 1e-6);
  CHECK(r.theta < 1e-6);
  CHECK(r.psi < 1e-6);
}

TEST_CASE("perturbed toy has strictly larger residuals") {
  ToyOptimum toy;
  ModelBundle bundle = toy.bundle();
  bundle.pred_enc[0].params.at("enc.bm").at(0) += 0.2;
  bundle.decoder.at("dec.b2").at(0) += 0.3;
  ResidualReport r = stationary_residuals(bundle, toy.probe_x(), toy.probe_y(), 0.0,
                                          trapezoid_eps(4, 2001, -8, 8));
  CHECK(r.phi > 1e-3);
  CHECK(r.theta > 1e-3);
}

TEST_CASE("scientific utility is zero when the encoders coincide") {
  // computed without refitting machinery: kl_between of identical encodings
  Rng rng(7);
  EncoderArch ea{3, 4, 2};
  ParamSet enc = init_encoder(ea, rng);
  Tensor X = random_tensor({5, 3}, rng);
  auto [m, lv] = encode_batch(enc, ea, X);
  double total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    DiagGaussian q{Tensor::vec({m.at(i, 0), m.at(i, 1)}),
                   Tensor::vec({lv.at(i, 0), lv.at(i, 1)})};
    total += kl_between(q, q);
  }
  CHECK(total == 0.0);
}
