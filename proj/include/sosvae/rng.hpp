#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sosvae {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that streams are
// bit-identical across standard libraries and platforms; std::normal_distribution
// and std::shuffle are implementation-defined and would break checkpoint
// reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent substream keyed by a label, e.g. Rng::stream(seed, "init/enc").
  // Trainers draw initialization, shuffling and noise from separate labeled
  // streams so that adding a parameter group to one method cannot shift the
  // draws of another.
  static Rng stream(std::uint64_t seed, std::string_view label);

  // Derived seed for an independent phase (refits, classifier fits).
  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // Box-Muller, 2 u64 per draw
  std::vector<double> normal_vec(std::size_t n);
  std::uint64_t below(std::uint64_t bound);  // [0, bound)

  template <typename T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    if (v.empty()) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace sosvae
