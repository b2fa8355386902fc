#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "../common/test_util.hpp"
#include "sosvae/checkpoint.hpp"

using namespace sosvae;
using testutil::random_tensor;

namespace {

ModelBundle small_bundle(std::uint64_t seed) {
  Rng rng(seed);
  ModelBundle b;
  b.method = Method::SosDvae;
  b.config.method = Method::SosDvae;
  b.config.lambda = 2.0;
  b.config.mu = 0.5;
  b.config.seed = seed;
  b.config.latent = 2;
  b.config.hidden = 4;
  b.dec_arch = DecoderArch{DecoderKind::Nmf, 2, 0, 6, Likelihood::Gaussian};
  b.cls_arch = ClassifierArch{2, 3};
  b.decoder = init_decoder(b.dec_arch, rng);
  b.classifier = init_classifier(b.cls_arch, rng);
  EncoderArch ea{5, 4, 2};
  ExperimentMask mask{0, {0, 1, 2, 4, 5}};
  b.gen_enc.push_back(EncoderStack{ea, init_encoder(ea, rng, "enc1.0"), mask, "enc1.0"});
  b.pred_enc.push_back(EncoderStack{ea, init_encoder(ea, rng, "enc2.0"), mask, "enc2.0"});
  b.adam_m.emplace("dec.W", random_tensor({6, 2}, rng));
  b.adam_v.emplace("dec.W", random_tensor({6, 2}, rng, 0, 1));
  b.adam_t.emplace("dec.W", 17);
  return b;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
}

std::filesystem::path tmp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("save -> load -> save produces identical bytes") {
  ModelBundle b = small_bundle(99);
  auto p1 = tmp_file("ckpt_roundtrip_1.bin");
  auto p2 = tmp_file("ckpt_roundtrip_2.bin");
  save_checkpoint(b, p1.string());
  ModelBundle loaded = load_checkpoint(p1.string());
  save_checkpoint(loaded, p2.string());
  CHECK(slurp(p1.string()) == slurp(p2.string()));

  // parameters round-trip bit-identically
  CHECK(loaded.decoder.at("dec.W").data() == b.decoder.at("dec.W").data());
  CHECK(loaded.pred_enc[0].params.at("enc2.0.W1").data() ==
        b.pred_enc[0].params.at("enc2.0.W1").data());
  CHECK(loaded.gen_enc[0].mask.observed == b.gen_enc[0].mask.observed);
  CHECK(loaded.adam_t.at("dec.W") == 17);
  CHECK(loaded.config.lambda == 2.0);
  CHECK(loaded.dec_arch.kind == DecoderKind::Nmf);

  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("corrupt and mismatched files are rejected") {
  ModelBundle b = small_bundle(7);
  auto p = tmp_file("ckpt_corrupt.bin");
  save_checkpoint(b, p.string());

  // truncation
  auto bytes = slurp(p.string());
  {
    std::ofstream os(p.string(), std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(p.string()), doctest::Contains("truncated"),
                       std::runtime_error);

  // bad magic
  {
    std::ofstream os(p.string(), std::ios::binary | std::ios::trunc);
    os.write("NOTSOSV", 7);
    os.write(bytes.data() + 7, static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(p.string()), doctest::Contains("magic"),
                       std::runtime_error);

  // version mismatch: patch the version field inside the JSON header
  {
    std::string text(bytes.begin(), bytes.end());
    auto pos = text.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "\"version\":9");
    std::ofstream os(p.string(), std::ios::binary | std::ios::trunc);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(p.string()), doctest::Contains("version"),
                       std::runtime_error);

  std::filesystem::remove(p);
}

TEST_CASE("missing file raises a clear error") {
  CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/nope.ckpt"), doctest::Contains("open"),
                       std::runtime_error);
}
