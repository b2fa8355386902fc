#include "sosvae/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sosvae {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "SOSVAE1";
constexpr std::size_t kMagicLen = 7;

json config_to_json(const TrainConfig& c) {
  return json{{"method", method_name(c.method)},
              {"lambda", c.lambda},
              {"mu", c.mu},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"epochs", c.epochs},
              {"batch", c.batch},
              {"latent", c.latent},
              {"hidden", c.hidden},
              {"decoder", c.decoder == DecoderKind::Mlp ? "mlp" : "nmf"},
              {"likelihood", c.head == Likelihood::Gaussian ? "gaussian" : "bernoulli"},
              {"seed", c.seed},
              {"decay_epoch", c.decay.epoch},
              {"decay_factor", c.decay.factor},
              {"decay_enabled", c.decay.enabled},
              {"inner_updates", c.inner_updates},
              {"second_order", c.second_order},
              {"refit_epochs", c.refit_epochs}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.mu = j.at("mu").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.latent = j.at("latent").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.decoder = j.at("decoder").get<std::string>() == "nmf" ? DecoderKind::Nmf : DecoderKind::Mlp;
  c.head = j.at("likelihood").get<std::string>() == "bernoulli" ? Likelihood::Bernoulli
                                                                : Likelihood::Gaussian;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.decay.epoch = j.at("decay_epoch").get<int>();
  c.decay.factor = j.at("decay_factor").get<double>();
  c.decay.enabled = j.at("decay_enabled").get<bool>();
  c.inner_updates = j.at("inner_updates").get<int>();
  c.second_order = j.at("second_order").get<bool>();
  c.refit_epochs = j.at("refit_epochs").get<int>();
  return c;
}

json encoder_to_json(const EncoderStack& e, int full_dim) {
  json j{{"input", e.arch.input_dim},
         {"hidden", e.arch.hidden_dim},
         {"latent", e.arch.latent_dim},
         {"prefix", e.prefix},
         {"mask_id", e.mask.id}};
  if (e.mask.full(full_dim))
    j["mask"] = nullptr;
  else
    j["mask"] = e.mask.observed;
  return j;
}

EncoderStack encoder_from_json(const json& j, int full_dim) {
  EncoderStack e;
  e.arch = EncoderArch{j.at("input").get<int>(), j.at("hidden").get<int>(),
                       j.at("latent").get<int>()};
  e.prefix = j.at("prefix").get<std::string>();
  if (j.at("mask").is_null()) {
    e.mask = ExperimentMask::all(full_dim, j.at("mask_id").get<int>());
  } else {
    e.mask.id = j.at("mask_id").get<int>();
    e.mask.observed = j.at("mask").get<std::vector<int>>();
  }
  return e;
}

struct Manifest {
  // (section, name, tensor) in serialization order
  std::vector<std::tuple<std::string, std::string, const Tensor*>> entries;

  void add(const std::string& section, const ParamSet& ps) {
    for (const auto& [name, t] : ps) entries.emplace_back(section, name, &t);
  }
};

Manifest build_manifest(const ModelBundle& b) {
  Manifest m;
  m.add("dec", b.decoder);
  m.add("cls", b.classifier);
  for (std::size_t t = 0; t < b.gen_enc.size(); ++t)
    m.add("gen." + std::to_string(t), b.gen_enc[t].params);
  for (std::size_t t = 0; t < b.pred_enc.size(); ++t)
    m.add("pred." + std::to_string(t), b.pred_enc[t].params);
  m.add("adam.m", b.adam_m);
  m.add("adam.v", b.adam_v);
  return m;
}

void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8))
    throw std::runtime_error("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64_le(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
  }
}

void read_f64_le(std::istream& is, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
      throw std::runtime_error("checkpoint: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const ModelBundle& b, const std::string& path) {
  Manifest m = build_manifest(b);

  json header;
  header["version"] = kCheckpointVersion;
  header["method"] = method_name(b.method);
  header["seed"] = b.config.seed;
  header["config"] = config_to_json(b.config);
  header["decoder_arch"] = json{{"kind", b.dec_arch.kind == DecoderKind::Mlp ? "mlp" : "nmf"},
                                {"latent", b.dec_arch.latent_dim},
                                {"hidden", b.dec_arch.hidden_dim},
                                {"output", b.dec_arch.output_dim},
                                {"head", b.dec_arch.head == Likelihood::Gaussian ? "gaussian"
                                                                                 : "bernoulli"}};
  header["classifier_arch"] =
      json{{"latent", b.cls_arch.latent_dim}, {"classes", b.cls_arch.classes}};
  header["gen_enc"] = json::array();
  for (const auto& e : b.gen_enc)
    header["gen_enc"].push_back(encoder_to_json(e, b.dec_arch.output_dim));
  header["pred_enc"] = json::array();
  for (const auto& e : b.pred_enc)
    header["pred_enc"].push_back(encoder_to_json(e, b.dec_arch.output_dim));
  header["adam_t"] = b.adam_t;

  json params = json::array();
  for (const auto& [section, name, t] : m.entries)
    params.push_back(json{{"section", section}, {"name", name}, {"shape", t->shape()}});
  header["params"] = params;

  std::string header_str = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, kMagicLen);
  write_u64_le(os, header_str.size());
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [section, name, t] : m.entries) write_f64_le(os, t->data());
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a SOSVAE1 file)");
  std::uint64_t header_len = read_u64_le(is);
  std::string header_str(header_len, '\0');
  if (!is.read(header_str.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error("checkpoint: truncated header");

  json header = json::parse(header_str);
  int version = header.at("version").get<int>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version mismatch (file " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion) + ")");

  ModelBundle b;
  b.method = parse_method(header.at("method").get<std::string>());
  b.config = config_from_json(header.at("config"));

  const json& da = header.at("decoder_arch");
  b.dec_arch =
      DecoderArch{da.at("kind").get<std::string>() == "nmf" ? DecoderKind::Nmf : DecoderKind::Mlp,
                  da.at("latent").get<int>(), da.at("hidden").get<int>(),
                  da.at("output").get<int>(),
                  da.at("head").get<std::string>() == "bernoulli" ? Likelihood::Bernoulli
                                                                  : Likelihood::Gaussian};
  const json& ca = header.at("classifier_arch");
  b.cls_arch = ClassifierArch{ca.at("latent").get<int>(), ca.at("classes").get<int>()};
  for (const json& e : header.at("gen_enc"))
    b.gen_enc.push_back(encoder_from_json(e, b.dec_arch.output_dim));
  for (const json& e : header.at("pred_enc"))
    b.pred_enc.push_back(encoder_from_json(e, b.dec_arch.output_dim));
  b.adam_t = header.at("adam_t").get<std::map<std::string, long>>();

  for (const json& entry : header.at("params")) {
    std::string section = entry.at("section").get<std::string>();
    std::string name = entry.at("name").get<std::string>();
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape);
    read_f64_le(is, t.data());

    if (section == "dec") {
      b.decoder.emplace(name, std::move(t));
    } else if (section == "cls") {
      b.classifier.emplace(name, std::move(t));
    } else if (section == "adam.m") {
      b.adam_m.emplace(name, std::move(t));
    } else if (section == "adam.v") {
      b.adam_v.emplace(name, std::move(t));
    } else if (section.rfind("gen.", 0) == 0) {
      std::size_t t_idx = std::stoul(section.substr(4));
      b.gen_enc.at(t_idx).params.emplace(name, std::move(t));
    } else if (section.rfind("pred.", 0) == 0) {
      std::size_t t_idx = std::stoul(section.substr(5));
      b.pred_enc.at(t_idx).params.emplace(name, std::move(t));
    } else {
      throw std::runtime_error("checkpoint: unknown parameter section " + section);
    }
  }
  // Any trailing garbage means the manifest and payload disagree.
  char probe;
  if (is.read(&probe, 1)) throw std::runtime_error("checkpoint: payload longer than manifest");
  return b;
}

}  // namespace sosvae
