// Command-line surface: train / eval / sweep over JSON run configs.
#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sosvae/checkpoint.hpp"
#include "sosvae/metrics.hpp"
#include "sosvae/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sosvae;

namespace {

const std::vector<std::string> kHistoryColumns = {
    "epoch",     "recon",           "prior_kl", "supervised", "coupling_kl",
    "objective", "batch_objective", "wall_ms"};

const std::vector<std::string> kEvalColumns = {
    "checkpoint", "dataset", "split", "acc",  "auc",  "psnr",
    "ssim",       "utility", "coupling_kl",   "recon_loglik"};

const std::vector<std::string> kSweepColumns = {
    "param", "value", "seed", "acc", "auc", "coupling_kl", "utility", "psnr", "ssim",
    "recon_loglik"};

void write_columns_manifest(const fs::path& dir, const std::string& name,
                            const std::vector<std::string>& columns) {
  json j{{"file", name}, {"columns", columns}};
  std::ofstream os(dir / (name + "-columns.json"));
  os << j.dump(2) << "\n";
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  for (std::size_t i = 0; i < kHistoryColumns.size(); ++i)
    os << (i ? "," : "") << kHistoryColumns[i];
  os << "\n";
  for (const auto& r : history)
    os << r.epoch << "," << fmt(r.recon) << "," << fmt(r.prior_kl) << "," << fmt(r.supervised)
       << "," << fmt(r.coupling_kl) << "," << fmt(r.objective) << "," << fmt(r.batch_objective)
       << "," << fmt(r.wall_ms) << "\n";
}

struct MissingEval {
  std::vector<MaskedDataset> views;  // per-experiment masked test views
};

// Partition test rows round-robin and apply the bundle's stored masks, so
// each row is scored by the encoder that matches its observed coordinates.
MissingEval missing_test_views(const ModelBundle& bundle, const LabeledDataset& test) {
  MissingEval out;
  const std::size_t T = bundle.experiments();
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = t; i < test.size(); i += T) rows.push_back(i);
    LabeledDataset sub = test.subset(rows);
    out.views.push_back(MaskedDataset{apply_mask(sub, bundle.pred_enc[t].mask),
                                      bundle.pred_enc[t].mask});
  }
  return out;
}

struct EvalResult {
  double acc = std::nan(""), auc = std::nan(""), psnr_v = std::nan(""), ssim_v = std::nan("");
  double utility = std::nan(""), coupling = std::nan(""), recon = std::nan("");
};

bool wants(const std::vector<std::string>& metrics, const std::string& m) {
  return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
}

EvalResult evaluate_bundle(const ModelBundle& bundle, const LabeledDataset& data,
                           const std::vector<std::string>& metrics) {
  EvalResult r;
  const bool multi = bundle.experiments() > 1;

  if (multi) {
    MissingEval me = missing_test_views(bundle, data);
    std::vector<int> pred, truth;
    double recon_sum = 0.0, coup_sum = 0.0;
    std::size_t n = 0;
    std::vector<Tensor> probs;
    for (std::size_t t = 0; t < me.views.size(); ++t) {
      const LabeledDataset& v = me.views[t].data;
      auto labels = predict_labels(bundle, v.X, t);
      pred.insert(pred.end(), labels.begin(), labels.end());
      truth.insert(truth.end(), v.y.begin(), v.y.end());
      probs.push_back(predict_probs(bundle, v.X, t));
      recon_sum += recon_log_lik_mean(bundle, v, t) * static_cast<double>(v.size());
      if (!bundle.gen_enc.empty())
        coup_sum += coupling_kl(bundle, v.X, t) * static_cast<double>(v.size());
      n += v.size();
    }
    if (wants(metrics, "acc")) r.acc = accuracy(pred, truth);
    if (wants(metrics, "auc")) {
      Tensor all = Tensor::zeros({truth.size(), probs[0].cols()});
      std::size_t row = 0;
      for (const Tensor& p : probs)
        for (std::size_t i = 0; i < p.rows(); ++i, ++row)
          for (std::size_t c = 0; c < p.cols(); ++c) all.at(row, c) = p.at(i, c);
      r.auc = auc_macro(all, truth);
    }
    r.recon = recon_sum / static_cast<double>(n);
    if (!bundle.gen_enc.empty()) r.coupling = coup_sum / static_cast<double>(n);
    if (wants(metrics, "utility"))
      r.utility = scientific_utility(bundle, me.views[0].data, -1, 0);
    return r;
  }

  if (wants(metrics, "acc")) r.acc = accuracy(predict_labels(bundle, data.X), data.y);
  if (wants(metrics, "auc")) r.auc = auc_macro(predict_probs(bundle, data.X), data.y);
  if (wants(metrics, "psnr") || wants(metrics, "ssim")) {
    auto [p, s] = recon_quality(bundle, data);
    r.psnr_v = p;
    r.ssim_v = s;
  }
  if (wants(metrics, "utility")) r.utility = scientific_utility(bundle, data);
  if (!bundle.gen_enc.empty()) r.coupling = coupling_kl(bundle, data.X);
  r.recon = recon_log_lik_mean(bundle, data);
  return r;
}

ModelBundle run_training(const RunConfig& rc, const DatasetBundle& db) {
  if (rc.training.method == Method::Missing) {
    auto experiments = build_missing_experiments(db.train, rc.missing);
    return train_missing(experiments, static_cast<int>(db.train.dim()), rc.training);
  }
  return train(db.train, rc.training);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              const std::string& out_dir) {
  RunConfig rc = load_run_config(config_path);
  if (seed_override) rc.training.seed = *seed_override;
  fs::create_directories(out_dir);

  DatasetBundle db = materialize_dataset(rc.dataset);
  if (db.layout) {
    std::ofstream os(fs::path(out_dir) / "feature_layout.json");
    os << db.layout->to_json() << "\n";
  }

  const std::string tag = method_name(rc.training.method) + "-seed" +
                          std::to_string(rc.training.seed);

  if (rc.folds > 1) {
    // k-fold over the full dataset (train + test concatenated by reuse of
    // the materialized split is avoided: folds re-slice the training set).
    std::ofstream folds_csv(fs::path(out_dir) / (tag + "-folds.csv"));
    folds_csv << "fold,acc,auc\n";
    for (int f = 0; f < rc.folds; ++f) {
      std::vector<std::size_t> train_rows, test_rows;
      for (std::size_t i = 0; i < db.train.size(); ++i)
        (static_cast<int>(i % rc.folds) == f ? test_rows : train_rows).push_back(i);
      LabeledDataset ftrain = db.train.subset(train_rows);
      LabeledDataset ftest = db.train.subset(test_rows);
      RunConfig frc = rc;
      DatasetBundle fdb{std::move(ftrain), std::move(ftest), db.oracle, db.layout};
      ModelBundle bundle = run_training(frc, fdb);
      std::string fold_tag = tag + "-fold" + std::to_string(f);
      save_checkpoint(bundle, (fs::path(out_dir) / (fold_tag + ".ckpt")).string());
      write_history_csv(fs::path(out_dir) / (fold_tag + "-history.csv"), bundle.history);
      EvalResult r = evaluate_bundle(bundle, fdb.test, {"acc", "auc"});
      folds_csv << f << "," << fmt(r.acc) << "," << fmt(r.auc) << "\n";
    }
    write_columns_manifest(out_dir, tag + "-history.csv", kHistoryColumns);
    return 0;
  }

  ModelBundle bundle = run_training(rc, db);
  std::string ckpt = (fs::path(out_dir) / (tag + ".ckpt")).string();
  save_checkpoint(bundle, ckpt);
  write_history_csv(fs::path(out_dir) / (tag + "-history.csv"), bundle.history);
  write_columns_manifest(out_dir, tag + "-history.csv", kHistoryColumns);
  std::cout << "checkpoint: " << ckpt << "\n";
  std::cout << "history: " << (fs::path(out_dir) / (tag + "-history.csv")).string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_config,
             const std::string& metrics_arg, const std::string& split,
             const std::string& decoder_check, const std::string& out_dir) {
  ModelBundle bundle = load_checkpoint(ckpt_path);
  if (!decoder_check.empty()) {
    DecoderKind want = decoder_check == "nmf" ? DecoderKind::Nmf : DecoderKind::Mlp;
    if (bundle.dec_arch.kind != want)
      throw std::runtime_error("eval: checkpoint decoder is " +
                               std::string(bundle.dec_arch.kind == DecoderKind::Nmf ? "nmf" : "mlp") +
                               " but --decoder requested " + decoder_check);
  }

  RunConfig rc = load_run_config(data_config);
  DatasetBundle db = materialize_dataset(rc.dataset);
  const LabeledDataset& data = split == "train" ? db.train : db.test;
  if (data.dim() == 0 ||
      (bundle.experiments() == 1 &&
       data.dim() != static_cast<std::size_t>(bundle.pred_enc[0].arch.input_dim)))
    throw std::runtime_error("eval: dataset dim " + std::to_string(data.dim()) +
                             " does not match checkpoint encoder input " +
                             std::to_string(bundle.pred_enc[0].arch.input_dim));

  std::vector<std::string> metrics;
  std::stringstream ss(metrics_arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) metrics.push_back(item);

  EvalResult r = evaluate_bundle(bundle, data, metrics);

  json out;
  out["checkpoint"] = ckpt_path;
  out["dataset"] = rc.dataset.name;
  out["split"] = split;
  out["recon_loglik"] = r.recon;
  auto put = [&](const char* key, double v) {
    if (wants(metrics, key) && !std::isnan(v)) out[key] = v;
  };
  put("acc", r.acc);
  put("auc", r.auc);
  put("psnr", r.psnr_v);
  put("ssim", r.ssim_v);
  put("utility", r.utility);
  if (!std::isnan(r.coupling)) out["coupling_kl"] = r.coupling;
  std::cout << out.dump(2) << "\n";

  fs::create_directories(out_dir);
  fs::path csv = fs::path(out_dir) / "eval.csv";
  bool fresh = !fs::exists(csv);
  std::ofstream os(csv, std::ios::app);
  if (fresh) {
    for (std::size_t i = 0; i < kEvalColumns.size(); ++i) os << (i ? "," : "") << kEvalColumns[i];
    os << "\n";
    write_columns_manifest(out_dir, "eval.csv", kEvalColumns);
  }
  os << ckpt_path << "," << rc.dataset.name << "," << split << "," << fmt(r.acc) << ","
     << fmt(r.auc) << "," << fmt(r.psnr_v) << "," << fmt(r.ssim_v) << "," << fmt(r.utility) << ","
     << fmt(r.coupling) << "," << fmt(r.recon) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& values_arg, const std::string& seeds_arg,
              const std::string& out_dir) {
  const std::vector<std::string> valid = {"lambda", "mu", "alpha", "batch"};
  if (std::find(valid.begin(), valid.end(), param) == valid.end())
    throw std::runtime_error("sweep: param must be one of lambda, mu, alpha, batch");

  std::vector<double> values;
  {
    std::stringstream ss(values_arg);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) values.push_back(std::stod(item));
  }
  if (values.empty()) throw std::runtime_error("sweep: empty value list");

  RunConfig rc = load_run_config(config_path);
  std::vector<std::uint64_t> seeds = rc.seeds;
  if (!seeds_arg.empty()) {
    seeds.clear();
    std::stringstream ss(seeds_arg);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) seeds.push_back(std::stoull(item));
  }

  struct Cell {
    double value;
    std::uint64_t seed;
    EvalResult result;
  };
  std::vector<Cell> cells;
  for (double v : values)
    for (std::uint64_t s : seeds) cells.push_back(Cell{v, s, {}});

  unsigned threads = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("SOSVAE_THREADS")) {
    long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) threads = static_cast<unsigned>(parsed);
  }
  threads = std::max(1u, std::min<unsigned>(threads, cells.size()));

  DatasetBundle db = materialize_dataset(rc.dataset);
  const std::vector<std::string> metric_names = rc.metrics;

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::string first_error;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        RunConfig cell_rc = rc;
        cell_rc.training.seed = cells[i].seed;
        if (param == "lambda") cell_rc.training.lambda = cells[i].value;
        else if (param == "mu") cell_rc.training.mu = cells[i].value;
        else if (param == "alpha") cell_rc.training.alpha = cells[i].value;
        else cell_rc.training.batch = static_cast<int>(cells[i].value);
        cell_rc.training.validate();
        ModelBundle bundle = run_training(cell_rc, db);
        std::vector<std::string> m = {"acc", "auc", "psnr", "ssim"};
        if (wants(metric_names, "utility")) m.push_back("utility");
        cells[i].result = evaluate_bundle(bundle, db.test, m);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error("sweep cell failed: " + first_error);

  fs::create_directories(out_dir);
  fs::path csv = fs::path(out_dir) / "sweep.csv";
  std::ofstream os(csv);
  for (std::size_t i = 0; i < kSweepColumns.size(); ++i) os << (i ? "," : "") << kSweepColumns[i];
  os << "\n";
  for (const Cell& c : cells)
    os << param << "," << fmt(c.value) << "," << c.seed << "," << fmt(c.result.acc) << ","
       << fmt(c.result.auc) << "," << fmt(c.result.coupling) << "," << fmt(c.result.utility)
       << "," << fmt(c.result.psnr_v) << "," << fmt(c.result.ssim_v) << ","
       << fmt(c.result.recon) << "\n";
  write_columns_manifest(out_dir, "sweep.csv", kSweepColumns);
  std::cout << "sweep: " << csv.string() << " (" << cells.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SOS-VAE training, evaluation and sweep tool"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs";
  std::optional<std::uint64_t> seed_override;
  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
  train_cmd->add_option("--config", config_path, "run config path")->required();
  train_cmd->add_option("--seed", seed_override, "override training seed");
  train_cmd->add_option("--out", out_dir, "output directory");

  std::string ckpt_path, data_config, metrics = "acc,auc", split = "test", decoder_check;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval_cmd->add_option("--data", data_config, "run config providing the dataset block")->required();
  eval_cmd->add_option("--metrics", metrics, "comma list: acc,auc,psnr,ssim,utility");
  eval_cmd->add_option("--split", split, "train|test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--decoder", decoder_check, "require decoder kind (mlp|nmf)")
      ->check(CLI::IsMember({"mlp", "nmf"}));
  eval_cmd->add_option("--out", out_dir, "output directory");

  std::string param, values_arg, seeds_arg;
  auto* sweep_cmd = app.add_subcommand("sweep", "train/eval a grid over one parameter");
  sweep_cmd->add_option("--config", config_path, "run config path")->required();
  sweep_cmd->add_option("--param", param, "lambda|mu|alpha|batch")->required();
  sweep_cmd->add_option("--values", values_arg, "comma list of values")->required();
  sweep_cmd->add_option("--seeds", seeds_arg, "comma list of seeds (default: config seeds)");
  sweep_cmd->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, seed_override, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, data_config, metrics, split,
                                            decoder_check, out_dir);
    if (sweep_cmd->parsed()) return cmd_sweep(config_path, param, values_arg, seeds_arg, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
