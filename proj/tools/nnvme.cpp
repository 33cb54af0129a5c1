// Command-line pipeline: gen-data, train-sep, train-vme, evaluate, report.
// Every command is deterministic given its config file and master seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnvme/checkpoint.hpp"
#include "nnvme/config.hpp"
#include "nnvme/evaluate.hpp"
#include "nnvme/report.hpp"
#include "nnvme/train.hpp"

namespace fs = std::filesystem;
using namespace nnvme;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.data.seed = *args.seed;
    cfg.train.seed = *args.seed;
  }
  if (args.alpha) {
    if (!(*args.alpha >= 0.0 && *args.alpha <= 1.0))
      throw std::invalid_argument("--alpha outside [0, 1]");
    cfg.train.mtl.alpha = *args.alpha;
  }
  return cfg;
}

std::string alpha_tag(double alpha) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", alpha);
  return buf;
}

std::string data_dir(const CommonArgs& args) { return (fs::path(args.out_dir) / "data").string(); }

std::string manifest_of(const CommonArgs& args, const std::string& split) {
  return (fs::path(data_dir(args)) / split / "manifest.jsonl").string();
}

std::ofstream open_log(const CommonArgs& args, const std::string& name, bool append) {
  fs::create_directories(fs::path(args.out_dir) / "logs");
  std::ofstream log((fs::path(args.out_dir) / "logs" / name).string(),
                    append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open log file " + name);
  return log;
}

void cmd_gen_data(const CommonArgs& args) {
  const RunConfig cfg = load_config(args);
  const std::string dir = data_dir(args);
  generate_split(dir, "train", cfg.data.train_count, cfg.data);
  generate_split(dir, "dev", cfg.data.dev_count, cfg.data);
  generate_split(dir, "eval", cfg.data.eval_count, cfg.data);
  std::cout << "generated " << cfg.data.train_count << "/" << cfg.data.dev_count << "/"
            << cfg.data.eval_count << " train/dev/eval mixtures under " << dir << "\n";
}

void cmd_train_sep(const CommonArgs& args, bool resume) {
  RunConfig cfg = load_config(args);
  cfg.train.epochs = cfg.separator_epochs;
  const auto train_recs = read_manifest(manifest_of(args, "train"));
  const auto dev_recs = read_manifest(manifest_of(args, "dev"));
  fs::create_directories(fs::path(args.out_dir) / "checkpoints");
  const std::string ckpt_path =
      (fs::path(args.out_dir) / "checkpoints" / "separator.ckpt").string();

  int start_epoch = 0;
  TdcnParams sep;
  OptimizerState opt;
  if (resume && fs::exists(ckpt_path)) {
    auto ck = load_checkpoint(ckpt_path);
    if (!ck.has_optimizer) throw std::runtime_error("checkpoint lacks optimizer state: " + ckpt_path);
    sep = std::move(ck.params);
    opt = std::move(ck.opt);
    start_epoch = ck.meta.at("epoch").get<int>() + 1;
  } else {
    Rng rng(Rng::derive(cfg.seed, 11));
    sep = make_tdcn(cfg.separator, rng);
    opt = make_optimizer(sep.all, cfg.train.learning_rate, cfg.train.clip);
  }
  auto log = open_log(args, "train_sep.jsonl", resume);

  // save after every epoch so interrupted runs can resume
  train_separator(sep, opt, manifest_of(args, "train"), train_recs, manifest_of(args, "dev"),
                  dev_recs, cfg.train, &log, start_epoch, [&](int epoch) {
                    nlohmann::json meta{{"model", tdcn_config_json(cfg.separator)},
                                        {"epoch", epoch},
                                        {"seed", cfg.seed}};
                    save_checkpoint(ckpt_path, meta, sep, &opt);
                  });
  std::cout << "separator checkpoint: " << ckpt_path << "\n";
}

void cmd_train_vme(const CommonArgs& args, bool resume) {
  RunConfig cfg = load_config(args);
  cfg.train.epochs = cfg.vme_epochs;
  const auto train_recs = read_manifest(manifest_of(args, "train"));
  const auto dev_recs = read_manifest(manifest_of(args, "dev"));
  const std::string sep_path =
      (fs::path(args.out_dir) / "checkpoints" / "separator.ckpt").string();
  auto sep_ck = load_checkpoint(sep_path);
  freeze(sep_ck.params);

  const std::string tag = alpha_tag(cfg.train.mtl.alpha);
  const std::string ckpt_path =
      (fs::path(args.out_dir) / "checkpoints" / ("vme_alpha_" + tag + ".ckpt")).string();

  int start_epoch = 0;
  TdcnParams vme;
  OptimizerState opt;
  if (resume && fs::exists(ckpt_path)) {
    auto ck = load_checkpoint(ckpt_path);
    if (!ck.has_optimizer) throw std::runtime_error("checkpoint lacks optimizer state: " + ckpt_path);
    vme = std::move(ck.params);
    opt = std::move(ck.opt);
    start_epoch = ck.meta.at("epoch").get<int>() + 1;
  } else {
    Rng rng(Rng::derive(cfg.seed, 12));
    vme = make_tdcn(cfg.vme, rng);
    opt = make_optimizer(vme.all, cfg.train.learning_rate, cfg.train.clip);
  }
  auto log = open_log(args, "train_vme_alpha_" + tag + ".jsonl", resume);

  train_vme(vme, sep_ck.params, opt, manifest_of(args, "train"), train_recs,
            manifest_of(args, "dev"), dev_recs, cfg.train, &log, start_epoch, [&](int epoch) {
              nlohmann::json meta{{"model", tdcn_config_json(cfg.vme)},
                                  {"epoch", epoch},
                                  {"alpha", cfg.train.mtl.alpha},
                                  {"seed", cfg.seed}};
              save_checkpoint(ckpt_path, meta, vme, &opt);
            });
  std::cout << "vme checkpoint: " << ckpt_path << "\n";
}

void cmd_evaluate(const CommonArgs& args, const std::string& systems_arg) {
  RunConfig cfg = load_config(args);
  std::vector<std::string> systems = cfg.eval_systems;
  if (!systems_arg.empty()) {
    systems.clear();
    std::stringstream ss(systems_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) systems.push_back(tok);
  }
  const std::string eval_manifest = manifest_of(args, "eval");
  const auto recs = read_manifest(eval_manifest);

  bool needs_sep = false;
  for (const auto& s : systems)
    if (s != "mixture") needs_sep = true;
  TdcnParams sep;
  if (needs_sep) {
    auto ck = load_checkpoint((fs::path(args.out_dir) / "checkpoints" / "separator.ckpt").string());
    sep = std::move(ck.params);
    freeze(sep);
  }

  std::vector<double> alphas = args.alpha ? std::vector<double>{*args.alpha} : cfg.eval_alphas;
  // the frozen separator's masks are per-sample constants shared by all systems
  std::unordered_map<int, std::vector<std::vector<double>>> mask_cache;
  auto masks_for = [&](const SampleRecord& rec,
                       const LoadedSample& s) -> const std::vector<std::vector<double>>* {
    if (!needs_sep) return nullptr;
    auto it = mask_cache.find(rec.id);
    if (it == mask_cache.end())
      it = mask_cache.emplace(rec.id, separator_masks(sep, s, cfg.train)).first;
    return &it->second;
  };
  std::vector<EvalRow> rows;
  for (const auto& system : systems) {
    if (system == "vm") {
      for (double a : alphas) {
        const std::string path = (fs::path(args.out_dir) / "checkpoints" /
                                  ("vme_alpha_" + alpha_tag(a) + ".ckpt"))
                                     .string();
        if (!fs::exists(path))
          throw std::runtime_error("system vm (alpha " + alpha_tag(a) +
                                   "): missing checkpoint " + path);
        auto ck = load_checkpoint(path);
        freeze(ck.params);
        for (const auto& rec : recs) {
          const auto s = load_sample(eval_manifest, rec);
          rows.push_back(
              evaluate_sample("vm", rec, s, sep, &ck.params, a, cfg.train, masks_for(rec, s)));
        }
      }
    } else {
      for (const auto& rec : recs) {
        const auto s = load_sample(eval_manifest, rec);
        rows.push_back(
            evaluate_sample(system, rec, s, sep, nullptr, 0.0, cfg.train, masks_for(rec, s)));
      }
    }
  }
  const std::string csv_path = (fs::path(args.out_dir) / "eval.csv").string();
  write_csv(csv_path, rows);
  std::cout << "wrote " << rows.size() << " rows to " << csv_path << "\n\n";
  std::cout << "| system | alpha | SDR_VM (dB) | SDR_BF (dB) |\n|---|---|---|---|\n";
  for (const auto& s : summarize(rows)) {
    char line[128];
    std::snprintf(line, sizeof(line), "| %s | %s | %s | %6.2f |\n", s.system.c_str(),
                  std::isnan(s.alpha) ? "-" : alpha_tag(s.alpha).c_str(),
                  std::isnan(s.mean_sdr_vm) ? "-" : std::to_string(s.mean_sdr_vm).substr(0, 6).c_str(),
                  s.mean_sdr_bf);
    std::cout << line;
  }
}

void cmd_report(const CommonArgs& args, const std::vector<std::string>& csvs) {
  std::vector<EvalRow> rows;
  std::vector<std::string> paths = csvs;
  if (paths.empty()) paths.push_back((fs::path(args.out_dir) / "eval.csv").string());
  for (const auto& p : paths) {
    auto r = read_csv(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const std::string report_dir = (fs::path(args.out_dir) / "report").string();
  write_report(report_dir, rows);
  std::cout << "report written to " << report_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multichannel speech enhancement with a learned virtual microphone"};
  app.require_subcommand(1);

  CommonArgs args;
  bool resume = false;
  std::string systems_arg;
  std::vector<std::string> csv_paths;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    auto* c = sub->add_option("--config", args.config_path, "run config (JSON)");
    if (config_required) c->required();
    sub->add_option("--out", args.out_dir, "working/output directory")->required();
    sub->add_option("--seed", args.seed, "master seed override");
    sub->add_option("--alpha", args.alpha, "multi-task weight override");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the train/dev/eval mixtures");
  add_common(gen);
  auto* tsep = app.add_subcommand("train-sep", "train the source separator");
  add_common(tsep);
  tsep->add_flag("--resume", resume, "continue from the saved checkpoint");
  auto* tvme = app.add_subcommand("train-vme", "train the virtual microphone estimator");
  add_common(tvme);
  tvme->add_flag("--resume", resume, "continue from the saved checkpoint");
  auto* ev = app.add_subcommand("evaluate", "run the metric sweep on the eval split");
  add_common(ev);
  ev->add_option("--systems", systems_arg, "comma list: mixture,rm2,rm3,vm");
  auto* rep = app.add_subcommand("report", "summarize evaluation CSVs into plots and markdown");
  add_common(rep, /*config_required=*/false);
  rep->add_option("--csv", csv_paths, "evaluation CSV paths (default <out>/eval.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) cmd_gen_data(args);
    if (tsep->parsed()) cmd_train_sep(args, resume);
    if (tvme->parsed()) cmd_train_vme(args, resume);
    if (ev->parsed()) cmd_evaluate(args, systems_arg);
    if (rep->parsed()) cmd_report(args, csv_paths);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    const char* category = msg.find("diverged") != std::string::npos ? "training" : "io";
    std::cerr << "error: " << category << ": " << msg << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
