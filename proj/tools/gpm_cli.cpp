#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpm/ablation.hpp"
#include "gpm/config.hpp"
#include "gpm/dataset.hpp"
#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "gpm/outputs.hpp"
#include "gpm/trainer.hpp"

namespace fs = std::filesystem;
using namespace gpm;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::string preset = "desk";
  std::int64_t seed = -1;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--set", o.sets, "override one key (repeatable), e.g. --set sampler.M=8");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "master seed (derives data/model/sampler/split seeds)");
  cmd->add_option("--preset", o.preset, "base preset")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--threads", o.threads, "worker threads (ablate runs cells in parallel)")
      ->check(CLI::PositiveNumber);
}

/// preset, then config file, then --seed, then --set overrides in order.
RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = RunConfig::preset(o.preset);
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  if (o.seed >= 0) cfg.set_seed(static_cast<std::uint64_t>(o.seed));
  for (const std::string& s : o.sets) cfg.apply(s);
  cfg.validate();
  return cfg;
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw Error("cannot create " + o.out + ": " + ec.message());
  return o.out;
}

int cmd_generate(const CommonOptions& o, bool csv) {
  const RunConfig cfg = resolve(o);
  const fs::path out = require_out(o);
  const PlaceDataset ds = generate(cfg.data);
  save(ds, (out / "dataset.bin").string());
  cfg.save_file((out / "config.txt").string());
  if (csv) {
    std::ofstream os(out / "dataset.csv");
    export_csv(ds, os);
  }
  std::cerr << "wrote " << ds.places.size() << " places, " << ds.n_images() << " images to "
            << (out / "dataset.bin").string() << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  RunConfig cfg = resolve(o);
  const fs::path out = require_out(o);
  const PreparedData data = prepare_data(cfg);
  cfg.model.input_dim = data.full.feature_dim;
  RunWriter writer(out, cfg, &std::cerr);
  if (!data.split.skipped.empty()) {
    writer.on_message(std::to_string(data.split.skipped.size()) +
                      " places too small to hold out queries; kept as references only");
  }
  const TrainResult result = train(cfg, data.split.train, data.split.eval, &writer);
  writer.finish(result);
  std::cout << std::setprecision(6) << "recall@1 " << result.final_recall.at(1) << "  recall@5 "
            << result.final_recall.at(5) << "  recall@10 " << result.final_recall.at(10) << '\n';
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  const RunConfig cfg = resolve(o);
  const TwoBranchModel model = TwoBranchModel::load(checkpoint);
  const PreparedData data = prepare_data(cfg);
  if (model.config().input_dim != data.full.feature_dim) {
    throw DimensionError("checkpoint expects input_dim " + std::to_string(model.config().input_dim) +
                         " but the dataset has feature_dim " + std::to_string(data.full.feature_dim));
  }
  const RecallReport report = recall_at_k(model.encoder(), data.split.eval);
  if (o.out.empty()) {
    write_recall_header(std::cout);
    write_recall_row(std::cout, report);
  } else {
    const fs::path out = require_out(o);
    std::ofstream os(out / "recall.csv");
    write_recall_header(os);
    write_recall_row(os, report);
    cfg.save_file((out / "config.txt").string());
  }
  return 0;
}

std::vector<LossKind> parse_losses(const std::vector<std::string>& names) {
  std::vector<LossKind> out;
  for (const std::string& n : names) out.push_back(parse_loss_kind(n));
  return out;
}

int cmd_ablate(const CommonOptions& o, const std::string& grid, const std::vector<std::string>& losses,
               const std::vector<std::int64_t>& ms, int n_seeds) {
  RunConfig base = resolve(o);
  const fs::path out = require_out(o);
  base.train.save_checkpoints = false;

  std::vector<AblationCell> cells;
  if (grid == "table") {
    cells = loss_grid(parse_losses(losses), base.sampler.places_per_batch);
  } else {
    for (LossKind loss : parse_losses(losses)) {
      auto sweep = m_sweep_grid(loss, ms);
      cells.insert(cells.end(), sweep.begin(), sweep.end());
    }
  }
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < n_seeds; ++s) seeds.push_back(base.seed + static_cast<std::uint64_t>(s));

  base.save_file((out / "config.txt").string());
  std::cerr << cells.size() << " cells x " << seeds.size() << " seeds on " << o.threads << " thread(s)\n";
  const auto runs = run_ablation(base, cells, seeds, o.threads, [](const CellRun& r) {
    std::cerr << std::setprecision(4) << r.cell.name() << " seed " << r.seed << ": recall@1 "
              << r.recall_at_1 << " (" << r.seconds << " s)\n";
  });
  const auto summary = summarize(runs);
  {
    std::ofstream os(out / "runs.csv");
    write_runs_csv(os, runs);
  }
  std::ofstream os(out / "summary.csv");
  write_summary_csv(os, summary);
  write_summary_csv(std::cout, summary);
  return 0;
}

void inspect_dataset(const std::string& path) {
  const PlaceDataset ds = load(path);
  const auto& m = ds.meta;
  std::size_t min_imgs = SIZE_MAX, max_imgs = 0;
  for (const Place& p : ds.places) {
    min_imgs = std::min(min_imgs, p.images.rows());
    max_imgs = std::max(max_imgs, p.images.rows());
  }
  std::cout << "dataset " << path << "\n  places " << ds.places.size() << ", images " << ds.n_images()
            << " (" << min_imgs << ".." << max_imgs << " per place), feature_dim " << ds.feature_dim
            << "\n  generator: archetypes " << m.n_archetypes << ", within_place_noise "
            << m.within_place_noise << ", archetype_spread " << m.archetype_spread << ", nuisance " << m.nuisance_dims << "x"
            << m.nuisance_gain << (m.coarse_archetypes ? ", coarse archetypes" : "") << ", seed " << m.seed
            << '\n';
}

void inspect_checkpoint(const std::string& path) {
  const TwoBranchModel model = TwoBranchModel::load(path);
  const EncoderConfig& c = model.config();
  std::cout << "checkpoint " << path << "\n  input " << c.input_dim << " -> hidden " << c.hidden_dim
            << " -> embed " << c.embed_dim << " -> proxy " << c.proxy_dim
            << (c.detach_proxy_input ? " (detached)" : "") << '\n';
  std::size_t i = 0;
  for (const ParamTensor* p : model.parameters()) {
    double sq = 0.0;
    for (double v : p->value.data()) sq += v * v;
    std::cout << "  param " << i++ << ": " << p->value.rows() << "x" << p->value.cols() << ", norm "
              << std::sqrt(sq) << '\n';
  }
}

void inspect_bank(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  const MemoryBank bank = MemoryBank::load_csv(is);
  std::cout << "bank " << path << "\n  entries " << bank.size() << ", proxy_dim " << bank.proxy_dim()
            << ", " << bank.bytes(4) << " bytes at 4-byte floats (" << bank.bytes(4) / 1e9 << " GB)\n";
}

void inspect_plan(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  const BatchPlan plan = BatchPlan::load(is);
  std::vector<PlaceId> ids;
  std::size_t min_t = SIZE_MAX, max_t = 0;
  for (const auto& t : plan.tuples) {
    ids.insert(ids.end(), t.begin(), t.end());
    min_t = std::min(min_t, t.size());
    max_t = std::max(max_t, t.size());
  }
  std::sort(ids.begin(), ids.end());
  const bool unique = std::adjacent_find(ids.begin(), ids.end()) == ids.end();
  std::cout << "plan " << path << "\n  tuples " << plan.tuples.size() << " (" << min_t << ".." << max_t
            << " places), " << ids.size() << " places, " << (unique ? "no duplicates" : "DUPLICATES")
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global proxy-based hard mining for metric learning on synthetic place data"};
  app.require_subcommand(1);

  CommonOptions opt;
  bool csv = false;
  std::string checkpoint;
  std::string grid = "table";
  std::vector<std::string> losses{"triplet", "contrastive", "multi_similarity"};
  std::vector<std::int64_t> ms{8, 16, 32};
  int n_seeds = 3;
  std::string dataset_file, bank_file, plan_file;

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset into --out");
  add_common(gen, opt);
  gen->add_flag("--csv", csv, "also write dataset.csv");

  auto* tr = app.add_subcommand("train", "train one model; metrics, checkpoints and config go to --out");
  add_common(tr, opt);

  auto* ev = app.add_subcommand("eval", "recall@{1,5,10} of a checkpoint on the configured split");
  add_common(ev, opt);
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  auto* ab = app.add_subcommand("ablate", "loss x OHM x sampling grid, or an M sweep");
  add_common(ab, opt);
  ab->add_option("--grid", grid, "table | msweep")->check(CLI::IsMember({"table", "msweep"}));
  ab->add_option("--losses", losses, "losses to include");
  ab->add_option("--m", ms, "places per batch for the M sweep");
  ab->add_option("--seeds", n_seeds, "seeds per cell, starting at the master seed")->check(CLI::PositiveNumber);

  auto* in = app.add_subcommand("inspect", "summarize a dataset, checkpoint, bank or plan file, or the resolved config");
  add_common(in, opt);
  in->add_option("--dataset", dataset_file, "dataset file");
  in->add_option("--checkpoint", checkpoint, "model checkpoint");
  in->add_option("--bank", bank_file, "bank.csv");
  in->add_option("--plan", plan_file, "plan_epoch<N>.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(opt, csv);
    if (tr->parsed()) return cmd_train(opt);
    if (ev->parsed()) return cmd_eval(opt, checkpoint);
    if (ab->parsed()) return cmd_ablate(opt, grid, losses, ms, n_seeds);
    if (in->parsed()) {
      bool any = false;
      if (!dataset_file.empty()) inspect_dataset(dataset_file), any = true;
      if (!checkpoint.empty()) inspect_checkpoint(checkpoint), any = true;
      if (!bank_file.empty()) inspect_bank(bank_file), any = true;
      if (!plan_file.empty()) inspect_plan(plan_file), any = true;
      if (!any) resolve(opt).save(std::cout);
      return 0;
    }
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
