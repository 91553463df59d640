#include "gpm/outputs.hpp"

#include <iomanip>
#include <ostream>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << std::setprecision(17);
  return os;
}

}  // namespace

RunWriter::RunWriter(std::filesystem::path out_dir, const RunConfig& cfg, std::ostream* log)
    : dir_(std::move(out_dir)), cfg_(cfg), log_(log) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
  cfg_.save_file((dir_ / "config.txt").string());

  metrics_ = open_csv(dir_ / "metrics.csv");
  metrics_ << "epoch,learning_rate,plan_mode,n_tuples,n_steps,loss_value,"
              "fraction_informative_pairs,fraction_informative_triplets,"
              "recall@1,recall@5,recall@10\n";
  fractions_ = open_csv(dir_ / "fractions.csv");
  fractions_ << "step,epoch,loss_value,fraction_informative_pairs,fraction_informative_triplets\n";
}

void RunWriter::on_message(const std::string& msg) {
  if (log_) *log_ << msg << '\n';
}

void RunWriter::on_plan(const BatchPlan& plan) {
  if (!cfg_.train.dump_plans) return;
  std::ofstream os(dir_ / ("plan_epoch" + std::to_string(plan.epoch) + ".txt"));
  plan.save(os);
}

void RunWriter::on_interval(const IntervalRecord& r) {
  fractions_ << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.pair_fraction << ','
             << r.triplet_fraction << '\n';
}

void RunWriter::on_epoch(const EpochRecord& r, const TwoBranchModel& model, const MemoryBank&) {
  metrics_ << r.epoch << ',' << r.learning_rate << ',' << to_string(r.plan_mode) << ',' << r.n_tuples
           << ',' << r.n_steps << ',' << r.mean_loss << ',' << r.pair_fraction << ','
           << r.triplet_fraction;
  for (int k : kDefaultRecallKs) {
    metrics_ << ',';
    if (r.recall) metrics_ << r.recall->at(k);
  }
  metrics_ << '\n';
  metrics_.flush();
  fractions_.flush();

  if (log_) {
    *log_ << "epoch " << r.epoch << ": loss " << r.mean_loss << ", informative pairs "
          << r.pair_fraction << ", triplets " << r.triplet_fraction;
    if (r.recall) *log_ << ", recall@1 " << r.recall->at(1);
    *log_ << '\n';
  }
  if (cfg_.train.save_checkpoints) {
    model.save((dir_ / ("checkpoint_epoch" + std::to_string(r.epoch) + ".bin")).string());
  }
}

void RunWriter::on_abort(const std::string& diagnostic, const TwoBranchModel& model) {
  std::ofstream os(dir_ / "abort_dump.txt");
  os << diagnostic;
  model.save((dir_ / "abort_checkpoint.bin").string());
  if (log_) *log_ << "aborting: " << diagnostic;
}

void RunWriter::finish(const TrainResult& result) {
  result.model.save((dir_ / "model.bin").string());
  {
    auto os = open_csv(dir_ / "bank.csv");
    result.bank.save_csv(os);
  }
  auto os = open_csv(dir_ / "cost.csv");
  write_cost_csv(os, result.cost);
}

void write_recall_header(std::ostream& os) {
  os << "n_queries,n_references";
  for (int k : kDefaultRecallKs) os << ",recall@" << k;
  os << '\n';
}

void write_recall_row(std::ostream& os, const RecallReport& r) {
  os << std::setprecision(17) << r.n_queries << ',' << r.n_references;
  for (const auto& [k, v] : r.recall_at) os << ',' << v;
  os << '\n';
}

void write_cost_csv(std::ostream& os, const CostReport& c) {
  os << std::setprecision(17)
     << "proxy_dim,n_places,bytes_per_float,bank_bytes,bank_gb,plan_build_seconds,epoch_seconds\n"
     << c.proxy_dim << ',' << c.n_places << ',' << c.bytes_per_float << ',' << c.bank_bytes << ','
     << c.bank_gigabytes() << ',' << c.plan_build_seconds << ',' << c.epoch_seconds << '\n';
}

}  // namespace gpm
