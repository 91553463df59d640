#include "gpm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "gpm/errors.hpp"
#include "gpm/losses.hpp"

namespace gpm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool params_finite(const TwoBranchModel& model) {
  for (const ParamTensor* p : model.parameters())
    if (!p->value.all_finite() || !p->grad.all_finite()) return false;
  return true;
}

std::string describe_batch(const AssembledBatch& batch, int epoch, int step, double loss_x, double loss_z) {
  std::ostringstream os;
  os << "non-finite training state at epoch " << epoch << " step " << step << "\n"
     << "loss_x=" << loss_x << " loss_z=" << loss_z << "\nplaces:";
  for (PlaceId id : batch.places) os << ' ' << id;
  os << '\n';
  return os.str();
}

/// Rows of `z` belonging to each place of the batch (K consecutive rows).
Matrix place_rows(const Matrix& z, std::span<const std::int64_t> labels, PlaceId place) {
  std::vector<Vector> rows;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] == place) rows.emplace_back(z.row(r).begin(), z.row(r).end());
  return Matrix::from_rows(rows);
}

}  // namespace

TrainResult train(const RunConfig& cfg, const PlaceDataset& train_set, const EvalSplit& eval,
                  TrainObserver* observer) {
  cfg.validate();
  train_set.validate();
  if (cfg.model.input_dim != train_set.feature_dim) {
    throw ConfigError("model.input_dim (" + std::to_string(cfg.model.input_dim) +
                      ") differs from dataset feature_dim (" + std::to_string(train_set.feature_dim) + ")");
  }
  TrainObserver null_observer;
  TrainObserver& obs = observer ? *observer : null_observer;

  TrainResult result;
  result.model = TwoBranchModel(cfg.model);
  TwoBranchModel& model = result.model;
  MemoryBank& bank = result.bank;
  const std::vector<PlaceId> places = train_set.place_ids();
  const auto k_images = static_cast<std::size_t>(cfg.sampler.images_per_place);
  const double proxy_weight = cfg.train.proxy_loss_weight;

  int step = 0;
  double interval_loss = 0.0;
  InformativeFraction interval_pairs, interval_triplets;
  int interval_steps = 0;
  Timings last_timings;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = cfg.sgd.learning_rate_at(epoch);

    const auto plan_start = Clock::now();
    BatchPlan plan = epoch_boundary(bank, places, epoch, cfg.sampler);
    rec.plan_seconds = seconds_since(plan_start);
    rec.plan_mode = plan.mode;
    rec.n_tuples = plan.tuples.size();
    rec.plan_is_partition = plan.is_partition_of(places);
    if (!rec.plan_is_partition) throw Error("internal: epoch plan is not a partition of the places");
    {
      std::ostringstream os;
      os << "epoch " << epoch << " plan: " << to_string(plan.mode) << ", " << plan.tuples.size()
         << " tuples covering " << plan.n_places() << "/" << places.size() << " places (partition ok)";
      obs.on_message(os.str());
    }
    obs.on_plan(plan);

    BatchSampler sampler(std::move(plan), epoch_seed(cfg.sampler.seed ^ 0x5bd1e995ull, epoch));
    InformativeFraction epoch_pairs, epoch_triplets;
    double epoch_loss = 0.0;

    while (auto slots = sampler.next_batch(train_set, k_images)) {
      const AssembledBatch batch = assemble_batch(train_set, *slots);
      const ForwardPass pass = model.forward(batch.features);

      // Cache detached per-place proxies.
      for (PlaceId id : batch.places) {
        try {
          const Vector proxy = compute_place_proxy(place_rows(pass.z(), batch.labels, id));
          bank.update(id, proxy, epoch);
        } catch (const DegenerateInputError&) {
          ++rec.degenerate_proxies;
          obs.on_message("degenerate proxy for place " + std::to_string(id) + "; keeping previous");
        }
      }
      if (batch.places.size() < 2) continue;  // no negatives: proxies only

      const Matrix sim_x = pairwise_similarity(pass.x());
      const LossOutput loss_x = compute_loss(sim_x, batch.labels, cfg.loss);
      const Matrix sim_z = pairwise_similarity(pass.z());
      const LossOutput loss_z = compute_loss(sim_z, batch.labels, cfg.loss);
      const double total = loss_x.value + proxy_weight * loss_z.value;
      if (!std::isfinite(total)) {
        const auto msg = describe_batch(batch, epoch, step, loss_x.value, loss_z.value);
        obs.on_abort(msg, model);
        throw TrainingAborted(msg);
      }

      const BatchInformativeness info = batch_informativeness(sim_x, batch.labels, cfg.loss);
      epoch_pairs.add(info.pairs);
      epoch_triplets.add(info.triplets);
      interval_pairs.add(info.pairs);
      interval_triplets.add(info.triplets);

      Matrix grad_z = similarity_grad_to_embeddings(loss_z.grad_sim, pass.z());
      for (double& g : grad_z.data()) g *= proxy_weight;
      model.backward(pass, similarity_grad_to_embeddings(loss_x.grad_sim, pass.x()), grad_z);
      if (!params_finite(model)) {
        const auto msg = describe_batch(batch, epoch, step, loss_x.value, loss_z.value);
        obs.on_abort(msg, model);
        throw TrainingAborted(msg);
      }
      auto params = model.parameters();
      sgd_step(params, cfg.sgd, epoch);

      epoch_loss += total;
      interval_loss += total;
      ++rec.n_steps;
      ++interval_steps;
      ++step;
      if (interval_steps == cfg.train.log_interval) {
        IntervalRecord ir{step, epoch, interval_loss / interval_steps,
                          interval_pairs.count() ? interval_pairs.value() : 0.0,
                          interval_triplets.count() ? interval_triplets.value() : 0.0};
        result.intervals.push_back(ir);
        obs.on_interval(ir);
        interval_loss = 0.0;
        interval_steps = 0;
        interval_pairs.reset();
        interval_triplets.reset();
      }
    }

    rec.mean_loss = rec.n_steps ? epoch_loss / static_cast<double>(rec.n_steps) : 0.0;
    rec.pair_fraction = epoch_pairs.count() ? epoch_pairs.value() : 0.0;
    rec.triplet_fraction = epoch_triplets.count() ? epoch_triplets.value() : 0.0;
    rec.epoch_seconds = seconds_since(epoch_start);
    last_timings = {rec.plan_seconds, rec.epoch_seconds};

    const bool last = epoch + 1 == cfg.train.epochs;
    const bool scheduled = cfg.train.eval_every > 0 && (epoch + 1) % cfg.train.eval_every == 0;
    if ((last || scheduled) && eval.query_features.rows() > 0) {
      rec.recall = recall_at_k(model.encoder(), eval);
    }
    result.epochs.push_back(rec);
    obs.on_epoch(rec, model, bank);
  }

  if (result.epochs.back().recall) result.final_recall = *result.epochs.back().recall;
  if (!bank.empty()) result.cost = cost_report(bank, last_timings, sizeof(double));
  return result;
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData out;
  out.full = cfg.train.dataset_path.empty() ? generate(cfg.data) : load(cfg.train.dataset_path);
  out.split = make_holdout_split(out.full, cfg.train.holdout_fraction, cfg.train.split_seed);
  return out;
}

TrainResult run_experiment(RunConfig cfg, TrainObserver* observer) {
  const PreparedData data = prepare_data(cfg);
  cfg.model.input_dim = data.full.feature_dim;
  if (observer && !data.split.skipped.empty()) {
    observer->on_message(std::to_string(data.split.skipped.size()) +
                         " places too small to hold out queries; kept as references only");
  }
  return train(cfg, data.split.train, data.split.eval, observer);
}

}  // namespace gpm
