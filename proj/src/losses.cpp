#include "gpm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

using Labels = std::span<const std::int64_t>;

struct AnchorSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

void check_batch(const Matrix& sim, Labels labels) {
  if (sim.rows() != sim.cols() || sim.rows() != labels.size()) {
    throw DimensionError("loss: similarity matrix must be BxB with B labels");
  }
  bool has_negative = false;
  bool has_positive = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) has_positive = true;
      else has_negative = true;
    }
  }
  if (!has_negative) throw PreconditionError("loss: batch contains a single place (no negatives)");
  if (!has_positive) throw PreconditionError("loss: no place has two images in the batch");
}

AnchorSets anchor_sets(Labels labels, std::size_t a) {
  AnchorSets s;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (j == a) continue;
    (labels[j] == labels[a] ? s.positives : s.negatives).push_back(j);
  }
  return s;
}

std::size_t hardest_positive(const Matrix& sim, std::size_t a, const std::vector<std::size_t>& pos) {
  std::size_t best = pos.front();
  for (std::size_t p : pos)
    if (sim(a, p) < sim(a, best)) best = p;
  return best;
}

std::size_t hardest_negative(const Matrix& sim, std::size_t a, const std::vector<std::size_t>& neg) {
  std::size_t best = neg.front();
  for (std::size_t n : neg)
    if (sim(a, n) > sim(a, best)) best = n;
  return best;
}

double min_sim(const Matrix& sim, std::size_t a, const std::vector<std::size_t>& idx) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t j : idx) m = std::min(m, sim(a, j));
  return m;
}

double max_sim(const Matrix& sim, std::size_t a, const std::vector<std::size_t>& idx) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j : idx) m = std::max(m, sim(a, j));
  return m;
}

/// log(1 + Σ e^{x_k}), stabilized.
double log1p_sum_exp(const std::vector<double>& xs) {
  double hi = 0.0;
  for (double x : xs) hi = std::max(hi, x);
  double s = std::exp(-hi);
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

struct MsMined {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

MsMined ms_mine(const Matrix& sim, std::size_t a, const AnchorSets& sets, const LossConfig& cfg) {
  MsMined out;
  if (sets.positives.empty() || sets.negatives.empty()) return out;
  const double min_pos = min_sim(sim, a, sets.positives);
  const double max_neg = max_sim(sim, a, sets.negatives);
  for (std::size_t p : sets.positives)
    if (sim(a, p) < max_neg + cfg.ms_epsilon) out.positives.push_back(p);
  for (std::size_t n : sets.negatives)
    if (sim(a, n) > min_pos - cfg.ms_epsilon) out.negatives.push_back(n);
  return out;
}

MiningStats triplet_stats(const Matrix& sim, std::size_t a, const AnchorSets& s, double margin) {
  MiningStats st;
  for (std::size_t p : s.positives) {
    for (std::size_t n : s.negatives) {
      ++st.candidates;
      if (margin - sim(a, p) + sim(a, n) > 0.0) ++st.informative;
    }
  }
  return st;
}

double contrastive_pos_gap(const LossConfig& cfg, double s) {
  return std::max(0.0, (1.0 - cfg.contrastive_pos_margin) - s);
}

double contrastive_neg_gap(const LossConfig& cfg, double s) {
  return std::max(0.0, s - cfg.contrastive_neg_margin);
}

void scale(Matrix& m, double factor) {
  for (double& v : m.data()) v *= factor;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::triplet: return "triplet";
    case LossKind::contrastive: return "contrastive";
    case LossKind::multi_similarity: return "multi_similarity";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "triplet") return LossKind::triplet;
  if (name == "contrastive") return LossKind::contrastive;
  if (name == "multi_similarity" || name == "ms") return LossKind::multi_similarity;
  throw ConfigError("unknown loss kind '" + std::string(name) +
                    "' (expected triplet|contrastive|multi_similarity)");
}

void LossConfig::validate() const {
  if (!(triplet_margin > 0.0)) throw ConfigError("loss.triplet_margin must be positive");
  if (!(contrastive_pos_margin >= 0.0)) throw ConfigError("loss.contrastive_pos_margin must be >= 0");
  if (!(contrastive_neg_margin > 0.0)) throw ConfigError("loss.contrastive_neg_margin must be positive");
  if (!(ms_alpha > 0.0) || !(ms_beta > 0.0)) throw ConfigError("loss.ms_alpha/ms_beta must be positive");
  if (!(ms_lambda > 0.0 && ms_lambda < 1.0)) throw ConfigError("loss.ms_lambda must be in (0,1)");
  if (!(ms_epsilon >= 0.0)) throw ConfigError("loss.ms_epsilon must be >= 0");
}

Matrix pairwise_similarity(const Matrix& emb) {
  Matrix s(emb.rows(), emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    for (std::size_t j = i; j < emb.rows(); ++j) {
      const double v = dot(emb.row(i), emb.row(j));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

Matrix similarity_grad_to_embeddings(const Matrix& grad_sim, const Matrix& emb) {
  if (grad_sim.rows() != emb.rows() || grad_sim.cols() != emb.rows()) {
    throw DimensionError("similarity_grad_to_embeddings: gradient must be BxB");
  }
  Matrix sym(grad_sim.rows(), grad_sim.cols());
  for (std::size_t i = 0; i < sym.rows(); ++i)
    for (std::size_t j = 0; j < sym.cols(); ++j) sym(i, j) = grad_sim(i, j) + grad_sim(j, i);
  return matmul(sym, emb);
}

LossOutput triplet_loss(const Matrix& sim, Labels labels, const LossConfig& cfg) {
  check_batch(sim, labels);
  const std::size_t b = labels.size();
  const double m = cfg.triplet_margin;
  LossOutput out;
  out.grad_sim = Matrix(b, b);
  double normalizer = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    if (s.positives.empty()) continue;
    out.stats += triplet_stats(sim, a, s, m);
    if (cfg.ohm_enabled) {
      const std::size_t p = hardest_positive(sim, a, s.positives);
      const std::size_t n = hardest_negative(sim, a, s.negatives);
      normalizer += 1.0;
      const double hinge = m - sim(a, p) + sim(a, n);
      if (hinge > 0.0) {
        out.value += hinge;
        out.grad_sim(a, p) -= 1.0;
        out.grad_sim(a, n) += 1.0;
      }
    } else {
      normalizer += static_cast<double>(s.positives.size() * s.negatives.size());
      for (std::size_t p : s.positives) {
        for (std::size_t n : s.negatives) {
          const double hinge = m - sim(a, p) + sim(a, n);
          if (hinge > 0.0) {
            out.value += hinge;
            out.grad_sim(a, p) -= 1.0;
            out.grad_sim(a, n) += 1.0;
          }
        }
      }
    }
  }
  out.value /= normalizer;
  scale(out.grad_sim, 1.0 / normalizer);
  return out;
}

LossOutput contrastive_loss(const Matrix& sim, Labels labels, const LossConfig& cfg) {
  check_batch(sim, labels);
  const std::size_t b = labels.size();
  LossOutput out;
  out.grad_sim = Matrix(b, b);
  double anchors = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    for (std::size_t p : s.positives) {
      ++out.stats.candidates;
      if (contrastive_pos_gap(cfg, sim(a, p)) > 0.0) ++out.stats.informative;
    }
    for (std::size_t n : s.negatives) {
      ++out.stats.candidates;
      if (contrastive_neg_gap(cfg, sim(a, n)) > 0.0) ++out.stats.informative;
    }
    if (s.positives.empty()) continue;
    anchors += 1.0;

    // Positive and negative terms are averaged separately over the kept pairs.
    auto add_mean = [&](const std::vector<std::size_t>& kept, auto gap_of, double sign) {
      if (kept.empty()) return;
      const double w = 1.0 / static_cast<double>(kept.size());
      for (std::size_t j : kept) {
        const double gap = gap_of(sim(a, j));
        out.value += w * gap * gap;
        out.grad_sim(a, j) += sign * 2.0 * w * gap;
      }
    };
    const auto pos_gap = [&](double v) { return contrastive_pos_gap(cfg, v); };
    const auto neg_gap = [&](double v) { return contrastive_neg_gap(cfg, v); };
    if (cfg.ohm_enabled) {
      std::vector<std::size_t> violating;
      for (std::size_t n : s.negatives)
        if (neg_gap(sim(a, n)) > 0.0) violating.push_back(n);
      add_mean({hardest_positive(sim, a, s.positives)}, pos_gap, -1.0);
      add_mean(violating, neg_gap, 1.0);
    } else {
      add_mean(s.positives, pos_gap, -1.0);
      add_mean(s.negatives, neg_gap, 1.0);
    }
  }
  out.value /= anchors;
  scale(out.grad_sim, 1.0 / anchors);
  return out;
}

LossOutput multi_similarity_loss(const Matrix& sim, Labels labels, const LossConfig& cfg) {
  check_batch(sim, labels);
  const std::size_t b = labels.size();
  const double alpha = cfg.ms_alpha;
  const double beta = cfg.ms_beta;
  const double lambda = cfg.ms_lambda;
  LossOutput out;
  out.grad_sim = Matrix(b, b);
  double anchors = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    const MsMined mined = ms_mine(sim, a, s, cfg);
    out.stats.candidates += static_cast<std::int64_t>(s.positives.size() + s.negatives.size());
    out.stats.informative += static_cast<std::int64_t>(mined.positives.size() + mined.negatives.size());

    const auto& pos = cfg.ohm_enabled ? mined.positives : s.positives;
    const auto& neg = cfg.ohm_enabled ? mined.negatives : s.negatives;
    if (pos.empty() || neg.empty()) continue;
    anchors += 1.0;

    std::vector<double> xp;
    for (std::size_t p : pos) xp.push_back(-alpha * (sim(a, p) - lambda));
    const double lse_p = log1p_sum_exp(xp);
    out.value += lse_p / alpha;
    for (std::size_t k = 0; k < pos.size(); ++k) out.grad_sim(a, pos[k]) -= std::exp(xp[k] - lse_p);

    std::vector<double> xn;
    for (std::size_t n : neg) xn.push_back(beta * (sim(a, n) - lambda));
    const double lse_n = log1p_sum_exp(xn);
    out.value += lse_n / beta;
    for (std::size_t k = 0; k < neg.size(); ++k) out.grad_sim(a, neg[k]) += std::exp(xn[k] - lse_n);
  }
  if (anchors > 0.0) {
    out.value /= anchors;
    scale(out.grad_sim, 1.0 / anchors);
  }
  return out;
}

LossOutput compute_loss(const Matrix& sim, Labels labels, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::triplet: return triplet_loss(sim, labels, cfg);
    case LossKind::contrastive: return contrastive_loss(sim, labels, cfg);
    case LossKind::multi_similarity: return multi_similarity_loss(sim, labels, cfg);
  }
  throw ConfigError("compute_loss: unknown loss kind");
}

BatchInformativeness batch_informativeness(const Matrix& sim, Labels labels, const LossConfig& cfg) {
  if (sim.rows() != sim.cols() || sim.rows() != labels.size()) {
    throw DimensionError("batch_informativeness: similarity matrix must be BxB with B labels");
  }
  BatchInformativeness info;
  const double m = cfg.triplet_margin;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    if (!s.positives.empty()) info.triplets += triplet_stats(sim, a, s, m);
    info.pairs.candidates += static_cast<std::int64_t>(s.positives.size() + s.negatives.size());

    switch (cfg.kind) {
      case LossKind::triplet: {
        // A pair is informative if it takes part in a margin-violating triplet.
        if (s.positives.empty() || s.negatives.empty()) break;
        const double max_neg = max_sim(sim, a, s.negatives);
        const double min_pos = min_sim(sim, a, s.positives);
        for (std::size_t p : s.positives)
          if (m - sim(a, p) + max_neg > 0.0) ++info.pairs.informative;
        for (std::size_t n : s.negatives)
          if (m - min_pos + sim(a, n) > 0.0) ++info.pairs.informative;
        break;
      }
      case LossKind::contrastive:
        for (std::size_t p : s.positives)
          if (contrastive_pos_gap(cfg, sim(a, p)) > 0.0) ++info.pairs.informative;
        for (std::size_t n : s.negatives)
          if (contrastive_neg_gap(cfg, sim(a, n)) > 0.0) ++info.pairs.informative;
        break;
      case LossKind::multi_similarity: {
        const MsMined mined = ms_mine(sim, a, s, cfg);
        info.pairs.informative +=
            static_cast<std::int64_t>(mined.positives.size() + mined.negatives.size());
        break;
      }
    }
  }
  return info;
}

void InformativeFraction::add(const MiningStats& batch) {
  if (batch.candidates == 0) return;
  fractions_.push_back(batch.fraction());
  if (window_ > 0 && fractions_.size() > window_) fractions_.pop_front();
}

double InformativeFraction::value() const {
  if (fractions_.empty()) throw PreconditionError("informative fraction: no candidates recorded");
  double sum = 0.0;
  for (double f : fractions_) sum += f;
  return sum / static_cast<double>(fractions_.size());
}

double informative_fraction(std::span<const MiningStats> batches) {
  InformativeFraction acc;
  for (const MiningStats& s : batches) acc.add(s);
  return acc.value();
}

}  // namespace gpm
