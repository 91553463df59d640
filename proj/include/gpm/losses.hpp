#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>

#include "gpm/numerics.hpp"

namespace gpm {

enum class LossKind { triplet, contrastive, multi_similarity };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::multi_similarity;
  /// Triplet margin in cosine-similarity units.
  double triplet_margin = 0.1;
  /// Positive pairs are pulled up to similarity 1 − contrastive_pos_margin.
  double contrastive_pos_margin = 0.0;
  /// Negative pairs are pushed below this similarity.
  double contrastive_neg_margin = 0.5;
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_lambda = 0.5;
  double ms_epsilon = 0.1;
  /// Online hard mining: restrict the loss to informative pairs/triplets.
  bool ohm_enabled = true;

  void validate() const;
};

struct MiningStats {
  std::int64_t candidates = 0;
  std::int64_t informative = 0;

  double fraction() const {
    return static_cast<double>(informative) / static_cast<double>(candidates > 0 ? candidates : 1);
  }
  MiningStats& operator+=(const MiningStats& o) {
    candidates += o.candidates;
    informative += o.informative;
    return *this;
  }
};

struct LossOutput {
  double value = 0.0;
  /// dL/dS for the similarity matrix S the loss was evaluated on.
  Matrix grad_sim;
  /// Triplets for the triplet loss, ordered anchor pairs for the others.
  MiningStats stats;
};

/// S = E·Eᵀ for unit-norm rows of E (cosine similarity).
Matrix pairwise_similarity(const Matrix& emb);

/// Chain rule through S = E·Eᵀ: dL/dE = (G + Gᵀ)·E.
Matrix similarity_grad_to_embeddings(const Matrix& grad_sim, const Matrix& emb);

/// Margin ranking loss max(0, m − s_ap + s_an). With OHM it is batch-hard:
/// one triplet per anchor from its least similar positive and most similar
/// negative, averaged over anchors. Without OHM it is the mean over every
/// valid (anchor, positive, negative) triplet in the batch.
LossOutput triplet_loss(const Matrix& sim, std::span<const std::int64_t> labels,
                        const LossConfig& cfg);

/// Per anchor: mean_p max(0, (1 − pos_margin) − s)² + mean_n max(0, s − neg_margin)²,
/// averaged over anchors that have a positive. Without OHM the means run over
/// all positives and all negatives. With OHM the positive term uses only the
/// hardest positive and the negative mean runs over violating negatives.
LossOutput contrastive_loss(const Matrix& sim, std::span<const std::int64_t> labels,
                            const LossConfig& cfg);

/// Multi-similarity loss
///   (1/α)·log(1 + Σ_p e^{−α(s_p − λ)}) + (1/β)·log(1 + Σ_n e^{β(s_n − λ)})
/// per anchor, averaged over anchors that keep at least one positive and one
/// negative. With OHM, negatives need s_n > min_p s_p − ε and positives need
/// s_p < max_n s_n + ε.
LossOutput multi_similarity_loss(const Matrix& sim, std::span<const std::int64_t> labels,
                                 const LossConfig& cfg);

/// Dispatches on cfg.kind.
LossOutput compute_loss(const Matrix& sim, std::span<const std::int64_t> labels,
                        const LossConfig& cfg);

/// Informativeness of a mini-batch independent of which terms the loss
/// keeps: triplets violating the triplet margin, and ordered pairs that are
/// active under cfg.kind's own rule.
struct BatchInformativeness {
  MiningStats pairs;
  MiningStats triplets;
};

BatchInformativeness batch_informativeness(const Matrix& sim,
                                           std::span<const std::int64_t> labels,
                                           const LossConfig& cfg);

/// Sliding mean of per-batch informative fractions.
class InformativeFraction {
 public:
  explicit InformativeFraction(std::size_t window = 0) : window_(window) {}

  void add(const MiningStats& batch);
  /// Mean of the per-batch fractions currently held. Throws
  /// PreconditionError if no batch has been recorded.
  double value() const;
  std::size_t count() const { return fractions_.size(); }
  void reset() { fractions_.clear(); }

 private:
  std::size_t window_;  // 0 = unbounded
  std::deque<double> fractions_;
};

double informative_fraction(std::span<const MiningStats> batches);

}  // namespace gpm
