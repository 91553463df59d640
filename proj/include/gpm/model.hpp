#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpm/numerics.hpp"

namespace gpm {

struct EncoderConfig {
  std::int64_t input_dim = 32;
  std::int64_t hidden_dim = 64;
  std::int64_t embed_dim = 32;
  std::int64_t proxy_dim = 24;
  std::uint64_t seed = 0;
  /// Stop gradients of the proxy-branch loss at the head input.
  bool detach_proxy_input = false;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Intermediate values of one encoder forward pass, kept for backward.
struct EncoderTrace {
  Matrix input;
  Matrix hidden;            // tanh(input·W1 + b1)
  std::vector<double> norms;  // ‖hidden·W2 + b2‖ per row
  Matrix output;            // row-normalized
};

/// Two-layer tanh MLP with L2-normalized output: the main branch.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);

  /// Unit-norm embeddings, one row per input row.
  Matrix forward(const Matrix& features) const { return trace(features).output; }
  EncoderTrace trace(const Matrix& features) const;
  /// Accumulates parameter gradients for dL/d(output) = grad_out.
  void backward(const EncoderTrace& t, const Matrix& grad_out);

  std::vector<ParamTensor*> parameters() { return {&w1, &b1, &w2, &b2}; }
  std::vector<const ParamTensor*> parameters() const { return {&w1, &b1, &w2, &b2}; }

  ParamTensor w1, b1, w2, b2;
};

struct HeadTrace {
  Matrix input;
  std::vector<double> norms;
  Matrix output;
};

/// Fully connected projection d → d′ followed by L2 normalization.
class ProxyHead {
 public:
  ProxyHead() = default;
  ProxyHead(std::int64_t in_dim, std::int64_t out_dim, std::uint64_t seed, bool detach_input);

  Matrix forward(const Matrix& x) const { return trace(x).output; }
  HeadTrace trace(const Matrix& x) const;
  /// Accumulates head gradients and returns dL/d(input); the returned
  /// matrix is all zeros when detach_input is set.
  Matrix backward(const HeadTrace& t, const Matrix& grad_out);

  std::vector<ParamTensor*> parameters() { return {&w, &b}; }
  std::vector<const ParamTensor*> parameters() const { return {&w, &b}; }

  ParamTensor w, b;
  bool detach_input = false;
};

/// Main-branch embeddings x and proxy projections z for one mini-batch.
struct EmbeddingBatch {
  Matrix x;
  Matrix z;
  std::vector<std::int64_t> labels;
  int images_per_place = 0;
};

struct ForwardPass {
  EncoderTrace encoder;
  HeadTrace head;
  const Matrix& x() const { return encoder.output; }
  const Matrix& z() const { return head.output; }
};

class TwoBranchModel {
 public:
  TwoBranchModel() = default;
  explicit TwoBranchModel(const EncoderConfig& cfg);

  ForwardPass forward(const Matrix& features) const;
  /// Backpropagates both branch gradients into encoder and head.
  void backward(const ForwardPass& pass, const Matrix& grad_x, const Matrix& grad_z);

  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
  void zero_grad();

  const EncoderConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  ProxyHead& head() { return head_; }
  const ProxyHead& head() const { return head_; }

  /// Versioned binary checkpoint; load(save(m)) reproduces every value bit for bit.
  void save(const std::string& path) const;
  static TwoBranchModel load(const std::string& path);

  friend bool operator==(const TwoBranchModel& a, const TwoBranchModel& b);

 private:
  EncoderConfig cfg_;
  Encoder encoder_;
  ProxyHead head_;
};

/// Free-function spellings of the two forward passes.
inline Matrix encode_forward(const Encoder& e, const Matrix& features) { return e.forward(features); }
inline Matrix proxy_forward(const ProxyHead& h, const Matrix& x) { return h.forward(x); }

/// Backprop through row-wise L2 normalization y = u/‖u‖:
/// dL/du = (g − y·(y·g)) / ‖u‖.
Matrix normalize_rows_backward(const Matrix& y, std::span<const double> norms, const Matrix& g);

}  // namespace gpm
