#include "gpm/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "gpm/errors.hpp"

namespace gpm {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'P', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

Matrix uniform_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

void add_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
  }
}

void accumulate_bias_grad(Matrix& bias_grad, const Matrix& g) {
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) bias_grad(0, c) += g(r, c);
}

void accumulate(Matrix& into, const Matrix& delta) {
  auto a = into.data();
  auto b = delta.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

/// Normalizes every row in place and returns the pre-normalization norms.
std::vector<double> normalize_rows(Matrix& m, const char* who) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = norm(row);
    if (!(n >= kDegenerateNorm)) {
      throw DegenerateInputError(std::string(who) + ": zero vector before normalization");
    }
    for (double& v : row) v /= n;
    norms[r] = n;
  }
  return norms;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1 || proxy_dim < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (proxy_dim > embed_dim) throw ConfigError("model.proxy_dim must not exceed model.embed_dim");
}

Matrix normalize_rows_backward(const Matrix& y, std::span<const double> norms, const Matrix& g) {
  if (y.rows() != g.rows() || y.cols() != g.cols() || norms.size() != y.rows()) {
    throw DimensionError("normalize_rows_backward: shape mismatch");
  }
  Matrix out(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double proj = dot(y.row(r), g.row(r));
    for (std::size_t c = 0; c < y.cols(); ++c) {
      out(r, c) = (g(r, c) - y(r, c) * proj) / norms[r];
    }
  }
  return out;
}

Encoder::Encoder(const EncoderConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto in = static_cast<std::size_t>(cfg.input_dim);
  const auto hid = static_cast<std::size_t>(cfg.hidden_dim);
  const auto out = static_cast<std::size_t>(cfg.embed_dim);
  w1 = ParamTensor(uniform_init(in, hid, rng));
  b1 = ParamTensor(1, hid);
  w2 = ParamTensor(uniform_init(hid, out, rng));
  b2 = ParamTensor(1, out);
}

EncoderTrace Encoder::trace(const Matrix& features) const {
  if (features.cols() != w1.value.rows()) {
    throw DimensionError("encoder: feature dimension " + std::to_string(features.cols()) +
                         " but model expects " + std::to_string(w1.value.rows()));
  }
  EncoderTrace t;
  t.input = features;
  t.hidden = matmul(features, w1.value);
  add_bias(t.hidden, b1.value);
  for (double& v : t.hidden.data()) v = std::tanh(v);
  t.output = matmul(t.hidden, w2.value);
  add_bias(t.output, b2.value);
  t.norms = normalize_rows(t.output, "encoder");
  return t;
}

void Encoder::backward(const EncoderTrace& t, const Matrix& grad_out) {
  const Matrix g_pre = normalize_rows_backward(t.output, t.norms, grad_out);
  accumulate(w2.grad, transposed_matmul(t.hidden, g_pre));
  accumulate_bias_grad(b2.grad, g_pre);
  Matrix g_hidden = matmul_transposed(g_pre, w2.value);
  auto gh = g_hidden.data();
  auto h = t.hidden.data();
  for (std::size_t i = 0; i < gh.size(); ++i) gh[i] *= 1.0 - h[i] * h[i];
  accumulate(w1.grad, transposed_matmul(t.input, g_hidden));
  accumulate_bias_grad(b1.grad, g_hidden);
}

ProxyHead::ProxyHead(std::int64_t in_dim, std::int64_t out_dim, std::uint64_t seed,
                     bool detach)
    : detach_input(detach) {
  std::mt19937_64 rng(seed);
  w = ParamTensor(uniform_init(static_cast<std::size_t>(in_dim),
                               static_cast<std::size_t>(out_dim), rng));
  b = ParamTensor(1, static_cast<std::size_t>(out_dim));
}

HeadTrace ProxyHead::trace(const Matrix& x) const {
  if (x.cols() != w.value.rows()) throw DimensionError("proxy head: input dimension mismatch");
  HeadTrace t;
  t.input = x;
  t.output = matmul(x, w.value);
  add_bias(t.output, b.value);
  t.norms = normalize_rows(t.output, "proxy head");
  return t;
}

Matrix ProxyHead::backward(const HeadTrace& t, const Matrix& grad_out) {
  const Matrix g_pre = normalize_rows_backward(t.output, t.norms, grad_out);
  accumulate(w.grad, transposed_matmul(t.input, g_pre));
  accumulate_bias_grad(b.grad, g_pre);
  if (detach_input) return Matrix(t.input.rows(), t.input.cols());
  return matmul_transposed(g_pre, w.value);
}

TwoBranchModel::TwoBranchModel(const EncoderConfig& cfg)
    : cfg_(cfg),
      encoder_(cfg),
      // Distinct stream for the head so changing proxy_dim leaves the encoder init unchanged.
      head_(cfg.embed_dim, cfg.proxy_dim, cfg.seed ^ 0x9E3779B97F4A7C15ull,
            cfg.detach_proxy_input) {}

ForwardPass TwoBranchModel::forward(const Matrix& features) const {
  ForwardPass pass;
  pass.encoder = encoder_.trace(features);
  pass.head = head_.trace(pass.encoder.output);
  return pass;
}

void TwoBranchModel::backward(const ForwardPass& pass, const Matrix& grad_x, const Matrix& grad_z) {
  if (grad_x.rows() != pass.x().rows() || grad_x.cols() != pass.x().cols() ||
      grad_z.rows() != pass.z().rows() || grad_z.cols() != pass.z().cols()) {
    throw DimensionError("TwoBranchModel::backward: gradient shapes differ from forward outputs");
  }
  Matrix total = head_.backward(pass.head, grad_z);
  accumulate(total, grad_x);
  encoder_.backward(pass.encoder, total);
}

std::vector<ParamTensor*> TwoBranchModel::parameters() {
  auto params = encoder_.parameters();
  for (ParamTensor* p : head_.parameters()) params.push_back(p);
  return params;
}

std::vector<const ParamTensor*> TwoBranchModel::parameters() const {
  auto params = encoder_.parameters();
  for (const ParamTensor* p : head_.parameters()) params.push_back(p);
  return params;
}

void TwoBranchModel::zero_grad() {
  for (ParamTensor* p : parameters()) p->zero_grad();
}

void TwoBranchModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  detail::BinaryWriter w(os);
  w.put_bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put(cfg_.input_dim);
  w.put(cfg_.hidden_dim);
  w.put(cfg_.embed_dim);
  w.put(cfg_.proxy_dim);
  w.put(cfg_.seed);
  w.put<std::uint8_t>(cfg_.detach_proxy_input ? 1 : 0);
  for (const ParamTensor* p : parameters()) {
    w.put_matrix(p->value);
    w.put_matrix(p->momentum);
  }
  if (!os) throw Error("failed writing checkpoint: " + path);
}

TwoBranchModel TwoBranchModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  detail::BinaryReader r(is, path);
  char magic[8];
  r.get_bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) r.fail("not a checkpoint file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  EncoderConfig cfg;
  cfg.input_dim = r.get<std::int64_t>("input_dim");
  cfg.hidden_dim = r.get<std::int64_t>("hidden_dim");
  cfg.embed_dim = r.get<std::int64_t>("embed_dim");
  cfg.proxy_dim = r.get<std::int64_t>("proxy_dim");
  cfg.seed = r.get<std::uint64_t>("seed");
  cfg.detach_proxy_input = r.get<std::uint8_t>("detach") != 0;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  TwoBranchModel model(cfg);
  for (ParamTensor* p : model.parameters()) {
    Matrix value = r.get_matrix("parameter");
    Matrix momentum = r.get_matrix("momentum");
    if (value.rows() != p->value.rows() || value.cols() != p->value.cols() ||
        momentum.rows() != value.rows() || momentum.cols() != value.cols()) {
      r.fail("parameter shape does not match header");
    }
    p->value = std::move(value);
    p->momentum = std::move(momentum);
  }
  if (!r.at_eof()) r.fail("trailing bytes after last parameter");
  return model;
}

bool operator==(const TwoBranchModel& a, const TwoBranchModel& b) {
  if (!(a.cfg_ == b.cfg_)) return false;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(pa[i]->value == pb[i]->value) || !(pa[i]->momentum == pb[i]->momentum)) return false;
  }
  return true;
}

}  // namespace gpm
