#include "avgflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow {

namespace {

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Vector::Zero(static_cast<Eigen::Index>(size))),
      v_(Vector::Zero(static_cast<Eigen::Index>(size))) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw InvalidArgument("Adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw InvalidArgument("Mlp needs at least input and output sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw InvalidArgument("Mlp layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vector::Zero(total);
}

void Mlp::initialize(std::uint64_t seed) {
  CounterRng rng(seed, 0);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // The linear head starts at zero: the untrained net predicts the
    // (standardized) target mean.
    const bool head = l + 2 == sizes_.size();
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(in) * out; ++p) {
      params_(offsets_[l] + p) = head ? 0.0 : dist(rng);
    }
    params_.segment(offsets_[l] + static_cast<Eigen::Index>(in) * out, out).setZero();
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.rows() != input_size()) throw InvalidArgument("Mlp::forward: input size");
  Matrix a = x;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Matrix> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Vector> b(params_.data() + offsets_[l] + static_cast<Eigen::Index>(in) * out, out);
    Matrix z = w * a;
    z.colwise() += b;
    if (l + 1 < layers) z = z.array().tanh().matrix();
    a = std::move(z);
  }
  return a;
}

double Mlp::loss(const Matrix& x, const Matrix& y, Vector* grad) const {
  if (x.rows() != input_size() || y.rows() != output_size() || x.cols() != y.cols() || x.cols() == 0) {
    throw InvalidArgument("Mlp::loss: batch shape");
  }
  const std::size_t layers = sizes_.size() - 1;
  const double batch = static_cast<double>(x.cols());
  std::vector<Matrix> acts;
  acts.reserve(layers + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Matrix> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Vector> b(params_.data() + offsets_[l] + static_cast<Eigen::Index>(in) * out, out);
    Matrix z = w * acts.back();
    z.colwise() += b;
    if (l + 1 < layers) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  const Matrix diff = acts.back() - y;
  const double value = diff.squaredNorm() / batch;
  if (grad == nullptr) return value;

  grad->setZero(params_.size());
  Matrix delta = (2.0 / batch) * diff;
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<Matrix> gw(grad->data() + offsets_[l], out, in);
    Eigen::Map<Vector> gb(grad->data() + offsets_[l] + static_cast<Eigen::Index>(in) * out, out);
    gw.noalias() = delta * acts[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      Eigen::Map<const Matrix> w(params_.data() + offsets_[l], out, in);
      Matrix back = w.transpose() * delta;
      delta = (back.array() * (1.0 - acts[l].array().square())).matrix();
    }
  }
  return value;
}

// Parameter layout: W (4h x in), U (4h x h), b (4h), V (out x h), c (out).
Lstm::Lstm(int input_size, int hidden_size, int output_size)
    : input_(input_size), hidden_(hidden_size), output_(output_size) {
  if (input_ < 1 || hidden_ < 1 || output_ < 1) throw InvalidArgument("Lstm sizes must be positive");
  const Eigen::Index h4 = 4 * static_cast<Eigen::Index>(hidden_);
  params_ = Vector::Zero(h4 * input_ + h4 * hidden_ + h4 + static_cast<Eigen::Index>(output_) * hidden_ + output_);
}

namespace {

struct LstmViews {
  Eigen::Map<const Matrix> w, u;
  Eigen::Map<const Vector> b;
  Eigen::Map<const Matrix> v;
  Eigen::Map<const Vector> c;
};

LstmViews views(const Vector& p, int in, int h, int out) {
  const Eigen::Index h4 = 4 * static_cast<Eigen::Index>(h);
  const double* base = p.data();
  const double* pu = base + h4 * in;
  const double* pb = pu + h4 * h;
  const double* pv = pb + h4;
  const double* pc = pv + static_cast<Eigen::Index>(out) * h;
  return {Eigen::Map<const Matrix>(base, h4, in), Eigen::Map<const Matrix>(pu, h4, h),
          Eigen::Map<const Vector>(pb, h4), Eigen::Map<const Matrix>(pv, out, h),
          Eigen::Map<const Vector>(pc, out)};
}

}  // namespace

void Lstm::initialize(std::uint64_t seed) {
  CounterRng rng(seed, 1);
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < params_.size(); ++i) params_(i) = dist(rng);
  const Eigen::Index h4 = 4 * static_cast<Eigen::Index>(hidden_);
  const Eigen::Index b0 = h4 * input_ + h4 * hidden_;
  params_.segment(b0, h4).setZero();
  params_.segment(b0 + hidden_, hidden_).setConstant(1.0);
  params_.tail(output_).setZero();
}

std::vector<Matrix> Lstm::forward(const std::vector<Matrix>& inputs) const {
  std::vector<Matrix> outputs;
  if (inputs.empty()) return outputs;
  const auto p = views(params_, input_, hidden_, output_);
  const Eigen::Index batch = inputs[0].cols();
  Matrix h = Matrix::Zero(hidden_, batch);
  Matrix c = Matrix::Zero(hidden_, batch);
  const int hs = hidden_;
  for (const Matrix& x : inputs) {
    if (x.rows() != input_ || x.cols() != batch) throw InvalidArgument("Lstm::forward: input shape");
    Matrix g = p.w * x + p.u * h;
    g.colwise() += p.b;
    const Matrix ig = sigmoid(g.topRows(hs));
    const Matrix fg = sigmoid(g.middleRows(hs, hs));
    const Matrix gg = g.middleRows(2 * hs, hs).array().tanh().matrix();
    const Matrix og = sigmoid(g.bottomRows(hs));
    c = (fg.array() * c.array() + ig.array() * gg.array()).matrix();
    h = (og.array() * c.array().tanh()).matrix();
    Matrix y = p.v * h;
    y.colwise() += p.c;
    outputs.push_back(std::move(y));
  }
  return outputs;
}

double Lstm::loss(const std::vector<Matrix>& inputs, const std::vector<Matrix>& targets, Vector* grad) const {
  if (inputs.empty() || inputs.size() != targets.size()) throw InvalidArgument("Lstm::loss: sequence shape");
  const auto p = views(params_, input_, hidden_, output_);
  const std::size_t steps = inputs.size();
  const Eigen::Index batch = inputs[0].cols();
  const int hs = hidden_;
  const double norm = static_cast<double>(steps) * static_cast<double>(batch);

  std::vector<Matrix> hv(steps + 1), cv(steps + 1), iv(steps), fv(steps), gv(steps), ov(steps), tc(steps), dy(steps);
  hv[0] = Matrix::Zero(hs, batch);
  cv[0] = Matrix::Zero(hs, batch);
  double value = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix& x = inputs[t];
    if (x.rows() != input_ || x.cols() != batch || targets[t].rows() != output_ || targets[t].cols() != batch) {
      throw InvalidArgument("Lstm::loss: step shape");
    }
    Matrix g = p.w * x + p.u * hv[t];
    g.colwise() += p.b;
    iv[t] = sigmoid(g.topRows(hs));
    fv[t] = sigmoid(g.middleRows(hs, hs));
    gv[t] = g.middleRows(2 * hs, hs).array().tanh().matrix();
    ov[t] = sigmoid(g.bottomRows(hs));
    cv[t + 1] = (fv[t].array() * cv[t].array() + iv[t].array() * gv[t].array()).matrix();
    tc[t] = cv[t + 1].array().tanh().matrix();
    hv[t + 1] = (ov[t].array() * tc[t].array()).matrix();
    Matrix y = p.v * hv[t + 1];
    y.colwise() += p.c;
    dy[t] = y - targets[t];
    value += dy[t].squaredNorm();
  }
  value /= norm;
  if (grad == nullptr) return value;

  grad->setZero(params_.size());
  const Eigen::Index h4 = 4 * static_cast<Eigen::Index>(hs);
  double* base = grad->data();
  Eigen::Map<Matrix> gw(base, h4, input_);
  Eigen::Map<Matrix> gu(base + h4 * input_, h4, hs);
  Eigen::Map<Vector> gb(base + h4 * input_ + h4 * hs, h4);
  Eigen::Map<Matrix> gv_out(base + h4 * input_ + h4 * hs + h4, output_, hs);
  Eigen::Map<Vector> gc(base + h4 * input_ + h4 * hs + h4 + static_cast<Eigen::Index>(output_) * hs, output_);

  Matrix dh_next = Matrix::Zero(hs, batch);
  Matrix dc_next = Matrix::Zero(hs, batch);
  Matrix da(h4, batch);
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix d_out = (2.0 / norm) * dy[t];
    gv_out.noalias() += d_out * hv[t + 1].transpose();
    gc += d_out.rowwise().sum();
    const Matrix dh = p.v.transpose() * d_out + dh_next;
    const auto o = ov[t].array();
    const auto tanh_c = tc[t].array();
    const Matrix dc = (dh.array() * o * (1.0 - tanh_c.square()) + dc_next.array()).matrix();
    const auto i = iv[t].array();
    const auto f = fv[t].array();
    const auto gg = gv[t].array();
    da.topRows(hs) = (dc.array() * gg * i * (1.0 - i)).matrix();
    da.middleRows(hs, hs) = (dc.array() * cv[t].array() * f * (1.0 - f)).matrix();
    da.middleRows(2 * hs, hs) = (dc.array() * i * (1.0 - gg.square())).matrix();
    da.bottomRows(hs) = (dh.array() * tanh_c * o * (1.0 - o)).matrix();
    gw.noalias() += da * inputs[t].transpose();
    gu.noalias() += da * hv[t].transpose();
    gb += da.rowwise().sum();
    dh_next.noalias() = p.u.transpose() * da;
    dc_next = (dc.array() * f).matrix();
  }
  return value;
}

Vector Lstm::step(State& state, const Vector& input) const {
  if (input.size() != input_) throw InvalidArgument("Lstm::step: input size");
  const auto p = views(params_, input_, hidden_, output_);
  const int hs = hidden_;
  const Vector g = p.w * input + p.u * state.h + p.b;
  const Vector ig = sigmoid(g.head(hs));
  const Vector fg = sigmoid(g.segment(hs, hs));
  const Vector gg = g.segment(2 * hs, hs).array().tanh().matrix();
  const Vector og = sigmoid(g.tail(hs));
  state.c = (fg.array() * state.c.array() + ig.array() * gg.array()).matrix();
  state.h = (og.array() * state.c.array().tanh()).matrix();
  return p.v * state.h + p.c;
}

double gradient_check(const std::function<double(const Vector&)>& loss, const Vector& params,
                      const Vector& analytic, const std::vector<Eigen::Index>& probes, double step,
                      double floor) {
  double worst = 0.0;
  Vector x = params;
  for (Eigen::Index k : probes) {
    const double saved = x(k);
    x(k) = saved + step;
    const double up = loss(x);
    x(k) = saved - step;
    const double down = loss(x);
    x(k) = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic(k)), floor});
    worst = std::max(worst, std::abs(numeric - analytic(k)) / denom);
  }
  return worst;
}

}  // namespace avgflow
