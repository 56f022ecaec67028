#include "avgflow/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "avgflow/bridge.hpp"
#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow {

using nlohmann::json;

Standardizer Standardizer::fit(const Matrix& data) {
  if (data.cols() == 0) throw InvalidArgument("Standardizer::fit: no samples");
  Standardizer s;
  s.mean = data.rowwise().mean();
  const Matrix centered = data.colwise() - s.mean;
  s.scale = (centered.rowwise().squaredNorm() / static_cast<double>(data.cols())).cwiseSqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (!(s.scale(i) > 1e-12 * std::max(1.0, std::abs(s.mean(i))))) s.scale(i) = 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(int dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

Matrix Standardizer::apply(const Matrix& x) const {
  return (x.colwise() - mean).array().colwise() / scale.array();
}
Vector Standardizer::apply(const Vector& x) const { return ((x - mean).array() / scale.array()).matrix(); }
Matrix Standardizer::restore(const Matrix& z) const {
  return (z.array().colwise() * scale.array()).matrix().colwise() + mean;
}
Vector Standardizer::restore(const Vector& z) const { return (z.array() * scale.array()).matrix() + mean; }

double TrainConfig::learning_rate_at(int epoch) const {
  if (schedule == LearningSchedule::kExponential) {
    if (epochs <= 1) return learning_rate;
    const double frac = static_cast<double>(epoch - 1) / (epochs - 1);
    return learning_rate * std::pow(late_learning_rate / learning_rate, frac);
  }
  const int switch_epoch = static_cast<int>(std::floor(switch_fraction * epochs));
  return epoch > switch_epoch ? late_learning_rate : learning_rate;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(late_learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction must lie in [0, 1)");
  }
  if (hidden < 1) throw ConfigError("train.hidden must be >= 1");
  if (time_stride < 1) throw ConfigError("train.time_stride must be >= 1");
}

TrainConfig feedforward_defaults() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 256;
  c.learning_rate = 1e-3;
  c.late_learning_rate = 1e-4;
  c.switch_fraction = 0.7;
  c.time_stride = 10;
  return c;
}

TrainConfig recurrent_defaults() {
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 16;
  c.learning_rate = 3e-3;
  c.late_learning_rate = 1e-4;
  c.switch_fraction = 0.5;
  return c;
}

TrainConfig gain_defaults() {
  TrainConfig c;
  c.epochs = 12000;
  c.batch_size = 1 << 20;
  c.learning_rate = 1e-2;
  c.late_learning_rate = 1e-6;
  c.schedule = LearningSchedule::kExponential;
  c.validation_fraction = 0.0;
  c.hidden = 32;
  c.time_stride = 5;
  return c;
}

namespace {

struct Split {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> val;
};

Split split_indices(Eigen::Index n, double fraction, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  CounterRng rng(seed, 0x5a17);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n)));
  if (n - n_val < 1) n_val = n - 1;
  Split s;
  s.val.assign(idx.end() - n_val, idx.end());
  s.train.assign(idx.begin(), idx.end() - n_val);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

// Holds out whole groups; without groups every sample is its own group.
Split split_groups(const std::vector<Eigen::Index>& groups, Eigen::Index n, double fraction, std::uint64_t seed) {
  if (groups.empty()) return split_indices(n, fraction, seed);
  std::vector<Eigen::Index> ids(groups);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const Split by_group = split_indices(static_cast<Eigen::Index>(ids.size()), fraction, seed);
  std::vector<char> held(ids.size(), 0);
  for (Eigen::Index g : by_group.val) held[static_cast<std::size_t>(g)] = 1;
  Split s;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto pos = std::lower_bound(ids.begin(), ids.end(), groups[static_cast<std::size_t>(c)]) - ids.begin();
    (held[static_cast<std::size_t>(pos)] ? s.val : s.train).push_back(c);
  }
  return s;
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& cols, std::size_t begin, std::size_t end) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) out.col(static_cast<Eigen::Index>(k - begin)) = m.col(cols[k]);
  return out;
}

double mlp_eval(const Mlp& net, const Matrix& x, const Matrix& y, const std::vector<Eigen::Index>& cols) {
  if (cols.empty()) return 0.0;
  constexpr std::size_t kChunk = 8192;
  double total = 0.0;
  for (std::size_t b = 0; b < cols.size(); b += kChunk) {
    const std::size_t e = std::min(cols.size(), b + kChunk);
    total += net.loss(gather(x, cols, b, e), gather(y, cols, b, e)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(cols.size());
}

void check_finite(double loss, const Vector& grad, int epoch, long batch) {
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw TrainingDivergence(fmt::format("non-finite loss in epoch {} (batch {})", epoch, batch), batch);
  }
}

// Mini-batch Adam on normalized data.
TrainReport fit_mlp(Mlp& net, const Matrix& x, const Matrix& y, const std::vector<Eigen::Index>& groups,
                    const TrainConfig& cfg) {
  const Split split = split_groups(groups, x.cols(), cfg.validation_fraction, cfg.seed);
  const bool keep_best = cfg.keep_best && !split.val.empty();
  const std::vector<Eigen::Index>& val = split.val.empty() ? split.train : split.val;
  TrainReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  const double initial = mlp_eval(net, x, y, split.train);
  if (!std::isfinite(initial)) throw TrainingDivergence("non-finite initial loss", 0);
  report.records.push_back({0, initial, mlp_eval(net, x, y, val), cfg.learning_rate_at(1)});
  Vector best = net.parameters();

  Adam adam(static_cast<std::size_t>(net.parameter_count()), cfg.learning_rate);
  std::vector<Eigen::Index> order = split.train;
  Vector grad;
  long batch_index = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    adam.set_learning_rate(lr);
    CounterRng rng(cfg.seed, 0x1000 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch, ++batch_index) {
      const std::size_t e = std::min(order.size(), b + batch);
      const double loss = net.loss(gather(x, order, b, e), gather(y, order, b, e), &grad);
      check_finite(loss, grad, epoch, batch_index);
      sum += loss * static_cast<double>(e - b);
      adam.step(net.parameters(), grad);
    }
    report.records.push_back({epoch, sum / static_cast<double>(order.size()), mlp_eval(net, x, y, val), lr});
    if (!keep_best || report.records.back().val_loss < report.records[report.best_epoch].val_loss) {
      report.best_epoch = epoch;
      if (keep_best) best = net.parameters();
    }
  }
  if (keep_best) net.parameters() = best;
  return report;
}

}  // namespace

RegressionData teacher_dataset(const TeacherSet& teacher, int time_stride) {
  if (time_stride < 1) throw InvalidArgument("teacher_dataset: time_stride must be >= 1");
  if (teacher.size() == 0) throw InvalidArgument("teacher_dataset: empty teacher set");
  const int n = teacher.grid.n_steps();
  std::vector<int> nodes;
  for (int j = 0; j < n; j += time_stride) nodes.push_back(j);
  nodes.push_back(n);
  const int d = static_cast<int>(teacher.sources[0].size());
  const int m = static_cast<int>(teacher.gains[0].rows());
  RegressionData data;
  const auto count = static_cast<Eigen::Index>(teacher.size() * nodes.size());
  data.inputs.resize(d + 1, count);
  data.targets.resize(m, count);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    for (int j : nodes) {
      data.inputs.col(col).head(d) = teacher.sources[i];
      data.inputs(d, col) = teacher.grid.node(j);
      data.targets.col(col) = teacher.control(i, j);
      data.groups.push_back(static_cast<Eigen::Index>(i));
      ++col;
    }
  }
  return data;
}

FeedforwardModel::FeedforwardModel(int dim_state, int dim_control, int hidden)
    : input_norm(Standardizer::identity(dim_state + 1)),
      output_norm(Standardizer::identity(dim_control)),
      dim_state_(dim_state),
      dim_control_(dim_control),
      net_({dim_state + 1, hidden, hidden, dim_control}) {}

Vector FeedforwardModel::predict(const Vector& x0, double t) const {
  Matrix in(dim_state_ + 1, 1);
  in.col(0).head(dim_state_) = x0;
  in(dim_state_, 0) = t;
  return predict(in).col(0);
}

Matrix FeedforwardModel::predict(const Matrix& inputs) const {
  return output_norm.restore(net_.forward(input_norm.apply(inputs)));
}

FeedforwardFit train_feedforward(const RegressionData& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw InvalidArgument("train_feedforward: empty dataset");
  if (data.targets.cols() != data.size()) throw InvalidArgument("train_feedforward: inputs/targets mismatch");
  if (!data.groups.empty() && static_cast<Eigen::Index>(data.groups.size()) != data.size()) {
    throw InvalidArgument("train_feedforward: one group id per sample expected");
  }
  FeedforwardFit fit;
  fit.model = FeedforwardModel(static_cast<int>(data.inputs.rows()) - 1, static_cast<int>(data.targets.rows()),
                               config.hidden);
  fit.model.net().initialize(config.seed);
  fit.model.input_norm = Standardizer::fit(data.inputs);
  fit.model.output_norm = Standardizer::fit(data.targets);
  const Matrix x = fit.model.input_norm.apply(data.inputs);
  const Matrix y = fit.model.output_norm.apply(data.targets);
  fit.report = fit_mlp(fit.model.net(), x, y, data.groups, config);
  return fit;
}

SequenceData bridge_sequences(const KernelTable& table, const SamplePairSet& pairs, double epsilon,
                              std::uint64_t seed) {
  if (pairs.size() == 0) throw InvalidArgument("bridge_sequences: no pairs");
  const int n = table.n_steps();
  const int d = table.dim_state();
  SequenceData data;
  data.features.reserve(pairs.size());
  data.targets.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EndpointPair z{pairs.sources[i], pairs.targets[i]};
    const BrownianPath noise = sample_brownian(table.grid(), table.dim_control(), seed, i);
    const std::vector<Vector> conv = noise_convolution(table, noise.increments, epsilon);
    Matrix features(2 * d + 1, n);
    Matrix targets(table.dim_control(), n);
    VolterraState state = VolterraState::zero(d);
    for (int j = 0; j < n; ++j) {
      features.col(j).head(d) = z.x0;
      features(d, j) = table.grid().node(j);
      features.col(j).tail(d) = conv[j];
      targets.col(j) = volterra_control(table, z, state, j, epsilon);
      state.advance(table, j, noise.increments[j]);
    }
    data.features.push_back(std::move(features));
    data.targets.push_back(std::move(targets));
  }
  return data;
}

RecurrentModel::RecurrentModel(int dim_state, int dim_control, int hidden)
    : input_norm(Standardizer::identity(2 * dim_state + 1)),
      output_norm(Standardizer::identity(dim_control)),
      dim_state_(dim_state),
      dim_control_(dim_control),
      net_(2 * dim_state + 1, hidden, dim_control) {}

Vector RecurrentModel::Stepper::step(const Vector& x0, double t, const Vector& noise_feature) {
  const int d = model_->dim_state();
  Vector in(2 * d + 1);
  in.head(d) = x0;
  in(d) = t;
  in.tail(d) = noise_feature;
  return model_->output_norm.restore(model_->net().step(state_, model_->input_norm.apply(in)));
}

Matrix RecurrentModel::predict(const Matrix& features) const {
  Stepper s = stepper();
  const int d = dim_state_;
  Matrix out(dim_control_, features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    out.col(j) = s.step(features.col(j).head(d), features(d, j), features.col(j).tail(d));
  }
  return out;
}

namespace {

Matrix concat_columns(const std::vector<Matrix>& blocks, const std::vector<std::size_t>& which) {
  Eigen::Index cols = 0;
  for (std::size_t i : which) cols += blocks[i].cols();
  Matrix out(blocks[which.front()].rows(), cols);
  Eigen::Index c = 0;
  for (std::size_t i : which) {
    out.middleCols(c, blocks[i].cols()) = blocks[i];
    c += blocks[i].cols();
  }
  return out;
}

// Time-major batch: out[t] has one column per selected path.
std::vector<Matrix> time_major(const std::vector<Matrix>& seqs, const std::vector<std::size_t>& paths,
                               std::size_t begin, std::size_t end) {
  const Eigen::Index steps = seqs[paths[begin]].cols();
  std::vector<Matrix> out(static_cast<std::size_t>(steps),
                          Matrix(seqs[paths[begin]].rows(), static_cast<Eigen::Index>(end - begin)));
  for (std::size_t b = begin; b < end; ++b) {
    const Matrix& s = seqs[paths[b]];
    for (Eigen::Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(b - begin)) = s.col(t);
  }
  return out;
}

double lstm_eval(const Lstm& net, const std::vector<Matrix>& x, const std::vector<Matrix>& y,
                 const std::vector<std::size_t>& paths) {
  if (paths.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t b = 0; b < paths.size(); b += kChunk) {
    const std::size_t e = std::min(paths.size(), b + kChunk);
    total += net.loss(time_major(x, paths, b, e), time_major(y, paths, b, e)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(paths.size());
}

}  // namespace

RecurrentFit train_recurrent(const SequenceData& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0 || data.targets.size() != data.size()) {
    throw InvalidArgument("train_recurrent: empty or inconsistent sequences");
  }
  const Eigen::Index steps = data.features[0].cols();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.features[i].cols() != steps || data.targets[i].cols() != steps ||
        data.features[i].rows() != data.features[0].rows() || data.targets[i].rows() != data.targets[0].rows()) {
      throw InvalidArgument("train_recurrent: sequences are not aligned on one grid");
    }
  }
  const int d = static_cast<int>(data.features[0].rows() - 1) / 2;
  RecurrentFit fit;
  fit.model = RecurrentModel(d, static_cast<int>(data.targets[0].rows()), config.hidden);
  fit.model.net().initialize(config.seed);

  const Split split = split_indices(static_cast<Eigen::Index>(data.size()), config.validation_fraction, config.seed);
  std::vector<std::size_t> train(split.train.begin(), split.train.end());
  std::vector<std::size_t> val(split.val.begin(), split.val.end());
  const bool keep_best = config.keep_best && !val.empty();
  if (val.empty()) val = train;
  fit.model.input_norm = Standardizer::fit(concat_columns(data.features, train));
  fit.model.output_norm = Standardizer::fit(concat_columns(data.targets, train));
  std::vector<Matrix> x, y;
  for (std::size_t i = 0; i < data.size(); ++i) {
    x.push_back(fit.model.input_norm.apply(data.features[i]));
    y.push_back(fit.model.output_norm.apply(data.targets[i]));
  }

  Lstm& net = fit.model.net();
  TrainReport& report = fit.report;
  report.seed = config.seed;
  report.epochs = config.epochs;
  const double initial = lstm_eval(net, x, y, train);
  if (!std::isfinite(initial)) throw TrainingDivergence("non-finite initial loss", 0);
  report.records.push_back({0, initial, lstm_eval(net, x, y, val), config.learning_rate_at(1)});
  Vector best = net.parameters();

  Adam adam(static_cast<std::size_t>(net.parameter_count()), config.learning_rate);
  std::vector<std::size_t> order = train;
  Vector grad;
  long batch_index = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    adam.set_learning_rate(lr);
    CounterRng rng(config.seed, 0x2000 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch, ++batch_index) {
      const std::size_t e = std::min(order.size(), b + batch);
      const double loss = net.loss(time_major(x, order, b, e), time_major(y, order, b, e), &grad);
      check_finite(loss, grad, epoch, batch_index);
      sum += loss * static_cast<double>(e - b);
      adam.step(net.parameters(), grad);
    }
    report.records.push_back({epoch, sum / static_cast<double>(order.size()), lstm_eval(net, x, y, val), lr});
    if (!keep_best || report.records.back().val_loss < report.records[report.best_epoch].val_loss) {
      report.best_epoch = epoch;
      if (keep_best) best = net.parameters();
    }
  }
  if (keep_best) net.parameters() = best;
  return fit;
}

GainModel::GainModel(int dim_state, int dim_control, int hidden)
    : input_norm(Standardizer::identity(1)),
      output_norm(Standardizer::identity(dim_state * dim_control)),
      dim_state_(dim_state),
      dim_control_(dim_control),
      net_({1, hidden, hidden, dim_state * dim_control}) {}

Matrix GainModel::predict(double t) const {
  Matrix in(1, 1);
  in(0, 0) = t;
  const Vector flat = output_norm.restore(net_.forward(input_norm.apply(in))).col(0);
  return Eigen::Map<const Matrix>(flat.data(), dim_control_, dim_state_);
}

GainFit train_gain(const KernelTable& table, const TrainConfig& config) {
  config.validate();
  const int n = table.n_steps();
  const int d = table.dim_state();
  const int m = table.dim_control();
  std::vector<int> nodes;
  for (int j = 0; j < n; j += config.time_stride) nodes.push_back(j);
  nodes.push_back(n);
  Matrix inputs(1, static_cast<Eigen::Index>(nodes.size()));
  Matrix targets(static_cast<Eigen::Index>(m) * d, static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t c = 0; c < nodes.size(); ++c) {
    inputs(0, static_cast<Eigen::Index>(c)) = table.grid().node(nodes[c]);
    targets.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Vector>(table.gain(nodes[c]).data(), m * d);
  }
  GainFit fit;
  fit.model = GainModel(d, m, config.hidden);
  fit.model.net().initialize(config.seed);
  fit.model.input_norm = Standardizer::fit(inputs);
  fit.model.output_norm = Standardizer::fit(targets);
  fit.report = fit_mlp(fit.model.net(), fit.model.input_norm.apply(inputs), fit.model.output_norm.apply(targets),
                       {}, config);
  return fit;
}

double gain_sup_error(const GainModel& model, const KernelTable& table) {
  double worst = 0.0;
  for (int j = 0; j <= table.n_steps(); ++j) {
    worst = std::max(worst, (model.predict(table.grid().node(j)) - table.gain(j)).cwiseAbs().maxCoeff());
  }
  return worst;
}

namespace {

constexpr int kCheckpointVersion = 1;

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw ConfigError(fmt::format("checkpoint: missing array '{}'", key));
  const auto values = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json norm_json(const Standardizer& s) { return {{"mean", to_json(s.mean)}, {"scale", to_json(s.scale)}}; }

Standardizer norm_from(const json& j, const char* key, Eigen::Index dim) {
  if (!j.contains(key)) throw ConfigError(fmt::format("checkpoint: missing '{}'", key));
  Standardizer s{vector_from(j.at(key), "mean"), vector_from(j.at(key), "scale")};
  if (s.mean.size() != dim || s.scale.size() != dim) throw ConfigError(fmt::format("checkpoint: bad '{}' size", key));
  return s;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write checkpoint {}", path.string()));
  out << j.dump(1) << '\n';
}

json read_json(const std::filesystem::path& path, const char* kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read checkpoint {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("checkpoint {}: {}", path.string(), e.what()));
  }
  if (j.value("format", "") != "avgflow-model" || j.value("version", 0) != kCheckpointVersion) {
    throw ConfigError(fmt::format("checkpoint {}: unsupported format or version", path.string()));
  }
  if (j.value("kind", "") != kind) throw ConfigError(fmt::format("checkpoint {}: expected a {} model", path.string(), kind));
  return j;
}

json header(const char* kind, int d, int m) {
  return {{"format", "avgflow-model"}, {"version", kCheckpointVersion}, {"kind", kind},
          {"dim_state", d}, {"dim_control", m}};
}

void load_params(Vector& dst, const json& j) {
  const Vector p = vector_from(j, "parameters");
  if (p.size() != dst.size()) throw ConfigError("checkpoint: parameter count does not match the layer sizes");
  dst = p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FeedforwardModel& model) {
  json j = header("feedforward", model.dim_state(), model.dim_control());
  j["sizes"] = model.net().sizes();
  j["activation"] = "tanh";
  j["input_norm"] = norm_json(model.input_norm);
  j["output_norm"] = norm_json(model.output_norm);
  j["parameters"] = to_json(model.net().parameters());
  write_json(path, j);
}

void save_checkpoint(const std::filesystem::path& path, const RecurrentModel& model) {
  json j = header("recurrent", model.dim_state(), model.dim_control());
  j["cell"] = "lstm";
  j["hidden"] = model.net().hidden_size();
  j["input_norm"] = norm_json(model.input_norm);
  j["output_norm"] = norm_json(model.output_norm);
  j["parameters"] = to_json(model.net().parameters());
  write_json(path, j);
}

void save_checkpoint(const std::filesystem::path& path, const GainModel& model) {
  json j = header("gain", model.dim_state(), model.dim_control());
  j["sizes"] = model.net().sizes();
  j["activation"] = "tanh";
  j["input_norm"] = norm_json(model.input_norm);
  j["output_norm"] = norm_json(model.output_norm);
  j["parameters"] = to_json(model.net().parameters());
  write_json(path, j);
}

FeedforwardModel load_feedforward(const std::filesystem::path& path) {
  const json j = read_json(path, "feedforward");
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  if (sizes.size() != 4) throw ConfigError("checkpoint: feedforward model needs two hidden layers");
  FeedforwardModel model(j.at("dim_state").get<int>(), j.at("dim_control").get<int>(), sizes[1]);
  if (model.net().sizes() != sizes) throw ConfigError("checkpoint: layer sizes do not match the dimensions");
  load_params(model.net().parameters(), j);
  model.input_norm = norm_from(j, "input_norm", model.dim_state() + 1);
  model.output_norm = norm_from(j, "output_norm", model.dim_control());
  return model;
}

RecurrentModel load_recurrent(const std::filesystem::path& path) {
  const json j = read_json(path, "recurrent");
  RecurrentModel model(j.at("dim_state").get<int>(), j.at("dim_control").get<int>(), j.at("hidden").get<int>());
  load_params(model.net().parameters(), j);
  model.input_norm = norm_from(j, "input_norm", 2 * model.dim_state() + 1);
  model.output_norm = norm_from(j, "output_norm", model.dim_control());
  return model;
}

GainModel load_gain(const std::filesystem::path& path) {
  const json j = read_json(path, "gain");
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  if (sizes.size() != 4) throw ConfigError("checkpoint: gain model needs two hidden layers");
  GainModel model(j.at("dim_state").get<int>(), j.at("dim_control").get<int>(), sizes[1]);
  if (model.net().sizes() != sizes) throw ConfigError("checkpoint: layer sizes do not match the dimensions");
  load_params(model.net().parameters(), j);
  model.input_norm = norm_from(j, "input_norm", 1);
  model.output_norm = norm_from(j, "output_norm", static_cast<Eigen::Index>(model.dim_state()) * model.dim_control());
  return model;
}

}  // namespace avgflow
