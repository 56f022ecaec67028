#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avgflow/coupling.hpp"
#include "avgflow/distributions.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/nn.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

/// Per-feature affine normalization z = (x - mean) / scale.
struct Standardizer {
  Vector mean;
  Vector scale;

  /// Columns are samples. Near-constant features keep scale 1.
  static Standardizer fit(const Matrix& data);
  static Standardizer identity(int dim);

  Matrix apply(const Matrix& x) const;
  Vector apply(const Vector& x) const;
  Matrix restore(const Matrix& z) const;
  Vector restore(const Vector& z) const;
};

enum class LearningSchedule {
  kPiecewise,    // learning_rate, then late_learning_rate from switch_fraction·epochs on
  kExponential,  // geometric decay from learning_rate to late_learning_rate
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double late_learning_rate = 1e-3;
  double switch_fraction = 0.5;
  LearningSchedule schedule = LearningSchedule::kPiecewise;
  double validation_fraction = 0.1;
  int hidden = 64;
  /// Keep every k-th grid node when building regression samples in time.
  int time_stride = 1;
  /// Return the parameters of the epoch with the lowest validation loss
  /// (only when a validation split exists).
  bool keep_best = true;
  std::uint64_t seed = 0;

  /// Rate used during epoch `epoch` (1-based).
  double learning_rate_at(int epoch) const;
  void validate() const;
};

TrainConfig feedforward_defaults();
TrainConfig recurrent_defaults();
TrainConfig gain_defaults();

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

/// Losses are mean squared errors in normalized target units. Row 0 holds
/// the losses of the initialized model before any update.
struct TrainReport {
  std::vector<EpochRecord> records;
  std::uint64_t seed = 0;
  int epochs = 0;
  /// Epoch whose parameters the fitted model holds.
  int best_epoch = 0;

  double initial_loss() const { return records.front().train_loss; }
  /// Training loss of the epoch the fitted model holds.
  double final_loss() const { return records[static_cast<std::size_t>(best_epoch)].train_loss; }
};

/// Inputs (x0, t) and targets u, one sample per column.
struct RegressionData {
  Matrix inputs;
  Matrix targets;
  /// Optional group id per sample; the validation split holds out whole
  /// groups so that samples of one pair never straddle it.
  std::vector<Eigen::Index> groups;

  Eigen::Index size() const { return inputs.cols(); }
};

/// Teacher samples ((x0^i, t_j), K(t_j) Δ^i) for every pair and every
/// `time_stride`-th grid node (t_f always included).
RegressionData teacher_dataset(const TeacherSet& teacher, int time_stride = 1);

class FeedforwardModel {
 public:
  FeedforwardModel() = default;
  FeedforwardModel(int dim_state, int dim_control, int hidden);

  int dim_state() const { return dim_state_; }
  int dim_control() const { return dim_control_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  Vector predict(const Vector& x0, double t) const;
  /// Raw inputs (d+1) x B to raw outputs m x B.
  Matrix predict(const Matrix& inputs) const;

  Standardizer input_norm;
  Standardizer output_norm;

 private:
  int dim_state_ = 0;
  int dim_control_ = 0;
  Mlp net_;
};

struct FeedforwardFit {
  FeedforwardModel model;
  TrainReport report;
};

/// Mean-squared regression with Adam. Throws TrainingDivergence on a
/// non-finite batch loss.
FeedforwardFit train_feedforward(const RegressionData& data, const TrainConfig& config);

/// Per-path sequences: features (x0, t_j, √ε Σ_{k<j} Φ(t_j,t_k) dW_k) as a
/// (2d+1) x T matrix and targets u_j as m x T.
struct SequenceData {
  std::vector<Matrix> features;
  std::vector<Matrix> targets;

  std::size_t size() const { return features.size(); }
};

/// Volterra bridge teacher sequences for every pair, noise stream = pair index.
SequenceData bridge_sequences(const KernelTable& table, const SamplePairSet& pairs, double epsilon,
                              std::uint64_t seed);

class RecurrentModel {
 public:
  RecurrentModel() = default;
  RecurrentModel(int dim_state, int dim_control, int hidden);

  int dim_state() const { return dim_state_; }
  int dim_control() const { return dim_control_; }
  Lstm& net() { return net_; }
  const Lstm& net() const { return net_; }

  /// Online evaluation of one path; the hidden state starts at zero.
  class Stepper {
   public:
    explicit Stepper(const RecurrentModel& model) : model_(&model), state_(model.net().zero_state()) {}
    Vector step(const Vector& x0, double t, const Vector& noise_feature);

   private:
    const RecurrentModel* model_;
    Lstm::State state_;
  };
  Stepper stepper() const { return Stepper(*this); }

  /// Raw feature sequence (2d+1) x T to raw controls m x T.
  Matrix predict(const Matrix& features) const;

  Standardizer input_norm;
  Standardizer output_norm;

 private:
  int dim_state_ = 0;
  int dim_control_ = 0;
  Lstm net_;
};

struct RecurrentFit {
  RecurrentModel model;
  TrainReport report;
};

/// Full backpropagation through time over mini-batches of paths.
RecurrentFit train_recurrent(const SequenceData& data, const TrainConfig& config);

/// K̂(t) as a feedforward map from t to the m x d gain, column-major.
class GainModel {
 public:
  GainModel() = default;
  GainModel(int dim_state, int dim_control, int hidden);

  int dim_state() const { return dim_state_; }
  int dim_control() const { return dim_control_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  Matrix predict(double t) const;

  Standardizer input_norm;
  Standardizer output_norm;

 private:
  int dim_state_ = 0;
  int dim_control_ = 0;
  Mlp net_;
};

struct GainFit {
  GainModel model;
  TrainReport report;
};

GainFit train_gain(const KernelTable& table, const TrainConfig& config);

/// max_j max_entries |K̂(t_j) - K(t_j)| over the whole grid.
double gain_sup_error(const GainModel& model, const KernelTable& table);

void save_checkpoint(const std::filesystem::path& path, const FeedforwardModel& model);
void save_checkpoint(const std::filesystem::path& path, const RecurrentModel& model);
void save_checkpoint(const std::filesystem::path& path, const GainModel& model);
FeedforwardModel load_feedforward(const std::filesystem::path& path);
RecurrentModel load_recurrent(const std::filesystem::path& path);
GainModel load_gain(const std::filesystem::path& path);

}  // namespace avgflow
