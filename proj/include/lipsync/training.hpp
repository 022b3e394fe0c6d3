#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lipsync/features.hpp"
#include "lipsync/mesh.hpp"
#include "lipsync/model.hpp"

namespace lipsync {

enum class Reduction { kSum, kMeanPerFrame };

struct LossConfig {
  double position_weight = 1.0;
  double velocity_weight = 0.5;
  Reduction reduction = Reduction::kMeanPerFrame;
};

// Sum over frames of the squared Frobenius distance; divided by the frame
// count under kMeanPerFrame.
double loss_position(const Mat<double>& pred, const Mat<double>& truth,
                     Reduction reduction = Reduction::kMeanPerFrame);
// Same on backward frame differences, t = 2..T; divided by T - 1 under
// kMeanPerFrame. Zero for single-frame sequences.
double loss_velocity(const Mat<double>& pred, const Mat<double>& truth,
                     Reduction reduction = Reduction::kMeanPerFrame);

struct LossValue {
  double total = 0.0;
  double position = 0.0;
  double velocity = 0.0;
  Mat<double> gradient;  // dTotal/dPred; empty unless requested
};

LossValue loss_total(const Mat<double>& pred, const Mat<double>& truth, const LossConfig& config,
                     bool with_gradient = true);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  NetworkParams first_moment;
  NetworkParams second_moment;
  long step = 0;

  static AdamState zeros(const NetworkParams& params);
};

void adam_step(NetworkParams& params, const NetworkGradients& grads, AdamState& state,
               const AdamConfig& config);

double global_norm(const NetworkGradients& grads);
// Rescales to max_norm when above it. Returns the norm before clipping.
double clip_global_norm(NetworkGradients& grads, double max_norm);

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  std::uint64_t seed = 7;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  int batch = 1;             // sequences per optimizer step
  double clip_norm = 5.0;    // 0 disables

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

// Reads "key = value" lines ('#' comments). Unknown keys are a usage error.
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source = "<config>");
void apply_key_values(const std::map<std::string, std::string>& values, TrainConfig& train,
                      LossConfig& loss);

struct Sample {
  std::string id;
  FeatureSequence features;
  DisplacementSequence displacements;
};

struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

struct SplitLoss {
  double position = 0.0;
  double velocity = 0.0;
  double total = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  SplitLoss train;
  bool has_validation = false;
  SplitLoss validation;
  int clipped_steps = 0;
};

using ProgressSink = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  NetworkParams params;       // after the last epoch
  NetworkParams best_params;  // lowest validation total (last epoch without validation)
  int best_epoch = 0;
  std::vector<EpochMetrics> history;
};

// Mean per-sequence losses of `params` over `samples`.
SplitLoss evaluate_loss(const NetworkParams& params, const std::vector<Sample>& samples,
                        const LossConfig& config);

// Full-sequence BPTT, one optimizer step per `batch` sequences, epoch order
// shuffled from the seed.
TrainResult train(const Corpus& corpus, NetworkParams params, const LossConfig& loss,
                  const TrainConfig& config, const ProgressSink& sink = {});

// "epoch,split,lp,lv,total" rows for train and (when present) validation.
std::string metrics_csv(const std::vector<EpochMetrics>& history);
void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::filesystem::path& path);

std::string format_number(double value);

}  // namespace lipsync
