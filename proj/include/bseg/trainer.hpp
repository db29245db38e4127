#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bseg/data.hpp"
#include "bseg/losses.hpp"
#include "bseg/metrics.hpp"
#include "bseg/nn/vnet.hpp"

namespace bseg::train {

enum class TrainMode { supervised, fp_semisup };
enum class Method { boundaryseg, lower_bound, peri_loss };

TrainMode train_mode_from_string(const std::string& s);
Method method_from_string(const std::string& s);
std::string to_string(TrainMode m);
std::string to_string(Method m);

struct OptimizerConfig {
  std::string kind = "sgd";
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

struct TrainConfig {
  int64_t iterations = 6000;
  int64_t batch_size = 4;
  int64_t labeled_batch_size = 2;
  int r = 5;
  losses::LossWeights weights;
  TrainMode mode = TrainMode::supervised;
  Method method = Method::boundaryseg;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  int64_t eval_every = 0;
  int64_t log_every = 50;
  std::array<int64_t, 3> patch_size{112, 112, 80};
  std::array<int64_t, 3> infer_strides{18, 18, 4};
  double fg_bias = 0.5;
  data::AugmentSpec augment;
  nn::VNetConfig model;
  double threshold = 0.5;
  double hd_percentile = 95.0;
  bool freeze_boundary_head = false;

  void validate() const;

  /// Copy with the method's structural consequences applied: lower_bound
  /// zeroes the boundary and consistency weights, and lower_bound/peri_loss
  /// drop the boundary head.
  TrainConfig normalized() const;

  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// SGD with classical momentum and L2 weight decay:
/// v = momentum * v + (g + weight_decay * w); w -= lr * v.
class Sgd {
 public:
  Sgd(const OptimizerConfig& cfg, std::vector<nn::ParamRef> params);

  void step();
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);

 private:
  OptimizerConfig cfg_;
  double lr_;
  std::vector<nn::ParamRef> params_;
  std::vector<std::vector<float>> velocity_;
};

/// p - soft_erode(p, r), clamped to [0, 1]: a differentiable analogue of the
/// binary boundary band (exactly the band on {0,1} inputs).
ProbabilityMap soft_boundary(const ProbabilityMap& p, int r);

/// Loss of the boundary-penalty baseline on one volume:
/// dice(seg, label) + lambda_boundary * dice(soft_boundary(seg, r), band).
losses::LossBreakdown peri_loss_value(const ProbabilityMap& seg_prob, const BinaryMask& label,
                                      int r, const losses::LossWeights& w);

/// One optimizer update on a fully labeled batch of patch samples.
/// Dispatches on config.method. Samples are mutable so boundary bands can be
/// cached.
losses::LossBreakdown train_step_supervised(nn::VNet& model, Sgd& opt,
                                            std::vector<data::Sample>& batch,
                                            const TrainConfig& cfg);

/// One update where unlabeled items join the forward pass (touching the
/// batch-norm statistics) but every loss term is computed over the labeled
/// items only.
losses::LossBreakdown train_step_fp(nn::VNet& model, Sgd& opt,
                                    std::vector<data::Sample>& labeled_batch,
                                    std::vector<data::Sample>& unlabeled_batch,
                                    const TrainConfig& cfg);

/// One update of the boundary-penalty baseline (single-head model).
losses::LossBreakdown train_step_peri(nn::VNet& model, Sgd& opt,
                                      std::vector<data::Sample>& batch, const TrainConfig& cfg);

struct EvalConfig {
  std::array<int64_t, 3> patch_size{112, 112, 80};
  std::array<int64_t, 3> strides{18, 18, 4};
  double threshold = 0.5;
  double hd_percentile = 95.0;
};

struct EvalResult {
  std::vector<std::string> ids;
  std::vector<metrics::SegMetrics> per_sample;
  metrics::SegMetrics mean;
};

/// Sliding-window inference and metrics over labeled test samples. Surface
/// metrics of empty predictions fall back to the volume diagonal; a pair of
/// empty masks scores a perfect match.
EvalResult evaluate_model(nn::VNet& model, const std::vector<data::Sample>& test,
                          const EvalConfig& cfg);
EvalResult evaluate_checkpoint(const std::string& path, const std::vector<data::Sample>& test,
                               const EvalConfig& cfg);

struct TrainInputs {
  std::vector<data::Sample> labeled;
  std::vector<data::Sample> unlabeled;
  std::vector<data::Sample> val;
  std::vector<data::Sample> test;
};

/// Load every sample referenced by the manifest, splitting train into
/// labeled/unlabeled per its lists.
TrainInputs load_inputs(const data::DatasetManifest& manifest);

struct TrainArtifacts {
  std::string final_checkpoint;
  std::string best_checkpoint;
  losses::LossBreakdown final_loss;
  std::vector<nlohmann::ordered_json> log;
  double best_val_dice = -1.0;
};

/// Full training loop: patch sampling, augmentation, per-method update,
/// periodic validation, final/best checkpoints, JSONL loss log under
/// out_dir. Deterministic in (config, seed, inputs).
TrainArtifacts train(const TrainConfig& cfg, TrainInputs& inputs, const std::string& out_dir);

struct SeedRun {
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
  losses::LossBreakdown final_loss;
  EvalResult eval;
};

struct RunResult {
  TrainConfig config;
  std::vector<SeedRun> runs;
  metrics::SegMetrics mean;
  metrics::SegMetrics stddev;

  nlohmann::ordered_json to_json() const;
};

/// Train and evaluate once per seed; aggregate mean and population standard
/// deviation over the per-seed test means. Seeds that fail are reported in
/// their run records; throws only if every seed fails.
RunResult run_seeds(const TrainConfig& cfg, TrainInputs& inputs,
                    const std::vector<uint64_t>& seeds, const std::string& out_dir);

}  // namespace bseg::train
