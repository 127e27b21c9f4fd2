// SPDX-License-Identifier: Apache-2.0
//
// Small CPU classifiers: a backbone of 3x3 conv + ReLU + 2x2 average-pool
// blocks followed by a fully connected classification head.
//
//   "linear"     no backbone; the head sees the flattened input
//   "small-cnn"  conv(3->8) pool conv(8->16) pool
//   "wide-cnn"   conv(3->16) pool conv(16->32) pool
//
// Inner loops run on the dispatched kernels in sgia/kernels.hpp.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgia/transforms.hpp"

namespace sgia {

enum class TrainableScope { kHeadOnly, kFull };

std::string to_string(TrainableScope scope);

// Anything evaluate() can score.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int class_count() const = 0;
  virtual int predict(const Tensor& input) const = 0;
};

struct ParamBlock {
  std::string name;
  bool is_head = false;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<float> velocity;  // momentum buffer, allocated on demand
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
};

struct ForwardResult {
  std::vector<float> logits;
};

class Network final : public Classifier {
 public:
  Network() = default;
  // Weights drawn from Rng(init_seed): conv weights U(-sqrt(6/fan_in),
  // sqrt(6/fan_in)), head weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
  // biases.
  Network(const std::string& backbone_id, int input_size, int class_count,
          std::uint64_t init_seed);

  static std::vector<std::string> known_backbones();

  const std::string& backbone_id() const { return backbone_id_; }
  int input_size() const { return input_size_; }
  int class_count() const override { return class_count_; }
  int feature_dim() const { return feature_dim_; }

  int predict(const Tensor& input) const override;
  std::vector<float> logits(const Tensor& input) const;

  // Forward + backward for one sample; gradients accumulate into
  // ParamBlock::grad (backbone gradients only when scope is kFull).
  // Returns the cross-entropy loss.
  double accumulate_gradients(const Tensor& input, int label, TrainableScope scope);

  void zero_grad();
  // SGD over the trainable blocks, gradients scaled by grad_scale.
  void sgd_step(TrainableScope scope, float lr, float weight_decay, float momentum,
                float grad_scale);

  std::vector<ParamBlock>& params() { return params_; }
  const std::vector<ParamBlock>& params() const { return params_; }

  // Replaces the classification head with a freshly initialized one.
  void reset_head(int class_count, std::uint64_t init_seed);

  void save(const std::filesystem::path& path) const;
  static Network load(const std::filesystem::path& path);

  friend bool operator==(const Network& a, const Network& b);

 private:
  struct Workspace {
    std::vector<std::vector<float>> cols;      // im2col per conv layer
    std::vector<std::vector<float>> pre_act;   // conv output before ReLU
    std::vector<std::vector<float>> pooled;    // block outputs
    std::vector<float> features;
    std::vector<float> logits;
  };

  void build(int class_count, std::uint64_t init_seed);
  void check_input(const Tensor& input) const;
  void forward(const Tensor& input, Workspace& ws) const;

  std::string backbone_id_;
  int input_size_ = 0;
  int class_count_ = 0;
  int feature_dim_ = 0;
  std::vector<ConvSpec> convs_;
  std::vector<ParamBlock> params_;  // conv0.w, conv0.b, ..., head.w, head.b
  mutable Workspace ws_;
};

// Checkpoint sidecar descriptor.
struct CheckpointInfo {
  std::string backbone_id;
  int class_count = 0;
  int input_size = 0;
  std::string stage;
  int epoch = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static CheckpointInfo from_json(const nlohmann::json& j);
};

// Writes <path> (weights) and <path>.json (descriptor).
void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const CheckpointInfo& info);
Network load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

struct ModelHandle {
  std::string backbone_id;
  std::string pretrained_source;  // e.g. "init:<seed>" or a checkpoint path
  TrainableScope trainable_scope = TrainableScope::kFull;
  Network network;

  int class_count() const { return network.class_count(); }
};

// A freshly initialized model standing in for a pretrained one.
ModelHandle make_model(const std::string& backbone_id, int input_size, int class_count,
                       std::uint64_t init_seed);

}  // namespace sgia
