#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nnd/tensor.hpp"

namespace nnd {

/// Positive rational, written "p/q" (or "p") in configs.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Rational parse(const std::string& text);
  std::string to_string() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

enum class CriticKind { cnn, mlp };

/// Architecture of one critic (or feature network).
///
/// cnn: three 5×5 stride-2 convolutions of 64/128/256 × channel_multiplier
/// channels, each followed by swish, then a dense layer. mlp: dense+swish per
/// entry of mlp_hidden, then a dense layer. input_shape is [H, W, C] for cnn
/// and [D] for mlp.
struct CriticSpec {
  CriticKind kind = CriticKind::cnn;
  Shape input_shape{8, 8, 1};
  Rational channel_multiplier{};
  std::vector<std::int64_t> mlp_hidden;

  static constexpr std::int64_t kKernelSize = 5;
  static constexpr std::int64_t kStride = 2;
  static constexpr std::array<std::int64_t, 3> kBaseChannels{64, 128, 256};

  /// Throws ConfigError on any inconsistency.
  void validate() const;
  std::vector<std::int64_t> conv_channels() const;
  /// Spatial extent [H, W] after each conv stage.
  std::vector<std::array<std::int64_t, 2>> conv_extents() const;
  /// Width of the flattened representation fed to the output layer.
  std::int64_t feature_dim() const;

  bool operator==(const CriticSpec&) const = default;
};

std::string to_string(CriticKind kind);

void to_json(nlohmann::json& j, const CriticSpec& spec);
/// Strict: unknown keys and wrong types are ConfigErrors; missing keys take defaults.
void from_json(const nlohmann::json& j, CriticSpec& spec);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered, named parameter tensors plus the spec they realise.
/// Names: conv{i}.kernel, conv{i}.bias, hidden{i}.weight, hidden{i}.bias, out.weight, out.bias.
struct CriticParams {
  CriticSpec spec;
  std::int64_t outputs = 1;
  std::vector<NamedTensor> tensors;

  const Tensor& at(const std::string& name) const;
  std::vector<Tensor> values() const;
  /// Same names and spec, new leaf tensors (copied from `values`).
  CriticParams with_values(const std::vector<Tensor>& values) const;
  /// Deep copy with gradients switched on (or off) for every tensor.
  CriticParams clone(bool requires_grad) const;
  std::int64_t parameter_count() const;
};

/// He-style init: weights ~ N(0, 2 / fan_in), biases zero. `outputs` is 1 for
/// critics and K for classifiers sharing the same trunk.
CriticParams build_critic(const CriticSpec& spec, std::uint64_t seed, std::int64_t outputs = 1);

/// [N, outputs] scores for a batch [N, input_shape...].
Tensor critic_forward(const CriticParams& params, const Tensor& batch);

/// The flattened trunk activation (input of the output layer), [N, feature_dim].
Tensor critic_features(const CriticParams& params, const Tensor& batch);

struct EmaState {
  std::vector<Tensor> shadow;
  double coefficient = 0.999;
};

/// Shadow starts as a copy of the live parameters.
EmaState ema_init(const CriticParams& live, double coefficient);

/// shadow ← c·shadow + (1−c)·live. Pure: neither argument is modified.
EmaState ema_update(const EmaState& state, const CriticParams& live);

// ---------------------------------------------------------------------------
// NNDW checkpoints

inline constexpr std::uint32_t kNndwVersion = 1;

/// "NNDW", u32 version, u32 count, then per tensor: u32 name length + UTF-8
/// name, u32 rank, u32 dims, f32 LE payload.
void save_nndw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_nndw(const std::filesystem::path& path);

/// Rebuilds parameters from checkpoint tensors, inferring the architecture
/// from their names and shapes; `input_shape` must be supplied by the caller.
CriticParams params_from_checkpoint(const std::vector<NamedTensor>& tensors, const Shape& input_shape);

}  // namespace nnd
