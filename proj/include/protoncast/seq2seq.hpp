#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoncast/preprocess.hpp"
#include "protoncast/tensor.hpp"

namespace protoncast {

enum class Mode { AR, OS };

std::string_view to_string(Mode m);

struct Strategy {
  Features features = Features::P;
  Variant variant = Variant::orig;
  Mode mode = Mode::OS;

  std::string name() const;  // e.g. "P+XR_trend_OS"
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

// Column order of the results table.
inline constexpr std::array<std::string_view, 6> kStrategyNames = {
    "P_orig_AR", "P_orig_OS", "P+XR_orig_AR", "P+XR_orig_OS", "P_trend_OS", "P+XR_trend_OS"};

// Rejects unknown names and trend strategies that are not one-shot.
Strategy parse_strategy(std::string_view name);

struct ModelConfig {
  std::size_t hidden = 512;
  std::size_t embed = 8;
  Features features = Features::P;
  Variant variant = Variant::orig;
  Mode mode = Mode::OS;
  std::size_t input_len = 288;
  std::size_t output_len = 288;

  std::size_t feature_count() const { return features == Features::P ? 1 : 2; }
  // Width of the decoder's first-layer step input.
  std::size_t decoder_input_size() const { return embed + hidden + (mode == Mode::AR ? 1 : 0); }
  Strategy strategy() const { return {features, variant, mode}; }
  std::string structure() const { return std::to_string(hidden) + "-" + std::to_string(embed); }
  void validate() const;

  PreprocessSpec preprocess(std::size_t half_window = 6, double log_floor = 1e-3) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig make_config(const Strategy& strategy, std::size_t hidden, std::size_t embed,
                        std::size_t input_len = 288, std::size_t output_len = 288);

// "H-E" → (H, E)
std::pair<std::size_t, std::size_t> parse_structure(std::string_view text);

// Zero-filled store with the names and shapes the model expects.
ParameterStore param_layout(const ModelConfig& config);

// Weights uniform on (−1/√H, 1/√H); biases zero except LSTM forget gates at 1.
ParameterStore init_params(const ModelConfig& config, std::uint64_t seed);

// Gate order inside kernel/recurrent/bias is input, forget, cell, output.
struct LstmWeights {
  const Tensor& kernel;     // [in, 4H]
  const Tensor& recurrent;  // [H, 4H]
  const Tensor& bias;       // [4H]
};

struct LstmGrads {
  Tensor& kernel;
  Tensor& recurrent;
  Tensor& bias;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

LstmState lstm_cell(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev,
                    const LstmWeights& w);

// Adjoint of one cell step; adds into grads and returns (dx, dh_prev, dc_prev).
struct LstmCellAdjoint {
  std::vector<double> dx;
  std::vector<double> dh_prev;
  std::vector<double> dc_prev;
};
LstmCellAdjoint lstm_cell_backward(std::span<const double> x, std::span<const double> h_prev,
                                   std::span<const double> c_prev, const LstmWeights& w,
                                   std::span<const double> dh, std::span<const double> dc, LstmGrads grads);

struct Encoding {
  Tensor outputs;                // [input_len × H], top-layer hidden sequence
  std::vector<double> embedding;  // [E]
};

Encoding encode(const Tensor& input, const ParameterStore& params, const ModelConfig& config);

struct AttentionResult {
  std::vector<double> context;  // [H]
  std::vector<double> weights;  // [rows of encoder_outputs], sums to 1
};

AttentionResult attend(std::span<const double> query_basis, const Tensor& encoder_outputs,
                       const ParameterStore& params);

std::vector<double> decode_os(std::span<const double> embedding, const Tensor& encoder_outputs,
                              double last_observed, const ParameterStore& params, const ModelConfig& config);

// Free-running unless `teacher` is given, in which case step t is fed teacher[t−1].
std::vector<double> decode_ar(std::span<const double> embedding, const Tensor& encoder_outputs,
                              double last_observed, const ParameterStore& params, const ModelConfig& config,
                              std::optional<std::span<const double>> teacher = std::nullopt);

// Full model evaluation; teacher forcing only applies to AR mode and needs a full target.
std::vector<double> forward(const Sample& sample, const ParameterStore& params, const ModelConfig& config,
                            bool teacher_forcing = false);

// Forward pass that keeps every intermediate needed for backpropagation through time.
class Seq2SeqPass {
 public:
  Seq2SeqPass(const ParameterStore& params, const ModelConfig& config);
  ~Seq2SeqPass();
  Seq2SeqPass(Seq2SeqPass&&) noexcept;
  Seq2SeqPass& operator=(Seq2SeqPass&&) noexcept;

  const std::vector<double>& run(const Tensor& input, std::optional<std::span<const double>> teacher);
  // Adds d(objective)/d(params) into grads given d(objective)/d(prediction).
  void backward(std::span<const double> prediction_grad, ParameterStore& grads);

  const std::vector<double>& prediction() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Per-sample MSE against sample.target; adds scale·∇MSE into grads.
double loss_and_gradient(const Sample& sample, const ParameterStore& params, const ModelConfig& config,
                         bool teacher_forcing, ParameterStore& grads, double scale = 1.0);

void check_sample(const Sample& sample, const ModelConfig& config, bool need_full_target);

}  // namespace protoncast
