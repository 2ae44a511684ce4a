#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "heatcast/dataset.hpp"
#include "heatcast/tensor.hpp"

namespace heatcast::models {

using autograd::Tape;
using autograd::Tensor;

struct ConvSpec {
  std::size_t out_channels = 8;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

struct LstmConfig {
  std::size_t layers = 4;
  std::size_t hidden = 32;
  std::size_t input_dim = 13;
  std::size_t horizon = 24;
};

struct ModelFConfig {
  std::size_t in_channels = 13;
  std::size_t height = 24;
  std::size_t width = 24;
  std::vector<ConvSpec> convs;
  std::vector<std::size_t> dense;  // hidden widths before the output layer
  std::size_t horizon = 24;
};

struct ModelFPrimeConfig {
  std::size_t endo_channels = 5;
  std::size_t exo_channels = 8;
  std::size_t height = 24;
  std::size_t width = 24;
  ConvSpec endo_conv;  // exactly one convolution layer per branch
  ConvSpec exo_conv;
  std::size_t attn_dim = 16;   // query/key projection width per head
  std::size_t value_dim = 16;  // value projection width per head
  std::size_t heads = 1;
  bool residual = false;  // when set, endogenous tokens are concatenated to the context
  std::vector<std::size_t> dense;
  std::size_t horizon = 24;
};

struct LinearConfig {
  std::size_t in_features = 13 * 24;
  std::size_t horizon = 24;
};

// Abstract forecaster over assembled sample windows. Parameters are shared
// tensors; forward passes never mutate them.
class ForecastModel {
 public:
  virtual ~ForecastModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t horizon() const = 0;

  // Builds scaled inputs from the window and returns the scaled forecast
  // as a [horizon] tensor on the tape.
  virtual Tensor forward_window(Tape& tape, const dataset::SampleWindow& window,
                                const dataset::ChannelScalers& scalers) const = 0;

  virtual std::vector<Tensor> parameters() const = 0;
  virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;
  virtual std::string config_text() const = 0;

  std::unique_ptr<ForecastModel> clone() const;
};

class LstmModel : public ForecastModel {
 public:
  LstmModel(LstmConfig config, Rng& rng);

  std::string kind() const override { return "lstm"; }
  std::size_t horizon() const override { return cfg_.horizon; }
  const LstmConfig& config() const { return cfg_; }

  // input: [T, input_dim]; stacked LSTM, last hidden state through a linear head.
  Tensor forward_features(Tape& tape, const Tensor& input) const;

  Tensor forward_window(Tape& tape, const dataset::SampleWindow& window,
                        const dataset::ChannelScalers& scalers) const override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  std::string config_text() const override;

 private:
  LstmConfig cfg_;
  struct Layer {
    // Gate order: input, forget, cell, output.
    std::array<Tensor, 4> w;  // [in, hidden]
    std::array<Tensor, 4> u;  // [hidden, hidden]
    std::array<Tensor, 4> b;  // [hidden]
  };
  std::vector<Layer> layers_;
  Tensor head_w_, head_b_;
};

class ModelF : public ForecastModel {
 public:
  ModelF(ModelFConfig config, Rng& rng);

  std::string kind() const override { return "model_f"; }
  std::size_t horizon() const override { return cfg_.horizon; }
  const ModelFConfig& config() const { return cfg_; }

  // stack: [in_channels, height, width].
  Tensor forward_features(Tape& tape, const Tensor& stack) const;

  Tensor forward_window(Tape& tape, const dataset::SampleWindow& window,
                        const dataset::ChannelScalers& scalers) const override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  std::string config_text() const override;

  // Element count of the first dense layer after flatten.
  std::size_t first_dense_parameter_count() const;

 private:
  ModelFConfig cfg_;
  std::vector<Tensor> conv_kernels_, conv_biases_;
  std::vector<Tensor> dense_w_, dense_b_;
};

class ModelFPrime : public ForecastModel {
 public:
  ModelFPrime(ModelFPrimeConfig config, Rng& rng);

  std::string kind() const override { return "model_fprime"; }
  std::size_t horizon() const override { return cfg_.horizon; }
  const ModelFPrimeConfig& config() const { return cfg_; }

  // endo: [endo_channels, H, W], exo: [exo_channels, H, W]. Each branch runs
  // its single convolution, tokenizes columns, adds a learnable positional
  // table; endogenous tokens are the attention queries.
  Tensor forward_features(Tape& tape, const Tensor& endo, const Tensor& exo) const;

  Tensor forward_window(Tape& tape, const dataset::SampleWindow& window,
                        const dataset::ChannelScalers& scalers) const override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  std::string config_text() const override;

 private:
  ModelFPrimeConfig cfg_;
  std::size_t endo_tokens_ = 0, exo_tokens_ = 0, token_dim_ = 0;
  Tensor endo_kernels_, endo_bias_, exo_kernels_, exo_bias_;
  Tensor endo_pos_, exo_pos_;
  struct Head {
    Tensor wq, bq, wk, bk, wv, bv;
  };
  std::vector<Head> heads_;
  std::vector<Tensor> dense_w_, dense_b_;
};

// Flattened raw feature windows through a single linear map; used as a
// closed-form-checkable baseline.
class LinearModel : public ForecastModel {
 public:
  LinearModel(LinearConfig config, Rng& rng);

  std::string kind() const override { return "linear"; }
  std::size_t horizon() const override { return cfg_.horizon; }

  Tensor forward_features(Tape& tape, const Tensor& input) const;  // input: [1, in_features]

  Tensor forward_window(Tape& tape, const dataset::SampleWindow& window,
                        const dataset::ChannelScalers& scalers) const override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  std::string config_text() const override;

 private:
  LinearConfig cfg_;
  Tensor w_, b_;
};

struct DefaultConfigs {
  LstmConfig lstm;
  ModelFConfig model_f;
  ModelFPrimeConfig model_fprime;
};

// Full-size reconstructions targeting the published parameter counts.
DefaultConfigs default_configs();
// Small configurations for desk-scale training runs (attention dims <= 16).
DefaultConfigs desk_configs();

std::unique_ptr<ForecastModel> make_model(const std::string& kind, const std::string& config_text,
                                          Rng& rng);

std::size_t count_parameters(const ForecastModel& model);

// Scaled input builders shared by the model classes (exposed for tests).
Tensor window_stack_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s);
Tensor window_endo_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s);
Tensor window_exo_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s);
Tensor window_sequence_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s);

// ---- Checkpoints -------------------------------------------------------------
//
// Binary layout (all integers little-endian):
//   magic "HEATCKPT", u32 version, string kind, string config block,
//   channel metadata (names + endo count), scaler ranges,
//   u32 array count, then named f64 arrays with shapes.

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct ModelCheckpoint {
  std::uint32_t version = 1;
  std::string kind;
  std::string config_text;
  std::string dma_id;
  std::vector<std::string> endo_names;
  std::vector<std::string> exo_names;
  dataset::ChannelScalers scalers;
  std::vector<NamedArray> arrays;
};

std::size_t count_parameters(const ModelCheckpoint& checkpoint);

struct TrainedModel {
  std::unique_ptr<ForecastModel> model;
  dataset::ChannelScalers scalers;
  std::vector<std::string> endo_names;
  std::vector<std::string> exo_names;
  std::string dma_id;
};

ModelCheckpoint to_checkpoint(const TrainedModel& trained);
TrainedModel from_checkpoint(const ModelCheckpoint& checkpoint);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
void save_checkpoint(const TrainedModel& trained, const std::filesystem::path& path);
ModelCheckpoint read_checkpoint(const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// De-scaled forecast in kWh for one window.
std::vector<double> predict_kwh(const TrainedModel& trained, const dataset::SampleWindow& window);

}  // namespace heatcast::models
