#include "heatcast/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "heatcast/config.hpp"

namespace heatcast::models {

namespace {

using autograd::Shape;

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  if (k > in + 2 * padding) {
    throw DimensionError("convolution kernel " + std::to_string(k) + " larger than padded input " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

std::string conv_spec_text(const ConvSpec& c) {
  std::ostringstream os;
  os << c.out_channels << ',' << c.kernel_h << ',' << c.kernel_w << ',' << c.stride << ','
     << c.padding;
  return os.str();
}

ConvSpec parse_conv_spec(const std::string& text) {
  ConvSpec c;
  unsigned long long v[5] = {0, 0, 0, 0, 0};
  std::istringstream is(text);
  std::string field;
  for (int i = 0; i < 5; ++i) {
    if (!std::getline(is, field, ',')) throw FormatError("bad conv spec: " + text);
    try {
      v[i] = std::stoull(field);
    } catch (const std::exception&) {
      throw FormatError("bad conv spec: " + text);
    }
  }
  c.out_channels = v[0];
  c.kernel_h = v[1];
  c.kernel_w = v[2];
  c.stride = v[3];
  c.padding = v[4];
  return c;
}

std::string size_list_text(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::istringstream is(text);
  std::string field;
  while (std::getline(is, field, ',')) {
    try {
      out.push_back(std::stoull(field));
    } catch (const std::exception&) {
      throw FormatError("bad size list: " + text);
    }
  }
  return out;
}

Tensor scaled_scalogram_stack(const dataset::SampleWindow& w,
                              const dataset::ChannelScalers& s, std::size_t first,
                              std::size_t count) {
  const std::size_t h = first < w.endogenous.size() ? w.endogenous[first].time_bins
                                                    : w.exogenous[first - w.endogenous.size()].time_bins;
  const std::size_t sc = first < w.endogenous.size()
                             ? w.endogenous[first].scale_bins
                             : w.exogenous[first - w.endogenous.size()].scale_bins;
  Tensor out({count, h, sc});
  auto& v = out.vals();
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t ch = first + c;
    const signal::Scalogram& sg =
        ch < w.endogenous.size() ? w.endogenous[ch] : w.exogenous[ch - w.endogenous.size()];
    if (ch >= s.scalogram.size()) throw ContractError("channel scaler missing for channel");
    const dataset::ScaleRange& r = s.scalogram[ch];
    for (std::size_t i = 0; i < sg.grid.size(); ++i) {
      v[c * h * sc + i] = r.scale(sg.grid[i]);
    }
  }
  return out;
}

}  // namespace

Tensor window_stack_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s) {
  return scaled_scalogram_stack(w, s, 0, w.endogenous.size() + w.exogenous.size());
}

Tensor window_endo_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s) {
  return scaled_scalogram_stack(w, s, 0, w.endogenous.size());
}

Tensor window_exo_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s) {
  return scaled_scalogram_stack(w, s, w.endogenous.size(), w.exogenous.size());
}

Tensor window_sequence_tensor(const dataset::SampleWindow& w, const dataset::ChannelScalers& s) {
  const std::size_t channels = w.raw_channels.size();
  if (channels == 0) throw ContractError("window has no raw channels");
  const std::size_t h = w.raw_channels.front().size();
  Tensor out({h, channels});
  for (std::size_t c = 0; c < channels; ++c) {
    const dataset::ScaleRange& r = s.raw[c];
    for (std::size_t t = 0; t < h; ++t) out.vals()[t * channels + c] = r.scale(w.raw_channels[c][t]);
  }
  return out;
}

std::unique_ptr<ForecastModel> ForecastModel::clone() const {
  Rng rng(0);
  auto copy = make_model(kind(), config_text(), rng);
  auto src = named_parameters();
  auto dst = copy->named_parameters();
  if (src.size() != dst.size()) throw ContractError("clone: parameter list mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second.vals() = src[i].second.vals();
  }
  return copy;
}

// ---- LSTM ---------------------------------------------------------------------

LstmModel::LstmModel(LstmConfig config, Rng& rng) : cfg_(config) {
  if (cfg_.layers < 1 || cfg_.hidden < 1 || cfg_.input_dim < 1) {
    throw ContractError("LstmModel: layers, hidden and input_dim must be positive");
  }
  layers_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t in = l == 0 ? cfg_.input_dim : cfg_.hidden;
    for (std::size_t g = 0; g < 4; ++g) {
      layers_[l].w[g] = autograd::glorot_uniform({in, cfg_.hidden}, in, cfg_.hidden, rng);
      layers_[l].u[g] =
          autograd::glorot_uniform({cfg_.hidden, cfg_.hidden}, cfg_.hidden, cfg_.hidden, rng);
      layers_[l].b[g] = Tensor({cfg_.hidden}, 0.0, true);
    }
  }
  head_w_ = autograd::glorot_uniform({cfg_.hidden, cfg_.horizon}, cfg_.hidden, cfg_.horizon, rng);
  head_b_ = Tensor({cfg_.horizon}, 0.0, true);
}

Tensor LstmModel::forward_features(Tape& tape, const Tensor& input) const {
  if (input.rank() != 2 || input.dim(1) != cfg_.input_dim) {
    throw DimensionError("lstm_forward: input " + autograd::shape_str(input.shape()) +
                         " does not match input_dim " + std::to_string(cfg_.input_dim));
  }
  const std::size_t steps = input.dim(0);
  using namespace autograd;
  std::vector<Tensor> h(cfg_.layers), c(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    h[l] = Tensor({1, cfg_.hidden});
    c[l] = Tensor({1, cfg_.hidden});
  }
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x = slice_rows(tape, input, t, 1);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const Layer& layer = layers_[l];
      auto gate = [&](std::size_t g) {
        return add(tape, linear(tape, x, layer.w[g], layer.b[g]), matmul(tape, h[l], layer.u[g]));
      };
      Tensor gi = sigmoid(tape, gate(0));
      Tensor gf = sigmoid(tape, gate(1));
      Tensor gc = tanh_op(tape, gate(2));
      Tensor go = sigmoid(tape, gate(3));
      c[l] = add(tape, mul(tape, gf, c[l]), mul(tape, gi, gc));
      h[l] = mul(tape, go, tanh_op(tape, c[l]));
      x = h[l];
    }
  }
  Tensor out = linear(tape, h[cfg_.layers - 1], head_w_, head_b_);
  return reshape(tape, out, {cfg_.horizon});
}

Tensor LstmModel::forward_window(Tape& tape, const dataset::SampleWindow& window,
                                 const dataset::ChannelScalers& scalers) const {
  return forward_features(tape, window_sequence_tensor(window, scalers));
}

std::vector<Tensor> LstmModel::parameters() const {
  std::vector<Tensor> out;
  for (const Layer& l : layers_) {
    for (std::size_t g = 0; g < 4; ++g) {
      out.push_back(l.w[g]);
      out.push_back(l.u[g]);
      out.push_back(l.b[g]);
    }
  }
  out.push_back(head_w_);
  out.push_back(head_b_);
  return out;
}

std::vector<std::pair<std::string, Tensor>> LstmModel::named_parameters() const {
  static const char* gate_names[4] = {"i", "f", "c", "o"};
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t g = 0; g < 4; ++g) {
      const std::string prefix = "lstm.l" + std::to_string(l) + "." + gate_names[g];
      out.emplace_back(prefix + ".w", layers_[l].w[g]);
      out.emplace_back(prefix + ".u", layers_[l].u[g]);
      out.emplace_back(prefix + ".b", layers_[l].b[g]);
    }
  }
  out.emplace_back("head.w", head_w_);
  out.emplace_back("head.b", head_b_);
  return out;
}

std::string LstmModel::config_text() const {
  KeyValueConfig kv;
  kv.set("layers", std::to_string(cfg_.layers));
  kv.set("hidden", std::to_string(cfg_.hidden));
  kv.set("input_dim", std::to_string(cfg_.input_dim));
  kv.set("horizon", std::to_string(cfg_.horizon));
  return kv.to_text();
}

// ---- Model F --------------------------------------------------------------------

ModelF::ModelF(ModelFConfig config, Rng& rng) : cfg_(std::move(config)) {
  if (cfg_.convs.empty()) throw ContractError("ModelF: at least one convolution required");
  std::size_t ch = cfg_.in_channels, h = cfg_.height, w = cfg_.width;
  for (const ConvSpec& c : cfg_.convs) {
    const std::size_t fan_in = ch * c.kernel_h * c.kernel_w;
    const std::size_t fan_out = c.out_channels * c.kernel_h * c.kernel_w;
    conv_kernels_.push_back(autograd::glorot_uniform({c.out_channels, ch, c.kernel_h, c.kernel_w},
                                                     fan_in, fan_out, rng));
    conv_biases_.push_back(Tensor({c.out_channels}, 0.0, true));
    h = conv_out_dim(h, c.kernel_h, c.stride, c.padding);
    w = conv_out_dim(w, c.kernel_w, c.stride, c.padding);
    ch = c.out_channels;
  }
  std::size_t width = ch * h * w;
  for (std::size_t d : cfg_.dense) {
    dense_w_.push_back(autograd::glorot_uniform({width, d}, width, d, rng));
    dense_b_.push_back(Tensor({d}, 0.0, true));
    width = d;
  }
  dense_w_.push_back(autograd::glorot_uniform({width, cfg_.horizon}, width, cfg_.horizon, rng));
  dense_b_.push_back(Tensor({cfg_.horizon}, 0.0, true));
}

Tensor ModelF::forward_features(Tape& tape, const Tensor& stack) const {
  if (stack.rank() != 3 || stack.dim(0) != cfg_.in_channels || stack.dim(1) != cfg_.height ||
      stack.dim(2) != cfg_.width) {
    throw DimensionError("model_f_forward: stack " + autograd::shape_str(stack.shape()) +
                         " does not match configured input [" + std::to_string(cfg_.in_channels) +
                         "x" + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "]");
  }
  using namespace autograd;
  Tensor x = stack;
  for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
    x = relu(tape, conv2d(tape, x, conv_kernels_[i], conv_biases_[i], cfg_.convs[i].stride,
                          cfg_.convs[i].padding));
  }
  x = reshape(tape, x, {1, x.size()});
  for (std::size_t i = 0; i + 1 < dense_w_.size(); ++i) {
    x = relu(tape, linear(tape, x, dense_w_[i], dense_b_[i]));
  }
  x = linear(tape, x, dense_w_.back(), dense_b_.back());
  return reshape(tape, x, {cfg_.horizon});
}

Tensor ModelF::forward_window(Tape& tape, const dataset::SampleWindow& window,
                              const dataset::ChannelScalers& scalers) const {
  return forward_features(tape, window_stack_tensor(window, scalers));
}

std::vector<Tensor> ModelF::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < conv_kernels_.size(); ++i) {
    out.push_back(conv_kernels_[i]);
    out.push_back(conv_biases_[i]);
  }
  for (std::size_t i = 0; i < dense_w_.size(); ++i) {
    out.push_back(dense_w_[i]);
    out.push_back(dense_b_[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelF::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < conv_kernels_.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".kernels", conv_kernels_[i]);
    out.emplace_back("conv" + std::to_string(i) + ".bias", conv_biases_[i]);
  }
  for (std::size_t i = 0; i < dense_w_.size(); ++i) {
    out.emplace_back("dense" + std::to_string(i) + ".w", dense_w_[i]);
    out.emplace_back("dense" + std::to_string(i) + ".b", dense_b_[i]);
  }
  return out;
}

std::string ModelF::config_text() const {
  KeyValueConfig kv;
  kv.set("in_channels", std::to_string(cfg_.in_channels));
  kv.set("height", std::to_string(cfg_.height));
  kv.set("width", std::to_string(cfg_.width));
  kv.set("horizon", std::to_string(cfg_.horizon));
  std::string convs;
  for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
    if (i) convs += ";";
    convs += conv_spec_text(cfg_.convs[i]);
  }
  kv.set("convs", convs);
  kv.set("dense", size_list_text(cfg_.dense));
  return kv.to_text();
}

std::size_t ModelF::first_dense_parameter_count() const {
  return dense_w_.front().size() + dense_b_.front().size();
}

// ---- Model F' --------------------------------------------------------------------

ModelFPrime::ModelFPrime(ModelFPrimeConfig config, Rng& rng) : cfg_(std::move(config)) {
  if (cfg_.heads < 1) throw ContractError("ModelFPrime: heads must be >= 1");
  const std::size_t eh = conv_out_dim(cfg_.height, cfg_.endo_conv.kernel_h, cfg_.endo_conv.stride,
                                      cfg_.endo_conv.padding);
  const std::size_t ew = conv_out_dim(cfg_.width, cfg_.endo_conv.kernel_w, cfg_.endo_conv.stride,
                                      cfg_.endo_conv.padding);
  const std::size_t xh = conv_out_dim(cfg_.height, cfg_.exo_conv.kernel_h, cfg_.exo_conv.stride,
                                      cfg_.exo_conv.padding);
  const std::size_t xw = conv_out_dim(cfg_.width, cfg_.exo_conv.kernel_w, cfg_.exo_conv.stride,
                                      cfg_.exo_conv.padding);
  if (cfg_.endo_conv.out_channels * eh != cfg_.exo_conv.out_channels * xh) {
    throw ContractError("ModelFPrime: branch token dimensions differ");
  }
  endo_tokens_ = ew;
  exo_tokens_ = xw;
  token_dim_ = cfg_.endo_conv.out_channels * eh;

  {
    const std::size_t fan_in = cfg_.endo_channels * cfg_.endo_conv.kernel_h * cfg_.endo_conv.kernel_w;
    const std::size_t fan_out =
        cfg_.endo_conv.out_channels * cfg_.endo_conv.kernel_h * cfg_.endo_conv.kernel_w;
    endo_kernels_ = autograd::glorot_uniform(
        {cfg_.endo_conv.out_channels, cfg_.endo_channels, cfg_.endo_conv.kernel_h,
         cfg_.endo_conv.kernel_w},
        fan_in, fan_out, rng);
    endo_bias_ = Tensor({cfg_.endo_conv.out_channels}, 0.0, true);
  }
  {
    const std::size_t fan_in = cfg_.exo_channels * cfg_.exo_conv.kernel_h * cfg_.exo_conv.kernel_w;
    const std::size_t fan_out =
        cfg_.exo_conv.out_channels * cfg_.exo_conv.kernel_h * cfg_.exo_conv.kernel_w;
    exo_kernels_ = autograd::glorot_uniform(
        {cfg_.exo_conv.out_channels, cfg_.exo_channels, cfg_.exo_conv.kernel_h,
         cfg_.exo_conv.kernel_w},
        fan_in, fan_out, rng);
    exo_bias_ = Tensor({cfg_.exo_conv.out_channels}, 0.0, true);
  }
  endo_pos_ = Tensor({endo_tokens_, token_dim_}, 0.0, true);
  exo_pos_ = Tensor({exo_tokens_, token_dim_}, 0.0, true);

  heads_.resize(cfg_.heads);
  for (Head& head : heads_) {
    head.wq = autograd::glorot_uniform({token_dim_, cfg_.attn_dim}, token_dim_, cfg_.attn_dim, rng);
    head.bq = Tensor({cfg_.attn_dim}, 0.0, true);
    head.wk = autograd::glorot_uniform({token_dim_, cfg_.attn_dim}, token_dim_, cfg_.attn_dim, rng);
    head.bk = Tensor({cfg_.attn_dim}, 0.0, true);
    head.wv =
        autograd::glorot_uniform({token_dim_, cfg_.value_dim}, token_dim_, cfg_.value_dim, rng);
    head.bv = Tensor({cfg_.value_dim}, 0.0, true);
  }

  std::size_t width = endo_tokens_ * cfg_.value_dim * cfg_.heads;
  if (cfg_.residual) width += endo_tokens_ * token_dim_;
  for (std::size_t d : cfg_.dense) {
    dense_w_.push_back(autograd::glorot_uniform({width, d}, width, d, rng));
    dense_b_.push_back(Tensor({d}, 0.0, true));
    width = d;
  }
  dense_w_.push_back(autograd::glorot_uniform({width, cfg_.horizon}, width, cfg_.horizon, rng));
  dense_b_.push_back(Tensor({cfg_.horizon}, 0.0, true));
}

Tensor ModelFPrime::forward_features(Tape& tape, const Tensor& endo, const Tensor& exo) const {
  if (endo.rank() != 3 || endo.dim(0) != cfg_.endo_channels || endo.dim(1) != cfg_.height ||
      endo.dim(2) != cfg_.width) {
    throw DimensionError("model_fprime_forward: endogenous stack " +
                         autograd::shape_str(endo.shape()) + " does not match config");
  }
  if (exo.rank() != 3 || exo.dim(0) != cfg_.exo_channels || exo.dim(1) != cfg_.height ||
      exo.dim(2) != cfg_.width) {
    throw DimensionError("model_fprime_forward: exogenous stack " +
                         autograd::shape_str(exo.shape()) + " does not match config");
  }
  using namespace autograd;
  Tensor e = relu(tape, conv2d(tape, endo, endo_kernels_, endo_bias_, cfg_.endo_conv.stride,
                               cfg_.endo_conv.padding));
  Tensor x = relu(tape, conv2d(tape, exo, exo_kernels_, exo_bias_, cfg_.exo_conv.stride,
                               cfg_.exo_conv.padding));
  Tensor e_tok = add(tape, tokenize(tape, e), endo_pos_);
  Tensor x_tok = add(tape, tokenize(tape, x), exo_pos_);

  std::vector<Tensor> contexts;
  contexts.reserve(heads_.size());
  for (const Head& head : heads_) {
    Tensor q = linear(tape, e_tok, head.wq, head.bq);
    Tensor k = linear(tape, x_tok, head.wk, head.bk);
    Tensor v = linear(tape, x_tok, head.wv, head.bv);
    contexts.push_back(scaled_dot_product_attention(tape, q, k, v));
  }
  Tensor ctx = contexts.size() == 1 ? contexts.front() : concat_cols(tape, contexts);
  Tensor flat = reshape(tape, ctx, {1, ctx.size()});
  if (cfg_.residual) {
    Tensor e_flat = reshape(tape, e_tok, {1, e_tok.size()});
    flat = concat_cols(tape, {flat, e_flat});
  }
  for (std::size_t i = 0; i + 1 < dense_w_.size(); ++i) {
    flat = relu(tape, linear(tape, flat, dense_w_[i], dense_b_[i]));
  }
  flat = linear(tape, flat, dense_w_.back(), dense_b_.back());
  return reshape(tape, flat, {cfg_.horizon});
}

Tensor ModelFPrime::forward_window(Tape& tape, const dataset::SampleWindow& window,
                                   const dataset::ChannelScalers& scalers) const {
  return forward_features(tape, window_endo_tensor(window, scalers),
                          window_exo_tensor(window, scalers));
}

std::vector<Tensor> ModelFPrime::parameters() const {
  std::vector<Tensor> out = {endo_kernels_, endo_bias_, exo_kernels_, exo_bias_,
                             endo_pos_,     exo_pos_};
  for (const Head& h : heads_) {
    out.push_back(h.wq);
    out.push_back(h.bq);
    out.push_back(h.wk);
    out.push_back(h.bk);
    out.push_back(h.wv);
    out.push_back(h.bv);
  }
  for (std::size_t i = 0; i < dense_w_.size(); ++i) {
    out.push_back(dense_w_[i]);
    out.push_back(dense_b_[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelFPrime::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("endo_conv.kernels", endo_kernels_);
  out.emplace_back("endo_conv.bias", endo_bias_);
  out.emplace_back("exo_conv.kernels", exo_kernels_);
  out.emplace_back("exo_conv.bias", exo_bias_);
  out.emplace_back("endo_pos", endo_pos_);
  out.emplace_back("exo_pos", exo_pos_);
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string p = "attn.h" + std::to_string(i);
    out.emplace_back(p + ".wq", heads_[i].wq);
    out.emplace_back(p + ".bq", heads_[i].bq);
    out.emplace_back(p + ".wk", heads_[i].wk);
    out.emplace_back(p + ".bk", heads_[i].bk);
    out.emplace_back(p + ".wv", heads_[i].wv);
    out.emplace_back(p + ".bv", heads_[i].bv);
  }
  for (std::size_t i = 0; i < dense_w_.size(); ++i) {
    out.emplace_back("dense" + std::to_string(i) + ".w", dense_w_[i]);
    out.emplace_back("dense" + std::to_string(i) + ".b", dense_b_[i]);
  }
  return out;
}

std::string ModelFPrime::config_text() const {
  KeyValueConfig kv;
  kv.set("endo_channels", std::to_string(cfg_.endo_channels));
  kv.set("exo_channels", std::to_string(cfg_.exo_channels));
  kv.set("height", std::to_string(cfg_.height));
  kv.set("width", std::to_string(cfg_.width));
  kv.set("horizon", std::to_string(cfg_.horizon));
  kv.set("endo_conv", conv_spec_text(cfg_.endo_conv));
  kv.set("exo_conv", conv_spec_text(cfg_.exo_conv));
  kv.set("attn_dim", std::to_string(cfg_.attn_dim));
  kv.set("value_dim", std::to_string(cfg_.value_dim));
  kv.set("heads", std::to_string(cfg_.heads));
  kv.set("residual", cfg_.residual ? "true" : "false");
  kv.set("dense", size_list_text(cfg_.dense));
  return kv.to_text();
}

// ---- Linear baseline ----------------------------------------------------------

LinearModel::LinearModel(LinearConfig config, Rng& rng) : cfg_(config) {
  w_ = autograd::glorot_uniform({cfg_.in_features, cfg_.horizon}, cfg_.in_features, cfg_.horizon,
                                rng);
  b_ = Tensor({cfg_.horizon}, 0.0, true);
}

Tensor LinearModel::forward_features(Tape& tape, const Tensor& input) const {
  using namespace autograd;
  return reshape(tape, linear(tape, input, w_, b_), {cfg_.horizon});
}

Tensor LinearModel::forward_window(Tape& tape, const dataset::SampleWindow& window,
                                   const dataset::ChannelScalers& scalers) const {
  Tensor seq = window_sequence_tensor(window, scalers);
  using namespace autograd;
  Tensor flat = reshape(tape, seq, {1, seq.size()});
  if (flat.dim(1) != cfg_.in_features) {
    throw DimensionError("linear model expects " + std::to_string(cfg_.in_features) +
                         " features, got " + std::to_string(flat.dim(1)));
  }
  return forward_features(tape, flat);
}

std::vector<Tensor> LinearModel::parameters() const { return {w_, b_}; }

std::vector<std::pair<std::string, Tensor>> LinearModel::named_parameters() const {
  return {{"w", w_}, {"b", b_}};
}

std::string LinearModel::config_text() const {
  KeyValueConfig kv;
  kv.set("in_features", std::to_string(cfg_.in_features));
  kv.set("horizon", std::to_string(cfg_.horizon));
  return kv.to_text();
}

// ---- Configurations -------------------------------------------------------------

DefaultConfigs default_configs() {
  DefaultConfigs out;
  out.lstm = LstmConfig{4, 32, 13, 24};

  out.model_f.in_channels = 13;
  out.model_f.convs = {ConvSpec{32, 3, 3, 1, 1}, ConvSpec{64, 3, 3, 1, 1}};
  out.model_f.dense = {4200};

  out.model_fprime.endo_channels = 5;
  out.model_fprime.exo_channels = 8;
  out.model_fprime.endo_conv = ConvSpec{16, 3, 3, 1, 1};
  out.model_fprime.exo_conv = ConvSpec{16, 3, 3, 1, 1};
  out.model_fprime.attn_dim = 384;
  out.model_fprime.value_dim = 384;
  out.model_fprime.heads = 1;
  out.model_fprime.dense = {576};
  return out;
}

DefaultConfigs desk_configs() {
  DefaultConfigs out;
  out.lstm = LstmConfig{4, 32, 13, 24};

  out.model_f.in_channels = 13;
  out.model_f.convs = {ConvSpec{6, 3, 3, 2, 1}, ConvSpec{6, 3, 3, 1, 1}};
  out.model_f.dense = {64};

  out.model_fprime.endo_channels = 5;
  out.model_fprime.exo_channels = 8;
  out.model_fprime.endo_conv = ConvSpec{4, 3, 3, 2, 1};
  out.model_fprime.exo_conv = ConvSpec{4, 3, 3, 2, 1};
  out.model_fprime.attn_dim = 16;
  out.model_fprime.value_dim = 16;
  out.model_fprime.heads = 1;
  out.model_fprime.dense = {64};
  return out;
}

std::unique_ptr<ForecastModel> make_model(const std::string& kind, const std::string& config_text,
                                          Rng& rng) {
  const KeyValueConfig kv = KeyValueConfig::parse(config_text);
  if (kind == "lstm") {
    LstmConfig c;
    c.layers = static_cast<std::size_t>(kv.get_int("layers", 4));
    c.hidden = static_cast<std::size_t>(kv.get_int("hidden", 32));
    c.input_dim = static_cast<std::size_t>(kv.get_int("input_dim", 13));
    c.horizon = static_cast<std::size_t>(kv.get_int("horizon", 24));
    return std::make_unique<LstmModel>(c, rng);
  }
  if (kind == "model_f") {
    ModelFConfig c;
    c.in_channels = static_cast<std::size_t>(kv.get_int("in_channels", 13));
    c.height = static_cast<std::size_t>(kv.get_int("height", 24));
    c.width = static_cast<std::size_t>(kv.get_int("width", 24));
    c.horizon = static_cast<std::size_t>(kv.get_int("horizon", 24));
    c.convs.clear();
    std::istringstream is(kv.get_string("convs", ""));
    std::string part;
    while (std::getline(is, part, ';')) {
      if (!part.empty()) c.convs.push_back(parse_conv_spec(part));
    }
    if (c.convs.empty()) throw FormatError("model_f config has no convolutions");
    c.dense = parse_size_list(kv.get_string("dense", ""));
    return std::make_unique<ModelF>(c, rng);
  }
  if (kind == "model_fprime") {
    ModelFPrimeConfig c;
    c.endo_channels = static_cast<std::size_t>(kv.get_int("endo_channels", 5));
    c.exo_channels = static_cast<std::size_t>(kv.get_int("exo_channels", 8));
    c.height = static_cast<std::size_t>(kv.get_int("height", 24));
    c.width = static_cast<std::size_t>(kv.get_int("width", 24));
    c.horizon = static_cast<std::size_t>(kv.get_int("horizon", 24));
    c.endo_conv = parse_conv_spec(kv.get_string("endo_conv", "4,3,3,2,1"));
    c.exo_conv = parse_conv_spec(kv.get_string("exo_conv", "4,3,3,2,1"));
    c.attn_dim = static_cast<std::size_t>(kv.get_int("attn_dim", 16));
    c.value_dim = static_cast<std::size_t>(kv.get_int("value_dim", 16));
    c.heads = static_cast<std::size_t>(kv.get_int("heads", 1));
    c.residual = kv.get_bool("residual", false);
    c.dense = parse_size_list(kv.get_string("dense", ""));
    return std::make_unique<ModelFPrime>(c, rng);
  }
  if (kind == "linear") {
    LinearConfig c;
    c.in_features = static_cast<std::size_t>(kv.get_int("in_features", 13 * 24));
    c.horizon = static_cast<std::size_t>(kv.get_int("horizon", 24));
    return std::make_unique<LinearModel>(c, rng);
  }
  throw FormatError("unknown model kind: " + kind);
}

std::size_t count_parameters(const ForecastModel& model) {
  return autograd::parameter_count(model.parameters());
}

std::size_t count_parameters(const ModelCheckpoint& checkpoint) {
  std::size_t n = 0;
  for (const NamedArray& a : checkpoint.arrays) n += a.values.size();
  return n;
}

// ---- Checkpoint serialization ----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'E', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void put_u64(std::string& buf, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}

void put_f64(std::string& buf, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}

void put_string(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

void put_range(std::string& buf, const dataset::ScaleRange& r) {
  put_f64(buf, r.lo);
  put_f64(buf, r.hi);
}

dataset::ScaleRange get_range(Reader& r) {
  dataset::ScaleRange out;
  out.lo = r.f64();
  out.hi = r.f64();
  return out;
}

}  // namespace

ModelCheckpoint to_checkpoint(const TrainedModel& trained) {
  ModelCheckpoint cp;
  cp.version = kVersion;
  cp.kind = trained.model->kind();
  cp.config_text = trained.model->config_text();
  cp.dma_id = trained.dma_id;
  cp.endo_names = trained.endo_names;
  cp.exo_names = trained.exo_names;
  cp.scalers = trained.scalers;
  for (const auto& [name, tensor] : trained.model->named_parameters()) {
    cp.arrays.push_back({name, tensor.shape(), tensor.vals()});
  }
  return cp;
}

TrainedModel from_checkpoint(const ModelCheckpoint& cp) {
  TrainedModel out;
  Rng rng(0);
  out.model = make_model(cp.kind, cp.config_text, rng);
  out.scalers = cp.scalers;
  out.endo_names = cp.endo_names;
  out.exo_names = cp.exo_names;
  out.dma_id = cp.dma_id;
  auto params = out.model->named_parameters();
  if (params.size() != cp.arrays.size()) {
    throw FormatError("checkpoint has " + std::to_string(cp.arrays.size()) +
                      " arrays but model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedArray& a = cp.arrays[i];
    if (a.name != params[i].first || a.shape != params[i].second.shape()) {
      throw FormatError("checkpoint array '" + a.name + "' does not match parameter '" +
                        params[i].first + "'");
    }
    params[i].second.vals() = a.values;
  }
  return out;
}

void save_checkpoint(const TrainedModel& trained, const std::filesystem::path& path) {
  save_checkpoint(to_checkpoint(trained), path);
}

void save_checkpoint(const ModelCheckpoint& cp, const std::filesystem::path& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, cp.version);
  put_string(buf, cp.kind);
  put_string(buf, cp.config_text);
  put_string(buf, cp.dma_id);

  put_u32(buf, static_cast<std::uint32_t>(cp.endo_names.size()));
  for (const auto& n : cp.endo_names) put_string(buf, n);
  put_u32(buf, static_cast<std::uint32_t>(cp.exo_names.size()));
  for (const auto& n : cp.exo_names) put_string(buf, n);

  put_u32(buf, static_cast<std::uint32_t>(cp.scalers.scalogram.size()));
  for (const auto& r : cp.scalers.scalogram) put_range(buf, r);
  put_u32(buf, static_cast<std::uint32_t>(cp.scalers.raw.size()));
  for (const auto& r : cp.scalers.raw) put_range(buf, r);
  put_range(buf, cp.scalers.target);

  put_u32(buf, static_cast<std::uint32_t>(cp.arrays.size()));
  for (const NamedArray& a : cp.arrays) {
    put_string(buf, a.name);
    put_u32(buf, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) put_u64(buf, d);
    for (double v : a.values) put_f64(buf, v);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("checkpoint write failed: " + path.string());
}

ModelCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  Reader r{buf};
  r.need(sizeof(kMagic));
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path.string());
  }
  r.pos = sizeof(kMagic);

  ModelCheckpoint cp;
  cp.version = r.u32();
  if (cp.version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(cp.version));
  }
  cp.kind = r.str();
  cp.config_text = r.str();
  cp.dma_id = r.str();

  const std::uint32_t n_endo = r.u32();
  for (std::uint32_t i = 0; i < n_endo; ++i) cp.endo_names.push_back(r.str());
  const std::uint32_t n_exo = r.u32();
  for (std::uint32_t i = 0; i < n_exo; ++i) cp.exo_names.push_back(r.str());

  const std::uint32_t n_sc = r.u32();
  for (std::uint32_t i = 0; i < n_sc; ++i) cp.scalers.scalogram.push_back(get_range(r));
  const std::uint32_t n_raw = r.u32();
  for (std::uint32_t i = 0; i < n_raw; ++i) cp.scalers.raw.push_back(get_range(r));
  cp.scalers.target = get_range(r);

  const std::uint32_t n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = r.str();
    const std::uint32_t rank = r.u32();
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= a.shape.back();
    }
    a.values.resize(numel);
    for (std::size_t v = 0; v < numel; ++v) a.values[v] = r.f64();
    cp.arrays.push_back(std::move(a));
  }
  if (r.pos != buf.size()) {
    throw FormatError("checkpoint has trailing bytes: " + path.string());
  }
  return cp;
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

std::vector<double> predict_kwh(const TrainedModel& trained, const dataset::SampleWindow& window) {
  Tape tape;
  const Tensor scaled = trained.model->forward_window(tape, window, trained.scalers);
  std::vector<double> out(scaled.vals());
  for (double& v : out) v = trained.scalers.target.descale(v);
  return out;
}

}  // namespace heatcast::models
