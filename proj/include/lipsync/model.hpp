#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lipsync/features.hpp"
#include "lipsync/mesh.hpp"

namespace lipsync {

// Row-major so that one frame of a sequence tensor is contiguous.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { kRelu, kTanh, kLinear };

// Layer widths. Sequence tensors inside the network are frames x channels.
struct NetworkConfig {
  int input_dim = kCharacterClasses;
  std::vector<int> conv_channels{32, 32};  // empty: LSTM-only network
  int conv_kernel = 5;
  std::vector<int> lstm_sizes{128, 128, 64, 64};
  int embed_hidden = 128;  // tanh
  int embed_dim = 50;      // linear
  int vertices = 5713;

  int output_dim() const { return 3 * vertices; }
  // Frames of future input that reach an output frame through the convs.
  int lookahead() const;

  bool operator==(const NetworkConfig&) const = default;

  static NetworkConfig standard(int vertices);
  static NetworkConfig lstm_only(int vertices);
};

template <typename S>
struct Conv1dParamsT {
  // out x (kernel * in); column block k holds the tap applied to x[t + k - kernel/2].
  Mat<S> weight;
  Vec<S> bias;
  int in_channels = 0;
  int kernel = 5;

  int out_channels() const { return static_cast<int>(weight.rows()); }
};

enum class Gate : int { kForget = 0, kInput = 1, kOutput = 2, kCandidate = 3 };

template <typename S>
struct LstmCellParamsT {
  // Rows stacked [forget; input; output; candidate], each hidden x (hidden + input)
  // acting on the concatenation [h_prev, x_t].
  Mat<S> weight;
  Vec<S> bias;
  int hidden = 0;
  int input = 0;

  auto gate_weight(Gate g) { return weight.middleRows(static_cast<int>(g) * hidden, hidden); }
  auto gate_weight(Gate g) const {
    return weight.middleRows(static_cast<int>(g) * hidden, hidden);
  }
  auto gate_bias(Gate g) { return bias.segment(static_cast<int>(g) * hidden, hidden); }
  auto gate_bias(Gate g) const { return bias.segment(static_cast<int>(g) * hidden, hidden); }
};

template <typename S>
struct DenseParamsT {
  Mat<S> weight;  // out x in
  Vec<S> bias;
  Activation activation = Activation::kLinear;
};

template <typename S>
struct NetworkParamsT {
  NetworkConfig config;
  std::vector<Conv1dParamsT<S>> convs;
  std::vector<LstmCellParamsT<S>> lstms;
  DenseParamsT<S> fc1;
  DenseParamsT<S> fc2;
  DenseParamsT<S> decoder;

  // f(name, tensor) for every learnable tensor, in a fixed order.
  template <class F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "conv" + std::to_string(i + 1);
      f(p + ".weight", convs[i].weight);
      f(p + ".bias", convs[i].bias);
    }
    for (std::size_t i = 0; i < lstms.size(); ++i) {
      const std::string p = "lstm" + std::to_string(i + 1);
      f(p + ".weight", lstms[i].weight);
      f(p + ".bias", lstms[i].bias);
    }
    f(std::string("fc1.weight"), fc1.weight);
    f(std::string("fc1.bias"), fc1.bias);
    f(std::string("fc2.weight"), fc2.weight);
    f(std::string("fc2.bias"), fc2.bias);
    f(std::string("decoder.weight"), decoder.weight);
    f(std::string("decoder.bias"), decoder.bias);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<NetworkParamsT*>(this)->visit(
        [&](const std::string& name, auto& t) { f(name, std::as_const(t)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  template <typename T>
  NetworkParamsT<T> cast() const;
};

using Conv1dParams = Conv1dParamsT<double>;
using LstmCellParams = LstmCellParamsT<double>;
using DenseParams = DenseParamsT<double>;
using NetworkParams = NetworkParamsT<double>;
// Gradients mirror the parameter structure exactly.
using NetworkGradients = NetworkParamsT<double>;

// All tensors sized for `config` and set to zero.
template <typename S>
NetworkParamsT<S> zero_params(const NetworkConfig& config);
NetworkGradients zeros_like(const NetworkParams& params);

// Glorot-uniform weights, zero biases, forget-gate bias 1.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

template <typename S>
std::pair<Vec<S>, Vec<S>> lstm_step(const LstmCellParamsT<S>& p, const Vec<S>& x,
                                    const Vec<S>& h_prev, const Vec<S>& c_prev);

// Same-padded temporal convolution followed by ReLU. x is frames x in.
template <typename S>
Mat<S> conv1d_forward(const Conv1dParamsT<S>& p, const Mat<S>& x);

// Intermediate activations kept by a forward pass for backward().
template <typename S>
struct ForwardTrace {
  struct LstmLayer {
    Mat<S> input;   // frames x in
    Mat<S> gates;   // frames x 4H, post-activation, same order as weight rows
    Mat<S> cell;    // frames x H
    Mat<S> hidden;  // frames x H
  };

  NetworkConfig config;
  int frames = 0;
  Mat<S> input;
  std::vector<Mat<S>> conv_columns;  // im2col input of each conv
  std::vector<Mat<S>> conv_output;   // post-ReLU
  std::vector<LstmLayer> lstm;
  Mat<S> fc1_output;
  Mat<S> fc2_output;

  bool empty() const { return frames == 0; }
};

// input: frames x input_dim. Returns frames x (3 * vertices).
template <typename S>
Mat<S> forward(const NetworkParamsT<S>& params, const Mat<S>& input,
               ForwardTrace<S>* trace = nullptr);

DisplacementSequence forward(const NetworkParams& params, const FeatureSequence& features);
// Single-precision inference path.
DisplacementSequence forward_f32(const NetworkParams& params, const FeatureSequence& features);

// Backpropagation through time. upstream is dLoss/dOutput (frames x 3V).
// Throws kState when the trace is empty or does not belong to these params.
NetworkGradients backward(const NetworkParams& params, const ForwardTrace<double>& trace,
                          const Mat<double>& upstream, Mat<double>* input_grad = nullptr);

Mat<double> to_matrix(const FeatureSequence& features);
Mat<double> to_matrix(const DisplacementSequence& d);

// "LSN1" | u32 vertices | u32 tensor count | per tensor: u32 name length,
// name, u32 rank, u32 dims[rank], f64 payload (row-major), little-endian.
std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& params);
NetworkParams decode_checkpoint(std::span<const std::uint8_t> bytes,
                                const std::string& source = "<memory>");
void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace lipsync
