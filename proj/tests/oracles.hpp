#pragma once
// Reference implementations used only by the tests. They are deliberately
// naive (explicit loops, no shared helpers with the library) so that a bug in
// the optimized code cannot also be present in its oracle.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "lipsync/model.hpp"
#include "lipsync/rng.hpp"

namespace oracle {

using lipsync::Mat;
using lipsync::Vec;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One LSTM step with every gate written out as a scalar sum.
struct CellOut {
  std::vector<double> h, c;
};
inline CellOut lstm_step(const lipsync::LstmCellParams& p, const std::vector<double>& x,
                         const std::vector<double>& h_prev, const std::vector<double>& c_prev) {
  const int H = p.hidden, I = p.input;
  auto gate = [&](int g, int j) {
    double s = p.bias(g * H + j);
    for (int k = 0; k < H; ++k) s += p.weight(g * H + j, k) * h_prev[k];
    for (int k = 0; k < I; ++k) s += p.weight(g * H + j, H + k) * x[k];
    return s;
  };
  CellOut out{std::vector<double>(H), std::vector<double>(H)};
  for (int j = 0; j < H; ++j) {
    const double f = sigmoid(gate(0, j));
    const double i = sigmoid(gate(1, j));
    const double o = sigmoid(gate(2, j));
    const double cand = std::tanh(gate(3, j));
    out.c[j] = f * c_prev[j] + i * cand;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

// Direct-form "same" convolution with ReLU: y[t][o] = relu(b[o] + sum_k sum_i w(o,i,k) x[t+k-half][i]).
inline Mat<double> conv1d(const lipsync::Conv1dParams& p, const Mat<double>& x) {
  const int T = static_cast<int>(x.rows());
  const int in = p.in_channels, out = p.out_channels(), K = p.kernel, half = K / 2;
  Mat<double> y(T, out);
  for (int t = 0; t < T; ++t) {
    for (int o = 0; o < out; ++o) {
      double s = p.bias(o);
      for (int k = 0; k < K; ++k) {
        const int src = t + k - half;
        if (src < 0 || src >= T) continue;
        for (int i = 0; i < in; ++i) s += p.weight(o, k * in + i) * x(src, i);
      }
      y(t, o) = s > 0.0 ? s : 0.0;
    }
  }
  return y;
}

inline double position_loss_sum(const Mat<double>& pred, const Mat<double>& truth) {
  double s = 0.0;
  for (int t = 0; t < pred.rows(); ++t)
    for (int j = 0; j < pred.cols(); ++j) {
      const double d = truth(t, j) - pred(t, j);
      s += d * d;
    }
  return s;
}

inline double velocity_loss_sum(const Mat<double>& pred, const Mat<double>& truth) {
  double s = 0.0;
  for (int t = 1; t < pred.rows(); ++t)
    for (int j = 0; j < pred.cols(); ++j) {
      const double d = (truth(t, j) - truth(t - 1, j)) - (pred(t, j) - pred(t - 1, j));
      s += d * d;
    }
  return s;
}

// Central differences of a scalar function of a matrix, entry by entry.
inline Mat<double> numeric_gradient(const std::function<double(const Mat<double>&)>& f,
                                    Mat<double> x, double eps) {
  Mat<double> g(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + eps;
      const double up = f(x);
      x(r, c) = keep - eps;
      const double down = f(x);
      x(r, c) = keep;
      g(r, c) = (up - down) / (2.0 * eps);
    }
  return g;
}

// Magnitude of one DFT bin by direct summation.
inline double dft_magnitude(const std::vector<double>& x, double freq_hz, double rate) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double ph = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(n) / rate;
    acc += x[n] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return std::abs(acc);
}

inline Mat<double> random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  lipsync::Rng rng(seed);
  Mat<double> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

// Hand-assembled RIFF/WAVE bytes, independent of the library encoder.
inline std::vector<std::uint8_t> wav_bytes(const std::vector<std::int16_t>& interleaved,
                                           int channels, int rate, int format = 1, int bits = 16) {
  std::vector<std::uint8_t> b;
  auto u16 = [&](unsigned v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  auto tag = [&](const char* s) { b.insert(b.end(), s, s + 4); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  tag("RIFF");
  u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(channels * bits / 8);
  u16(bits);
  tag("data");
  u32(data_bytes);
  for (auto s : interleaved) u16(static_cast<std::uint16_t>(s));
  return b;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lipsync_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
