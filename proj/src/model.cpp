#include "lipsync/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "binary_io.hpp"
#include "lipsync/error.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {
namespace {

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return (S(1) + (-z).exp()).inverse();
}

template <typename S>
void add_bias(Mat<S>& m, const Vec<S>& b) {
  m.rowwise() += b.transpose();
}

template <typename S>
void activate(Mat<S>& m, Activation a) {
  switch (a) {
    case Activation::kRelu: m = m.cwiseMax(S(0)); break;
    case Activation::kTanh: m = m.array().tanh().matrix(); break;
    case Activation::kLinear: break;
  }
}

template <typename S>
Mat<S> dense_forward(const DenseParamsT<S>& p, const Mat<S>& x) {
  Mat<S> y = x * p.weight.transpose();
  add_bias(y, p.bias);
  activate(y, p.activation);
  return y;
}

// frames x (kernel * in), zero rows outside the sequence.
template <typename S>
Mat<S> im2col(const Mat<S>& x, int kernel) {
  const Eigen::Index frames = x.rows();
  const Eigen::Index in = x.cols();
  const int half = kernel / 2;
  Mat<S> cols = Mat<S>::Zero(frames, kernel * in);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index offset = k - half;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - offset);
    if (t1 > t0) cols.block(t0, k * in, t1 - t0, in) = x.middleRows(t0 + offset, t1 - t0);
  }
  return cols;
}

// Inverse scatter of im2col: accumulates column gradients back onto frames.
Mat<double> col2im(const Mat<double>& cols, int kernel, Eigen::Index in) {
  const Eigen::Index frames = cols.rows();
  const int half = kernel / 2;
  Mat<double> x = Mat<double>::Zero(frames, in);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index offset = k - half;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - offset);
    if (t1 > t0) x.middleRows(t0 + offset, t1 - t0) += cols.block(t0, k * in, t1 - t0, in);
  }
  return x;
}

template <typename S>
Mat<S> lstm_forward(const LstmCellParamsT<S>& p, const Mat<S>& x,
                    typename ForwardTrace<S>::LstmLayer* trace) {
  const Eigen::Index frames = x.rows();
  const int h = p.hidden;
  const Mat<S> recurrent_t = p.weight.leftCols(h).transpose();  // H x 4H
  Mat<S> z = x * p.weight.rightCols(p.input).transpose();       // frames x 4H
  add_bias(z, p.bias);

  Mat<S> gates(frames, 4 * h);
  Mat<S> cell(frames, h);
  Mat<S> hidden(frames, h);
  RowVec<S> h_prev = RowVec<S>::Zero(h);
  RowVec<S> c_prev = RowVec<S>::Zero(h);
  RowVec<S> zt(4 * h);
  for (Eigen::Index t = 0; t < frames; ++t) {
    zt.noalias() = z.row(t);
    zt.noalias() += h_prev * recurrent_t;
    auto g = gates.row(t);
    g.head(3 * h) = sigmoid(zt.head(3 * h).array()).matrix();
    g.tail(h) = zt.tail(h).array().tanh().matrix();
    c_prev = g.segment(0, h).cwiseProduct(c_prev) + g.segment(h, h).cwiseProduct(g.tail(h));
    h_prev = g.segment(2 * h, h).cwiseProduct(c_prev.array().tanh().matrix());
    cell.row(t) = c_prev;
    hidden.row(t) = h_prev;
  }
  if (trace) {
    trace->input = x;
    trace->gates = std::move(gates);
    trace->cell = std::move(cell);
    trace->hidden = hidden;
  }
  return hidden;
}

// Returns dL/dx; accumulates weight gradients into g.
Mat<double> lstm_backward(const LstmCellParams& p, const ForwardTrace<double>::LstmLayer& tr,
                          const Mat<double>& d_hidden, LstmCellParams& g) {
  const Eigen::Index frames = d_hidden.rows();
  const int h = p.hidden;
  const Mat<double> recurrent = p.weight.leftCols(h);  // 4H x H
  Mat<double> dz(frames, 4 * h);
  RowVec<double> dh_next = RowVec<double>::Zero(h);
  RowVec<double> dc_next = RowVec<double>::Zero(h);
  RowVec<double> dh(h), dc(h), tanh_c(h);
  for (Eigen::Index t = frames - 1; t >= 0; --t) {
    const auto gt = tr.gates.row(t);
    const auto f = gt.segment(0, h).array();
    const auto i = gt.segment(h, h).array();
    const auto o = gt.segment(2 * h, h).array();
    const auto cand = gt.segment(3 * h, h).array();
    tanh_c = tr.cell.row(t).array().tanh().matrix();
    dh = d_hidden.row(t) + dh_next;
    dc = dc_next + (dh.array() * o * (1.0 - tanh_c.array().square())).matrix();
    auto dzt = dz.row(t);
    if (t > 0) {
      dzt.segment(0, h) = (dc.array() * tr.cell.row(t - 1).array() * f * (1.0 - f)).matrix();
    } else {
      dzt.segment(0, h).setZero();
    }
    dzt.segment(h, h) = (dc.array() * cand * i * (1.0 - i)).matrix();
    dzt.segment(2 * h, h) = (dh.array() * tanh_c.array() * o * (1.0 - o)).matrix();
    dzt.segment(3 * h, h) = (dc.array() * i * (1.0 - cand.square())).matrix();
    dc_next = (dc.array() * f).matrix();
    dh_next.noalias() = dzt * recurrent;
  }
  if (frames > 1) {
    g.weight.leftCols(h).noalias() +=
        dz.bottomRows(frames - 1).transpose() * tr.hidden.topRows(frames - 1);
  }
  g.weight.rightCols(p.input).noalias() += dz.transpose() * tr.input;
  g.bias += dz.colwise().sum().transpose();
  return dz * p.weight.rightCols(p.input);
}

template <typename S>
void check_input(const NetworkConfig& config, const Mat<S>& input) {
  if (input.cols() != config.input_dim) {
    fail(ErrorKind::kShape, "network expects feature dim " + std::to_string(config.input_dim) +
                                ", got " + std::to_string(input.cols()));
  }
}

template <typename To, typename From>
Conv1dParamsT<To> cast_conv(const Conv1dParamsT<From>& p) {
  return {p.weight.template cast<To>(), p.bias.template cast<To>(), p.in_channels, p.kernel};
}
template <typename To, typename From>
LstmCellParamsT<To> cast_lstm(const LstmCellParamsT<From>& p) {
  return {p.weight.template cast<To>(), p.bias.template cast<To>(), p.hidden, p.input};
}
template <typename To, typename From>
DenseParamsT<To> cast_dense(const DenseParamsT<From>& p) {
  return {p.weight.template cast<To>(), p.bias.template cast<To>(), p.activation};
}

template <typename S>
DenseParamsT<S> zero_dense(int out, int in, Activation a) {
  return {Mat<S>::Zero(out, in), Vec<S>::Zero(out), a};
}

}  // namespace

int NetworkConfig::lookahead() const {
  return static_cast<int>(conv_channels.size()) * (conv_kernel / 2);
}

NetworkConfig NetworkConfig::standard(int vertices) {
  NetworkConfig c;
  c.vertices = vertices;
  return c;
}

NetworkConfig NetworkConfig::lstm_only(int vertices) {
  NetworkConfig c = standard(vertices);
  c.conv_channels.clear();
  return c;
}

template <typename S>
template <typename T>
NetworkParamsT<T> NetworkParamsT<S>::cast() const {
  NetworkParamsT<T> out;
  out.config = config;
  for (const auto& c : convs) out.convs.push_back(cast_conv<T>(c));
  for (const auto& l : lstms) out.lstms.push_back(cast_lstm<T>(l));
  out.fc1 = cast_dense<T>(fc1);
  out.fc2 = cast_dense<T>(fc2);
  out.decoder = cast_dense<T>(decoder);
  return out;
}

template NetworkParamsT<float> NetworkParamsT<double>::cast<float>() const;
template NetworkParamsT<double> NetworkParamsT<double>::cast<double>() const;
template NetworkParamsT<double> NetworkParamsT<float>::cast<double>() const;

template <typename S>
NetworkParamsT<S> zero_params(const NetworkConfig& config) {
  if (config.vertices < 1) fail(ErrorKind::kShape, "network needs at least one vertex");
  if (config.lstm_sizes.empty()) fail(ErrorKind::kShape, "network needs at least one LSTM layer");
  if (config.conv_kernel < 1 || config.conv_kernel % 2 == 0) {
    fail(ErrorKind::kShape, "conv kernel must be odd and positive");
  }
  NetworkParamsT<S> p;
  p.config = config;
  int width = config.input_dim;
  for (int out : config.conv_channels) {
    p.convs.push_back({Mat<S>::Zero(out, config.conv_kernel * width), Vec<S>::Zero(out), width,
                       config.conv_kernel});
    width = out;
  }
  for (int hidden : config.lstm_sizes) {
    p.lstms.push_back({Mat<S>::Zero(4 * hidden, hidden + width), Vec<S>::Zero(4 * hidden), hidden,
                       width});
    width = hidden;
  }
  p.fc1 = zero_dense<S>(config.embed_hidden, width, Activation::kTanh);
  p.fc2 = zero_dense<S>(config.embed_dim, config.embed_hidden, Activation::kLinear);
  p.decoder = zero_dense<S>(config.output_dim(), config.embed_dim, Activation::kLinear);
  return p;
}

template NetworkParamsT<float> zero_params<float>(const NetworkConfig&);
template NetworkParamsT<double> zero_params<double>(const NetworkConfig&);

NetworkGradients zeros_like(const NetworkParams& params) {
  return zero_params<double>(params.config);
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams p = zero_params<double>(config);
  std::uint64_t stream = 0;
  auto fill = [&](Mat<double>& m, int fan_in, int fan_out) {
    Rng rng(derive_seed(seed, stream++));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  };
  for (auto& c : p.convs) fill(c.weight, c.in_channels * c.kernel, c.out_channels() * c.kernel);
  for (auto& l : p.lstms) {
    // Each gate matrix gets its own Glorot range.
    for (int g = 0; g < 4; ++g) {
      Mat<double> block(l.hidden, l.hidden + l.input);
      fill(block, l.hidden + l.input, l.hidden);
      l.weight.middleRows(g * l.hidden, l.hidden) = block;
    }
    l.gate_bias(Gate::kForget).setOnes();
  }
  for (DenseParams* d : {&p.fc1, &p.fc2, &p.decoder}) {
    fill(d->weight, static_cast<int>(d->weight.cols()), static_cast<int>(d->weight.rows()));
  }
  return p;
}

template <typename S>
std::pair<Vec<S>, Vec<S>> lstm_step(const LstmCellParamsT<S>& p, const Vec<S>& x,
                                    const Vec<S>& h_prev, const Vec<S>& c_prev) {
  if (x.size() != p.input || h_prev.size() != p.hidden || c_prev.size() != p.hidden) {
    fail(ErrorKind::kShape, "lstm_step: expected input " + std::to_string(p.input) + " and hidden " +
                                std::to_string(p.hidden) + ", got " + std::to_string(x.size()) +
                                "/" + std::to_string(h_prev.size()) + "/" +
                                std::to_string(c_prev.size()));
  }
  Vec<S> joined(p.hidden + p.input);
  joined << h_prev, x;
  const Vec<S> z = p.weight * joined + p.bias;
  const int h = p.hidden;
  const Vec<S> f = sigmoid(z.segment(0, h).array()).matrix();
  const Vec<S> i = sigmoid(z.segment(h, h).array()).matrix();
  const Vec<S> o = sigmoid(z.segment(2 * h, h).array()).matrix();
  const Vec<S> cand = z.segment(3 * h, h).array().tanh().matrix();
  Vec<S> c = f.cwiseProduct(c_prev) + i.cwiseProduct(cand);
  Vec<S> out = o.cwiseProduct(c.array().tanh().matrix());
  return {std::move(out), std::move(c)};
}

template std::pair<Vec<float>, Vec<float>> lstm_step(const LstmCellParamsT<float>&,
                                                     const Vec<float>&, const Vec<float>&,
                                                     const Vec<float>&);
template std::pair<Vec<double>, Vec<double>> lstm_step(const LstmCellParamsT<double>&,
                                                       const Vec<double>&, const Vec<double>&,
                                                       const Vec<double>&);

template <typename S>
Mat<S> conv1d_forward(const Conv1dParamsT<S>& p, const Mat<S>& x) {
  if (x.cols() != p.in_channels) {
    fail(ErrorKind::kShape, "conv1d: expected " + std::to_string(p.in_channels) +
                                " input channels, got " + std::to_string(x.cols()));
  }
  if (x.rows() < 1) fail(ErrorKind::kShape, "conv1d: empty sequence");
  Mat<S> y = im2col(x, p.kernel) * p.weight.transpose();
  add_bias(y, p.bias);
  activate(y, Activation::kRelu);
  return y;
}

template Mat<float> conv1d_forward(const Conv1dParamsT<float>&, const Mat<float>&);
template Mat<double> conv1d_forward(const Conv1dParamsT<double>&, const Mat<double>&);

template <typename S>
Mat<S> forward(const NetworkParamsT<S>& params, const Mat<S>& input, ForwardTrace<S>* trace) {
  check_input(params.config, input);
  if (input.rows() < 1) fail(ErrorKind::kShape, "forward: empty feature sequence");
  if (trace) {
    *trace = ForwardTrace<S>{};
    trace->config = params.config;
    trace->input = input;
    trace->lstm.resize(params.lstms.size());
  }
  Mat<S> h = input;
  for (const auto& conv : params.convs) {
    Mat<S> cols = im2col(h, conv.kernel);
    h = cols * conv.weight.transpose();
    add_bias(h, conv.bias);
    activate(h, Activation::kRelu);
    if (trace) {
      trace->conv_columns.push_back(std::move(cols));
      trace->conv_output.push_back(h);
    }
  }
  for (std::size_t i = 0; i < params.lstms.size(); ++i) {
    h = lstm_forward(params.lstms[i], h, trace ? &trace->lstm[i] : nullptr);
  }
  Mat<S> a1 = dense_forward(params.fc1, h);
  Mat<S> a2 = dense_forward(params.fc2, a1);
  Mat<S> out = dense_forward(params.decoder, a2);
  if (trace) {
    trace->fc1_output = std::move(a1);
    trace->fc2_output = std::move(a2);
    trace->frames = static_cast<int>(input.rows());
  }
  return out;
}

template Mat<float> forward(const NetworkParamsT<float>&, const Mat<float>&, ForwardTrace<float>*);
template Mat<double> forward(const NetworkParamsT<double>&, const Mat<double>&,
                             ForwardTrace<double>*);

Mat<double> to_matrix(const FeatureSequence& features) { return features.data.cast<double>(); }
Mat<double> to_matrix(const DisplacementSequence& d) { return d.frames.cast<double>(); }

namespace {
DisplacementSequence to_displacements(const auto& out, int vertices, int fps) {
  DisplacementSequence d;
  d.vertices = vertices;
  d.fps = fps;
  d.frames = out.template cast<float>();
  return d;
}
}  // namespace

DisplacementSequence forward(const NetworkParams& params, const FeatureSequence& features) {
  const Mat<double> out = forward(params, to_matrix(features));
  return to_displacements(out, params.config.vertices, features.fps);
}

DisplacementSequence forward_f32(const NetworkParams& params, const FeatureSequence& features) {
  const NetworkParamsT<float> p32 = params.cast<float>();
  const Mat<float> input = features.data;
  const Mat<float> out = forward(p32, input);
  return to_displacements(out, params.config.vertices, features.fps);
}

NetworkGradients backward(const NetworkParams& params, const ForwardTrace<double>& trace,
                          const Mat<double>& upstream, Mat<double>* input_grad) {
  if (trace.empty()) fail(ErrorKind::kState, "backward called without a forward trace");
  if (!(trace.config == params.config)) {
    fail(ErrorKind::kState, "backward: forward trace was produced by a different network shape");
  }
  if (upstream.rows() != trace.frames || upstream.cols() != params.config.output_dim()) {
    fail(ErrorKind::kShape, "backward: upstream gradient is " + std::to_string(upstream.rows()) +
                                " x " + std::to_string(upstream.cols()) + ", expected " +
                                std::to_string(trace.frames) + " x " +
                                std::to_string(params.config.output_dim()));
  }
  NetworkGradients g = zeros_like(params);

  g.decoder.weight.noalias() = upstream.transpose() * trace.fc2_output;
  g.decoder.bias = upstream.colwise().sum().transpose();
  const Mat<double> d_a2 = upstream * params.decoder.weight;

  g.fc2.weight.noalias() = d_a2.transpose() * trace.fc1_output;
  g.fc2.bias = d_a2.colwise().sum().transpose();
  const Mat<double> d_z1 =
      ((d_a2 * params.fc2.weight).array() * (1.0 - trace.fc1_output.array().square())).matrix();

  const Mat<double>& last_hidden = trace.lstm.back().hidden;
  g.fc1.weight.noalias() = d_z1.transpose() * last_hidden;
  g.fc1.bias = d_z1.colwise().sum().transpose();
  Mat<double> d_h = d_z1 * params.fc1.weight;

  for (std::size_t i = params.lstms.size(); i-- > 0;) {
    d_h = lstm_backward(params.lstms[i], trace.lstm[i], d_h, g.lstms[i]);
  }
  for (std::size_t i = params.convs.size(); i-- > 0;) {
    const auto& conv = params.convs[i];
    const Mat<double> d_pre =
        (d_h.array() * (trace.conv_output[i].array() > 0.0).cast<double>()).matrix();
    g.convs[i].weight.noalias() = d_pre.transpose() * trace.conv_columns[i];
    g.convs[i].bias = d_pre.colwise().sum().transpose();
    d_h = col2im(d_pre * conv.weight, conv.kernel, conv.in_channels);
  }
  if (input_grad) *input_grad = std::move(d_h);
  return g;
}

// Checkpoints -----------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "LSN1";
constexpr const char* kGateSuffix[4] = {"f", "i", "o", "C"};

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
  std::size_t offset = 0;
};

void put_tensor(detail::ByteWriter& out, const std::string& name,
                const std::vector<std::uint32_t>& dims, const std::vector<double>& values) {
  out.u32(static_cast<std::uint32_t>(name.size()));
  out.bytes(name);
  out.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) out.u32(d);
  for (double v : values) out.f64(v);
}

std::vector<double> flatten(const Mat<double>& m) {
  return {m.data(), m.data() + m.size()};  // row-major storage
}
std::vector<double> flatten(const auto& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

std::uint32_t u32(Eigen::Index v) { return static_cast<std::uint32_t>(v); }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& p) {
  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
  };
  std::vector<Entry> entries;
  for (std::size_t c = 0; c < p.convs.size(); ++c) {
    const auto& conv = p.convs[c];
    const std::string prefix = "conv" + std::to_string(c + 1);
    const int out = conv.out_channels(), in = conv.in_channels, k = conv.kernel;
    std::vector<double> kernel(static_cast<std::size_t>(out) * in * k);
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) {
        for (int t = 0; t < k; ++t) {
          kernel[(static_cast<std::size_t>(o) * in + i) * k + t] = conv.weight(o, t * in + i);
        }
      }
    }
    entries.push_back({prefix + ".kernel", {u32(out), u32(in), u32(k)}, std::move(kernel)});
    entries.push_back({prefix + ".bias", {u32(out)}, flatten(conv.bias)});
  }
  for (std::size_t l = 0; l < p.lstms.size(); ++l) {
    const auto& cell = p.lstms[l];
    const std::string prefix = "lstm" + std::to_string(l + 1);
    for (int g = 0; g < 4; ++g) {
      const Mat<double> w = cell.gate_weight(static_cast<Gate>(g));
      entries.push_back({prefix + ".W_" + kGateSuffix[g], {u32(w.rows()), u32(w.cols())}, flatten(w)});
    }
    for (int g = 0; g < 4; ++g) {
      entries.push_back({prefix + ".b_" + kGateSuffix[g], {u32(cell.hidden)},
                         flatten(cell.gate_bias(static_cast<Gate>(g)))});
    }
  }
  const std::pair<const char*, const DenseParams*> dense[] = {
      {"fc1", &p.fc1}, {"fc2", &p.fc2}, {"decoder", &p.decoder}};
  for (const auto& [name, d] : dense) {
    entries.push_back({std::string(name) + ".weight", {u32(d->weight.rows()), u32(d->weight.cols())},
                       flatten(d->weight)});
    entries.push_back({std::string(name) + ".bias", {u32(d->bias.size())}, flatten(d->bias)});
  }

  detail::ByteWriter out;
  out.bytes(kCheckpointMagic);
  out.u32(static_cast<std::uint32_t>(p.config.vertices));
  out.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) put_tensor(out, e.name, e.dims, e.values);
  return std::move(out.buffer());
}

NetworkParams decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(4, "magic") != kCheckpointMagic) in.error("bad magic (expected LSN1)");
  const std::uint32_t vertices = in.u32("vertex count");
  const std::uint32_t count = in.u32("tensor count");
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t name_len = in.u32("tensor name length");
    if (name_len == 0 || name_len > 256) in.error("bad tensor name length");
    std::string name = in.bytes(name_len, "tensor name");
    Tensor t;
    t.offset = in.offset();
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank == 0 || rank > 3) in.error("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    std::uint64_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(in.u32("tensor dim"));
      elements *= t.dims.back();
      if (elements > (1ULL << 31)) in.error("tensor '" + name + "' dimension overflow");
    }
    in.need(elements * 8, "tensor '" + name + "' payload");
    t.values.resize(elements);
    for (auto& v : t.values) v = in.f64("tensor payload");
    if (!tensors.emplace(name, std::move(t)).second) in.error("duplicate tensor '" + name + "'");
  }
  if (in.remaining() != 0) in.error("trailing bytes after tensors");

  auto take = [&](const std::string& name, std::vector<std::uint32_t> dims) -> const Tensor& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::kFormat, source + ": missing tensor '" + name + "'");
    if (it->second.dims != dims) {
      fail(ErrorKind::kFormat, source + ": tensor '" + name + "' at offset " +
                                   std::to_string(it->second.offset) + " has unexpected shape");
    }
    return it->second;
  };
  auto first_dims = [&](const std::string& name) -> const std::vector<std::uint32_t>& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::kFormat, source + ": missing tensor '" + name + "'");
    return it->second.dims;
  };

  NetworkConfig config;
  config.vertices = static_cast<int>(vertices);
  config.conv_channels.clear();
  config.lstm_sizes.clear();
  for (int c = 1; tensors.count("conv" + std::to_string(c) + ".kernel"); ++c) {
    const auto& d = first_dims("conv" + std::to_string(c) + ".kernel");
    if (d.size() != 3) in.error("conv kernel must be rank 3");
    if (c == 1) config.input_dim = static_cast<int>(d[1]);
    config.conv_kernel = static_cast<int>(d[2]);
    config.conv_channels.push_back(static_cast<int>(d[0]));
  }
  for (int l = 1; tensors.count("lstm" + std::to_string(l) + ".W_f"); ++l) {
    const auto& d = first_dims("lstm" + std::to_string(l) + ".W_f");
    if (d.size() != 2 || d[1] < d[0]) in.error("malformed LSTM gate weight");
    if (l == 1 && config.conv_channels.empty()) config.input_dim = static_cast<int>(d[1] - d[0]);
    config.lstm_sizes.push_back(static_cast<int>(d[0]));
  }
  if (config.lstm_sizes.empty()) fail(ErrorKind::kFormat, source + ": checkpoint has no LSTM layers");
  const auto& fc1 = first_dims("fc1.weight");
  const auto& fc2 = first_dims("fc2.weight");
  if (fc1.size() != 2 || fc2.size() != 2) in.error("malformed dense weights");
  config.embed_hidden = static_cast<int>(fc1[0]);
  config.embed_dim = static_cast<int>(fc2[0]);

  NetworkParams p = zero_params<double>(config);
  auto load_mat = [&](const std::string& name, auto& m) {
    const Tensor& t = take(name, {u32(m.rows()), u32(m.cols())});
    m = Eigen::Map<const Mat<double>>(t.values.data(), m.rows(), m.cols());
  };
  auto load_vec = [&](const std::string& name, auto&& v) {
    const Tensor& t = take(name, {u32(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = t.values[static_cast<std::size_t>(i)];
  };
  for (std::size_t c = 0; c < p.convs.size(); ++c) {
    auto& conv = p.convs[c];
    const std::string prefix = "conv" + std::to_string(c + 1);
    const int out = conv.out_channels(), inch = conv.in_channels, k = conv.kernel;
    const Tensor& t = take(prefix + ".kernel", {u32(out), u32(inch), u32(k)});
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < inch; ++i) {
        for (int s = 0; s < k; ++s) {
          conv.weight(o, s * inch + i) = t.values[(static_cast<std::size_t>(o) * inch + i) * k + s];
        }
      }
    }
    load_vec(prefix + ".bias", conv.bias);
  }
  for (std::size_t l = 0; l < p.lstms.size(); ++l) {
    auto& cell = p.lstms[l];
    const std::string prefix = "lstm" + std::to_string(l + 1);
    for (int g = 0; g < 4; ++g) {
      Mat<double> w(cell.hidden, cell.hidden + cell.input);
      load_mat(prefix + ".W_" + kGateSuffix[g], w);
      cell.gate_weight(static_cast<Gate>(g)) = w;
      load_vec(prefix + ".b_" + kGateSuffix[g], cell.gate_bias(static_cast<Gate>(g)));
    }
  }
  for (auto [name, d] : {std::pair{"fc1", &p.fc1}, std::pair{"fc2", &p.fc2},
                         std::pair{"decoder", &p.decoder}}) {
    load_mat(std::string(name) + ".weight", d->weight);
    load_vec(std::string(name) + ".bias", d->bias);
  }
  return p;
}

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(params));
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

}  // namespace lipsync
