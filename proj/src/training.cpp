#include "lipsync/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lipsync/error.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {
namespace {

void require_same_shape(const Mat<double>& pred, const Mat<double>& truth, const char* what) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    fail(ErrorKind::kShape, std::string(what) + ": prediction " + std::to_string(pred.rows()) +
                                " x " + std::to_string(pred.cols()) + " vs truth " +
                                std::to_string(truth.rows()) + " x " + std::to_string(truth.cols()));
  }
}

double position_scale(Eigen::Index frames, Reduction r) {
  return r == Reduction::kMeanPerFrame && frames > 0 ? 1.0 / static_cast<double>(frames) : 1.0;
}

double velocity_scale(Eigen::Index frames, Reduction r) {
  return r == Reduction::kMeanPerFrame && frames > 1 ? 1.0 / static_cast<double>(frames - 1) : 1.0;
}

// Residual velocity (y_t - y_{t-1}) - (p_t - p_{t-1}) for t = 1..T-1.
Mat<double> velocity_residual(const Mat<double>& pred, const Mat<double>& truth) {
  const Eigen::Index n = pred.rows();
  const Mat<double> residual = truth - pred;
  return residual.bottomRows(n - 1) - residual.topRows(n - 1);
}

double parse_number(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorKind::kUsage, "config: '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double loss_position(const Mat<double>& pred, const Mat<double>& truth, Reduction reduction) {
  require_same_shape(pred, truth, "loss_position");
  return (truth - pred).squaredNorm() * position_scale(pred.rows(), reduction);
}

double loss_velocity(const Mat<double>& pred, const Mat<double>& truth, Reduction reduction) {
  require_same_shape(pred, truth, "loss_velocity");
  if (pred.rows() < 2) return 0.0;
  return velocity_residual(pred, truth).squaredNorm() * velocity_scale(pred.rows(), reduction);
}

LossValue loss_total(const Mat<double>& pred, const Mat<double>& truth, const LossConfig& config,
                     bool with_gradient) {
  require_same_shape(pred, truth, "loss_total");
  const Eigen::Index n = pred.rows();
  const double sp = position_scale(n, config.reduction);
  const double sv = velocity_scale(n, config.reduction);
  const Mat<double> residual = truth - pred;

  LossValue out;
  out.position = residual.squaredNorm() * sp;
  Mat<double> vres;
  if (n >= 2) {
    vres = residual.bottomRows(n - 1) - residual.topRows(n - 1);
    out.velocity = vres.squaredNorm() * sv;
  }
  out.total = config.position_weight * out.position + config.velocity_weight * out.velocity;
  if (!with_gradient) return out;

  // d/dp_t of ||r_t||^2 is -2 r_t; the velocity residual v_t = r_t - r_{t-1}
  // contributes -2 v_t at frame t and +2 v_t at frame t-1.
  out.gradient = (-2.0 * config.position_weight * sp) * residual;
  if (n >= 2) {
    const double w = 2.0 * config.velocity_weight * sv;
    out.gradient.bottomRows(n - 1) -= w * vres;
    out.gradient.topRows(n - 1) += w * vres;
  }
  return out;
}

AdamState AdamState::zeros(const NetworkParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void adam_step(NetworkParams& params, const NetworkGradients& grads, AdamState& state,
               const AdamConfig& config) {
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  std::vector<Eigen::Map<const Eigen::ArrayXd>> g_views;
  std::vector<Eigen::Map<Eigen::ArrayXd>> p_views;
  grads.visit([&](const std::string&, const auto& t) { g_views.emplace_back(t.data(), t.size()); });
  params.visit([&](const std::string&, auto& t) { p_views.emplace_back(t.data(), t.size()); });
  std::vector<Eigen::Map<Eigen::ArrayXd>> m_mut, v_mut;
  state.first_moment.visit([&](const std::string&, auto& t) { m_mut.emplace_back(t.data(), t.size()); });
  state.second_moment.visit([&](const std::string&, auto& t) { v_mut.emplace_back(t.data(), t.size()); });
  if (g_views.size() != p_views.size()) fail(ErrorKind::kShape, "adam_step: gradient layout mismatch");
  for (std::size_t i = 0; i < p_views.size(); ++i) {
    if (g_views[i].size() != p_views[i].size()) {
      fail(ErrorKind::kShape, "adam_step: gradient tensor " + std::to_string(i) + " has wrong size");
    }
    auto& m = m_mut[i];
    auto& v = v_mut[i];
    const auto& g = g_views[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.square();
    p_views[i] -= config.learning_rate * (m / correction1) /
                  ((v / correction2).sqrt() + config.epsilon);
  }
}

double global_norm(const NetworkGradients& grads) {
  double sq = 0.0;
  grads.visit([&](const std::string&, const auto& t) { sq += t.squaredNorm(); });
  return std::sqrt(sq);
}

double clip_global_norm(NetworkGradients& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.visit([&](const std::string&, auto& t) { t *= scale; });
  }
  return norm;
}

std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kUsage, source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_key_values(const std::map<std::string, std::string>& values, TrainConfig& train,
                      LossConfig& loss) {
  for (const auto& [key, value] : values) {
    const double x = key == "reduction" || key == "checkpoint_dir" ? 0.0 : parse_number(key, value);
    if (key == "lr" || key == "learning_rate") train.learning_rate = x;
    else if (key == "beta1") train.beta1 = x;
    else if (key == "beta2") train.beta2 = x;
    else if (key == "epsilon") train.epsilon = x;
    else if (key == "epochs") train.epochs = static_cast<int>(x);
    else if (key == "seed") train.seed = static_cast<std::uint64_t>(x);
    else if (key == "checkpoint_every") train.checkpoint_every = static_cast<int>(x);
    else if (key == "checkpoint_dir") train.checkpoint_dir = value;
    else if (key == "batch") train.batch = static_cast<int>(x);
    else if (key == "clip_norm") train.clip_norm = x;
    else if (key == "w_pos") loss.position_weight = x;
    else if (key == "w_vel") loss.velocity_weight = x;
    else if (key == "reduction") {
      if (value == "sum") loss.reduction = Reduction::kSum;
      else if (value == "mean_per_frame") loss.reduction = Reduction::kMeanPerFrame;
      else fail(ErrorKind::kUsage, "config: reduction must be sum or mean_per_frame");
    } else {
      fail(ErrorKind::kUsage, "config: unknown key '" + key + "'");
    }
  }
}

SplitLoss evaluate_loss(const NetworkParams& params, const std::vector<Sample>& samples,
                        const LossConfig& config) {
  SplitLoss acc;
  for (const auto& s : samples) {
    const Mat<double> pred = forward(params, to_matrix(s.features));
    const LossValue l = loss_total(pred, to_matrix(s.displacements), config, false);
    acc.position += l.position;
    acc.velocity += l.velocity;
    acc.total += l.total;
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    acc.position /= n;
    acc.velocity /= n;
    acc.total /= n;
  }
  return acc;
}

namespace {

void validate_samples(const std::vector<Sample>& samples, const NetworkConfig& config) {
  for (const auto& s : samples) {
    if (s.features.frames() != s.displacements.frame_count()) {
      fail(ErrorKind::kData, "item '" + s.id + "': " + std::to_string(s.features.frames()) +
                                 " feature frames vs " +
                                 std::to_string(s.displacements.frame_count()) + " displacement frames");
    }
    if (s.features.frames() < 1) fail(ErrorKind::kData, "item '" + s.id + "' is empty");
    if (s.features.dim() != config.input_dim) {
      fail(ErrorKind::kData, "item '" + s.id + "': feature dim " + std::to_string(s.features.dim()) +
                                 ", network expects " + std::to_string(config.input_dim));
    }
    if (s.displacements.vertices != config.vertices) {
      fail(ErrorKind::kData, "item '" + s.id + "': " + std::to_string(s.displacements.vertices) +
                                 " vertices, network expects " + std::to_string(config.vertices));
    }
  }
}

void accumulate(NetworkGradients& into, const NetworkGradients& g) {
  std::vector<double*> dst;
  into.visit([&](const std::string&, auto& t) { dst.push_back(t.data()); });
  std::size_t i = 0;
  g.visit([&](const std::string&, const auto& t) {
    Eigen::Map<Eigen::ArrayXd>(dst[i++], t.size()) += Eigen::Map<const Eigen::ArrayXd>(t.data(), t.size());
  });
}

}  // namespace

TrainResult train(const Corpus& corpus, NetworkParams params, const LossConfig& loss,
                  const TrainConfig& config, const ProgressSink& sink) {
  if (corpus.train.empty()) fail(ErrorKind::kData, "train: corpus has no training items");
  if (config.epochs < 1) fail(ErrorKind::kUsage, "train: epochs must be >= 1");
  if (config.learning_rate <= 0.0) fail(ErrorKind::kUsage, "train: learning rate must be > 0");
  if (config.batch < 1) fail(ErrorKind::kUsage, "train: batch must be >= 1");
  validate_samples(corpus.train, params.config);
  validate_samples(corpus.validation, params.config);

  TrainResult result;
  AdamState state = AdamState::zeros(params);
  const AdamConfig adam = config.adam();
  Rng rng(derive_seed(config.seed, 0x7a11));
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  result.best_params = params;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochMetrics m;
    m.epoch = epoch;
    NetworkGradients pending = zeros_like(params);
    int in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      if (in_batch > 1) pending.visit([&](const std::string&, auto& t) { t /= in_batch; });
      if (clip_global_norm(pending, config.clip_norm) > config.clip_norm && config.clip_norm > 0.0) {
        ++m.clipped_steps;
      }
      adam_step(params, pending, state, adam);
      pending = zeros_like(params);
      in_batch = 0;
    };
    for (std::size_t idx : order) {
      const Sample& s = corpus.train[idx];
      ForwardTrace<double> trace;
      const Mat<double> pred = forward(params, to_matrix(s.features), &trace);
      const LossValue l = loss_total(pred, to_matrix(s.displacements), loss);
      m.train.position += l.position;
      m.train.velocity += l.velocity;
      m.train.total += l.total;
      const NetworkGradients g = backward(params, trace, l.gradient);
      if (config.batch == 1) {
        pending = g;
        in_batch = 1;
        flush();
      } else {
        accumulate(pending, g);
        if (++in_batch == config.batch) flush();
      }
    }
    flush();
    const double n = static_cast<double>(corpus.train.size());
    m.train.position /= n;
    m.train.velocity /= n;
    m.train.total /= n;

    if (!corpus.validation.empty()) {
      m.has_validation = true;
      m.validation = evaluate_loss(params, corpus.validation, loss);
      if (m.validation.total < best) {
        best = m.validation.total;
        result.best_params = params;
        result.best_epoch = epoch;
      }
    } else {
      result.best_params = params;
      result.best_epoch = epoch;
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
        epoch % config.checkpoint_every == 0) {
      save_checkpoint(params, config.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".lsn1"));
    }
    result.history.push_back(m);
    if (sink) sink(m);
  }
  result.params = std::move(params);
  return result;
}

std::string format_number(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 10);
  return std::string(buf, ptr);
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,split,lp,lv,total\n";
  auto row = [&](int epoch, const char* split, const SplitLoss& l) {
    out += std::to_string(epoch) + ',' + split + ',' + format_number(l.position) + ',' +
           format_number(l.velocity) + ',' + format_number(l.total) + '\n';
  };
  for (const auto& m : history) {
    row(m.epoch, "train", m.train);
    if (m.has_validation) row(m.epoch, "val", m.validation);
  }
  return out;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << metrics_csv(history);
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace lipsync
