#include "lipsync/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "lipsync/error.hpp"
#include "lipsync/rng.hpp"

namespace lipsync {
namespace {

constexpr std::string_view kFeatureMagic = "LSF1";
constexpr std::size_t kFeatureHeaderBytes = 17;
constexpr std::uint64_t kMaxPayloadBytes = 1ULL << 34;

// Utterance-level mean/variance normalization of each coefficient.
Eigen::MatrixXd normalize_columns(const RowMatrix& frames) {
  Eigen::MatrixXd out = frames;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    auto col = out.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double var = col.squaredNorm() / static_cast<double>(col.size());
    const double stddev = std::sqrt(var);
    if (stddev > 1e-8) col /= stddev;
  }
  return out;
}

Eigen::MatrixXd context_average(const Eigen::MatrixXd& frames, int context) {
  const Eigen::Index n = frames.rows();
  Eigen::MatrixXd out(n, frames.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - context);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, t + context);
    out.row(t) = frames.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  return out;
}

void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    auto row = logits.row(t);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

}  // namespace

const char* to_string(FeatureKind kind) noexcept {
  switch (kind) {
    case FeatureKind::kCharProbSurrogate: return "char_prob_surrogate";
    case FeatureKind::kMfccRaw: return "mfcc_raw";
    case FeatureKind::kExternal: return "external";
  }
  return "unknown";
}

SurrogateProvider SurrogateProvider::from_seed(std::uint64_t seed, int context, int mfcc_dim,
                                               int classes, double weight_scale) {
  SurrogateProvider p;
  p.seed = seed;
  p.context = context;
  p.projection.resize(mfcc_dim, classes);
  p.bias.resize(classes);
  Rng rng(derive_seed(seed, 0x5u));
  for (int i = 0; i < mfcc_dim; ++i) {
    for (int j = 0; j < classes; ++j) p.projection(i, j) = weight_scale * rng.normal();
  }
  for (int j = 0; j < classes; ++j) p.bias[j] = 0.5 * weight_scale * rng.normal();
  return p;
}

int video_frame_count(double duration_seconds, double fps) {
  return static_cast<int>(std::lround(fps * duration_seconds));
}

Eigen::MatrixXd resample_features(const Eigen::MatrixXd& data, double source_rate,
                                  double target_fps, int out_frames) {
  if (data.rows() < 2) {
    fail(ErrorKind::kInsufficientFrames,
         "resample_features: need at least 2 source frames, got " + std::to_string(data.rows()));
  }
  if (source_rate <= 0.0 || target_fps <= 0.0 || out_frames < 0) {
    fail(ErrorKind::kUsage, "resample_features: rates must be positive");
  }
  const Eigen::Index last = data.rows() - 1;
  Eigen::MatrixXd out(out_frames, data.cols());
  for (int k = 0; k < out_frames; ++k) {
    const double pos = static_cast<double>(k) / target_fps * source_rate;
    if (pos >= static_cast<double>(last)) {
      out.row(k) = data.row(last);
      continue;
    }
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    const double w = pos - static_cast<double>(i);
    out.row(k) = (1.0 - w) * data.row(i) + w * data.row(i + 1);
  }
  return out;
}

Eigen::MatrixXd resample_features(const Eigen::MatrixXd& data, double source_rate,
                                  double target_fps) {
  const double duration = static_cast<double>(data.rows()) / source_rate;
  return resample_features(data, source_rate, target_fps, video_frame_count(duration, target_fps));
}

FeatureSequence surrogate_features(const MfccFrames& mfcc, const SurrogateProvider& provider,
                                   double target_fps) {
  if (mfcc.count() == 0) fail(ErrorKind::kEmptyInput, "surrogate_features: no MFCC frames");
  if (mfcc.frames.cols() != provider.projection.rows()) {
    fail(ErrorKind::kShape, "surrogate_features: MFCC dim " + std::to_string(mfcc.frames.cols()) +
                                " != provider input dim " +
                                std::to_string(provider.projection.rows()));
  }
  const Eigen::MatrixXd averaged = context_average(normalize_columns(mfcc.frames), provider.context);
  Eigen::MatrixXd probs = averaged * provider.projection;
  probs.rowwise() += provider.bias.transpose();
  softmax_rows(probs);
  const double duration = mfcc.source_duration > 0.0
                              ? mfcc.source_duration
                              : static_cast<double>(mfcc.count()) / mfcc.frame_rate;
  FeatureSequence out;
  out.fps = static_cast<int>(std::lround(target_fps));
  out.kind = FeatureKind::kCharProbSurrogate;
  out.data = resample_features(probs, mfcc.frame_rate, target_fps,
                               video_frame_count(duration, target_fps))
                 .cast<float>();
  return out;
}

FeatureSequence mfcc_features(const MfccFrames& mfcc, double target_fps) {
  const double duration = mfcc.source_duration > 0.0
                              ? mfcc.source_duration
                              : static_cast<double>(mfcc.count()) / mfcc.frame_rate;
  FeatureSequence out;
  out.fps = static_cast<int>(std::lround(target_fps));
  out.kind = FeatureKind::kMfccRaw;
  out.data = resample_features(normalize_columns(mfcc.frames), mfcc.frame_rate, target_fps,
                               video_frame_count(duration, target_fps))
                 .cast<float>();
  return out;
}

FeatureSequence features_from_waveform(const Waveform& wave, const SurrogateProvider& provider) {
  if (wave.samples.empty()) fail(ErrorKind::kEmptyInput, "features: empty waveform");
  const Waveform canonical = resample(wave, kCanonicalSampleRate);
  MfccFrames frames = mfcc(canonical);
  frames.source_duration = wave.duration();
  return surrogate_features(frames, provider);
}

std::vector<std::uint8_t> encode_features(const FeatureSequence& f) {
  detail::ByteWriter out;
  out.bytes(kFeatureMagic);
  out.u32(static_cast<std::uint32_t>(f.frames()));
  out.u32(static_cast<std::uint32_t>(f.dim()));
  out.u32(static_cast<std::uint32_t>(f.fps));
  out.u8(static_cast<std::uint8_t>(f.kind));
  out.buffer().reserve(kFeatureHeaderBytes + f.data.size() * 4);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) out.f32(f.data.data()[i]);
  return std::move(out.buffer());
}

FeatureSequence decode_features(std::span<const std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(4, "magic") != kFeatureMagic) in.error("bad magic (expected LSF1)");
  const std::uint32_t frames = in.u32("frame count");
  const std::uint32_t dim = in.u32("dimension");
  const std::uint32_t fps = in.u32("fps");
  const std::uint8_t kind = in.u8("kind");
  if (kind > static_cast<std::uint8_t>(FeatureKind::kExternal)) {
    in.error("unknown feature kind " + std::to_string(kind));
  }
  if (fps == 0) in.error("zero fps");
  const std::uint64_t payload = static_cast<std::uint64_t>(frames) * dim * 4;
  if (payload > kMaxPayloadBytes || (frames > 0 && dim == 0)) {
    in.error("dimension overflow (" + std::to_string(frames) + " x " + std::to_string(dim) + ")");
  }
  in.need(payload, "payload");
  if (in.remaining() != payload) in.error("trailing bytes after payload");
  FeatureSequence f;
  f.fps = static_cast<int>(fps);
  f.kind = static_cast<FeatureKind>(kind);
  f.data.resize(frames, dim);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data.data()[i] = in.f32("payload");
  return f;
}

void save_features(const FeatureSequence& features, const std::filesystem::path& path) {
  detail::write_file(path, encode_features(features));
}

FeatureSequence load_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file(path), path.string());
}

}  // namespace lipsync
