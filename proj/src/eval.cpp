#include "lipsync/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "lipsync/error.hpp"

namespace lipsync {
namespace {

void require_same_shape(const Trajectories& a, const Trajectories& b, const char* what) {
  if (a.points.rows() != b.points.rows() || a.points.cols() != b.points.cols()) {
    fail(ErrorKind::kShape, std::string(what) + ": trajectory shapes differ (" +
                                std::to_string(a.frames()) + "x" + std::to_string(a.landmarks()) +
                                " vs " + std::to_string(b.frames()) + "x" +
                                std::to_string(b.landmarks()) + ")");
  }
}

struct Accum {
  double sum = 0.0;
  long count = 0;
  double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
};

Accum positional_sum(const Trajectories& p, const Trajectories& q) {
  Accum a;
  for (int t = 0; t < p.frames(); ++t) {
    for (int l = 0; l < p.landmarks(); ++l) {
      a.sum += std::hypot(p.u(t, l) - q.u(t, l), p.v(t, l) - q.v(t, l));
    }
  }
  a.count = static_cast<long>(p.frames()) * p.landmarks();
  return a;
}

Accum velocity_sum(const Trajectories& p, const Trajectories& q) {
  Accum a;
  for (int t = 1; t < p.frames(); ++t) {
    for (int l = 0; l < p.landmarks(); ++l) {
      const double du = (p.u(t, l) - p.u(t - 1, l)) - (q.u(t, l) - q.u(t - 1, l));
      const double dv = (p.v(t, l) - p.v(t - 1, l)) - (q.v(t, l) - q.v(t - 1, l));
      a.sum += std::hypot(du, dv);
    }
  }
  a.count = static_cast<long>(std::max(0, p.frames() - 1)) * p.landmarks();
  return a;
}

int slot_of(const TemplateMesh& mesh, int landmark_vertex) {
  for (std::size_t i = 0; i < mesh.landmarks.size(); ++i) {
    if (mesh.landmarks[i].index == landmark_vertex) {
      if (!mesh.landmarks[i].lip) {
        fail(ErrorKind::kData, "landmark " + std::to_string(landmark_vertex) + " is not a lip landmark");
      }
      return static_cast<int>(i);
    }
  }
  fail(ErrorKind::kData, "unknown landmark id " + std::to_string(landmark_vertex));
}

}  // namespace

Trajectories project_landmarks(const TemplateMesh& mesh, const DisplacementSequence& d,
                               std::span<const int> vertex_indices, const ProjectionConfig& config) {
  require_same_topology(mesh, d.vertices, "displacement sequence");
  if (config.px_per_unit <= 0.0) fail(ErrorKind::kUsage, "px_per_unit must be positive");
  for (int idx : vertex_indices) {
    if (idx < 0 || idx >= mesh.vertex_count()) {
      fail(ErrorKind::kTopology, "landmark index " + std::to_string(idx) + " out of range");
    }
  }
  const double s = config.px_per_unit;
  Trajectories out;
  out.points.resize(d.frame_count(), 2 * static_cast<Eigen::Index>(vertex_indices.size()));
  for (int t = 0; t < d.frame_count(); ++t) {
    for (std::size_t l = 0; l < vertex_indices.size(); ++l) {
      const int v = vertex_indices[l];
      const double x = mesh.vertices(v, 0) + static_cast<double>(d.frames(t, 3 * v));
      const double y = mesh.vertices(v, 1) + static_cast<double>(d.frames(t, 3 * v + 1));
      out.points(t, 2 * static_cast<Eigen::Index>(l)) = x * s + config.origin_u;
      out.points(t, 2 * static_cast<Eigen::Index>(l) + 1) = -y * s + config.origin_v;
    }
  }
  return out;
}

Trajectories select_landmarks(const Trajectories& traj, std::span<const int> slots) {
  Trajectories out;
  out.points.resize(traj.points.rows(), 2 * static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 0 || slots[i] >= traj.landmarks()) {
      fail(ErrorKind::kShape, "landmark slot " + std::to_string(slots[i]) + " out of range");
    }
    out.points.middleCols(2 * static_cast<Eigen::Index>(i), 2) = traj.points.middleCols(2 * slots[i], 2);
  }
  return out;
}

double positional_error(const Trajectories& pred, const Trajectories& truth) {
  require_same_shape(pred, truth, "positional_error");
  return positional_sum(pred, truth).mean();
}

double velocity_error(const Trajectories& pred, const Trajectories& truth) {
  require_same_shape(pred, truth, "velocity_error");
  if (pred.frames() < 2) {
    fail(ErrorKind::kInsufficientFrames, "velocity_error needs at least 2 frames");
  }
  return velocity_sum(pred, truth).mean();
}

int default_lip_landmark(const TemplateMesh& mesh) {
  for (const auto& lm : mesh.landmarks) {
    if (lm.lip) return lm.index;
  }
  fail(ErrorKind::kData, "mesh has no lip landmarks");
}

std::string lip_trajectory_csv(const Trajectories& traj, const TemplateMesh& mesh,
                               int landmark_vertex) {
  const int slot = slot_of(mesh, landmark_vertex);
  if (slot >= traj.landmarks()) fail(ErrorKind::kShape, "trajectory lacks landmark slot");
  std::string out = "frame,v_pixels\n";
  for (int t = 0; t < traj.frames(); ++t) {
    out += std::to_string(t) + ',' + format_number(traj.v(t, slot)) + '\n';
  }
  return out;
}

void write_lip_trajectory_csv(const Trajectories& traj, const TemplateMesh& mesh, int landmark_vertex,
                              const std::filesystem::path& path) {
  const std::string text = lip_trajectory_csv(traj, mesh, landmark_vertex);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

double mean_vertical_step(const Trajectories& traj, int slot) {
  if (traj.frames() < 2) return 0.0;
  double sum = 0.0;
  for (int t = 1; t < traj.frames(); ++t) sum += std::abs(traj.v(t, slot) - traj.v(t - 1, slot));
  return sum / (traj.frames() - 1);
}

double vertical_range(const Trajectories& traj, int slot) {
  const auto col = traj.points.col(2 * slot + 1);
  return traj.frames() > 0 ? col.maxCoeff() - col.minCoeff() : 0.0;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["pos_err_all"] = pos_err_all;
  j["pos_err_lip"] = pos_err_lip;
  j["vel_err_all"] = vel_err_all;
  j["vel_err_lip"] = vel_err_lip;
  j["sentences"] = nlohmann::ordered_json::array();
  for (const auto& s : sentences) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["frames"] = s.frames;
    e["pos_err_all"] = s.pos_err_all;
    e["pos_err_lip"] = s.pos_err_lip;
    e["vel_err_all"] = s.vel_err_all;
    e["vel_err_lip"] = s.vel_err_lip;
    j["sentences"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

EvalReport evaluate_sequences(const TemplateMesh& mesh, std::span<const std::string> ids,
                              std::span<const DisplacementSequence> predictions,
                              std::span<const DisplacementSequence> truths,
                              const ProjectionConfig& config) {
  if (predictions.size() != truths.size() || ids.size() != truths.size()) {
    fail(ErrorKind::kShape, "evaluate: prediction/truth/id counts differ");
  }
  const std::vector<int> indices = mesh.landmark_indices();
  const std::vector<int> lip_slots = mesh.lip_landmark_slots();
  Accum pos_all, pos_lip, vel_all, vel_lip;
  EvalReport report;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    try {
      const Trajectories p = project_landmarks(mesh, predictions[i], indices, config);
      const Trajectories q = project_landmarks(mesh, truths[i], indices, config);
      require_same_shape(p, q, "evaluate");
      const Trajectories pl = select_landmarks(p, lip_slots);
      const Trajectories ql = select_landmarks(q, lip_slots);
      const Accum a = positional_sum(p, q), b = positional_sum(pl, ql);
      const Accum c = velocity_sum(p, q), d = velocity_sum(pl, ql);
      SentenceMetrics s{ids[i], p.frames(), a.mean(), b.mean(), c.mean(), d.mean()};
      for (auto [acc, part] : {std::pair{&pos_all, a}, std::pair{&pos_lip, b},
                               std::pair{&vel_all, c}, std::pair{&vel_lip, d}}) {
        acc->sum += part.sum;
        acc->count += part.count;
      }
      report.sentences.push_back(std::move(s));
    } catch (const Error& e) {
      fail(e.kind(), "item '" + ids[i] + "': " + e.what());
    }
  }
  report.pos_err_all = pos_all.mean();
  report.pos_err_lip = pos_lip.mean();
  report.vel_err_all = vel_all.mean();
  report.vel_err_lip = vel_lip.mean();
  return report;
}

EvalReport evaluate(const NetworkParams& params, const std::vector<Sample>& test,
                    const TemplateMesh& mesh, const ProjectionConfig& config) {
  require_same_topology(mesh, params.config.vertices, "checkpoint");
  std::vector<std::string> ids;
  std::vector<DisplacementSequence> preds, truths;
  for (const auto& s : test) {
    ids.push_back(s.id);
    try {
      preds.push_back(forward(params, s.features));
    } catch (const Error& e) {
      fail(e.kind(), "item '" + s.id + "': " + e.what());
    }
    truths.push_back(s.displacements);
  }
  return evaluate_sequences(mesh, ids, preds, truths, config);
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& models) {
  constexpr int kLabel = 34;
  std::string out;
  char buf[64];
  auto cell = [&](const std::string& s, int width) {
    std::snprintf(buf, sizeof buf, "%*s", width, s.c_str());
    out += buf;
  };
  std::size_t width = 12;
  for (const auto& [name, r] : models) width = std::max(width, name.size() + 2);
  cell("", -kLabel);
  for (const auto& [name, r] : models) cell(name, static_cast<int>(width));
  out += '\n';
  const std::pair<const char*, double EvalReport::*> rows[] = {
      {"position error, facial (px)", &EvalReport::pos_err_all},
      {"position error, mouth (px)", &EvalReport::pos_err_lip},
      {"velocity error, facial (px/frame)", &EvalReport::vel_err_all},
      {"velocity error, mouth (px/frame)", &EvalReport::vel_err_lip},
  };
  for (const auto& [label, member] : rows) {
    cell(label, -kLabel);
    for (const auto& [name, r] : models) {
      std::snprintf(buf, sizeof buf, "%*.3f", static_cast<int>(width), r.*member);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace lipsync
