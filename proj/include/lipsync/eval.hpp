#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lipsync/mesh.hpp"
#include "lipsync/model.hpp"
#include "lipsync/training.hpp"

namespace lipsync {

// Orthographic projection onto the XY plane, image convention (v grows down).
struct ProjectionConfig {
  double px_per_unit = 100.0;
  double origin_u = 0.0;
  double origin_v = 0.0;
};

// Pixel positions of L landmarks over T frames; row t = (u0, v0, u1, v1, ...).
struct Trajectories {
  Eigen::MatrixXd points;

  int frames() const { return static_cast<int>(points.rows()); }
  int landmarks() const { return static_cast<int>(points.cols() / 2); }
  double u(int t, int l) const { return points(t, 2 * l); }
  double v(int t, int l) const { return points(t, 2 * l + 1); }
};

Trajectories project_landmarks(const TemplateMesh& mesh, const DisplacementSequence& d,
                               std::span<const int> vertex_indices, const ProjectionConfig& config);
// Columns for the given landmark slots only.
Trajectories select_landmarks(const Trajectories& traj, std::span<const int> slots);

// Mean Euclidean distance over all frames and landmarks.
double positional_error(const Trajectories& pred, const Trajectories& truth);
// Mean Euclidean distance between frame-to-frame deltas, frames 2..T.
double velocity_error(const Trajectories& pred, const Trajectories& truth);

// Middle of the upper lip: the first lip-flagged landmark.
int default_lip_landmark(const TemplateMesh& mesh);

// Vertical (v) pixel curve of one lip landmark, given by vertex index.
std::string lip_trajectory_csv(const Trajectories& traj, const TemplateMesh& mesh, int landmark_vertex);
void write_lip_trajectory_csv(const Trajectories& traj, const TemplateMesh& mesh, int landmark_vertex,
                              const std::filesystem::path& path);

// Mean |v_t - v_{t-1}| of one landmark slot, and max(v) - min(v).
double mean_vertical_step(const Trajectories& traj, int slot);
double vertical_range(const Trajectories& traj, int slot);

struct SentenceMetrics {
  std::string id;
  int frames = 0;
  double pos_err_all = 0.0;
  double pos_err_lip = 0.0;
  double vel_err_all = 0.0;
  double vel_err_lip = 0.0;
};

struct EvalReport {
  double pos_err_all = 0.0;  // pixels
  double pos_err_lip = 0.0;
  double vel_err_all = 0.0;  // pixels / frame
  double vel_err_lip = 0.0;
  std::vector<SentenceMetrics> sentences;

  std::string to_json() const;
};

// Aggregates are pooled over every (frame, landmark) pair of all sentences.
EvalReport evaluate_sequences(const TemplateMesh& mesh, std::span<const std::string> ids,
                              std::span<const DisplacementSequence> predictions,
                              std::span<const DisplacementSequence> truths,
                              const ProjectionConfig& config);

// Runs inference on every sample and compares against its displacements.
EvalReport evaluate(const NetworkParams& params, const std::vector<Sample>& test,
                    const TemplateMesh& mesh, const ProjectionConfig& config);

// Four metric rows x one column per model.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& models);

}  // namespace lipsync
