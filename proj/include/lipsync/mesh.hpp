#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lipsync/features.hpp"

namespace lipsync {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

struct Landmark {
  int index = 0;  // 0-based vertex index
  bool lip = false;

  bool operator==(const Landmark&) const = default;
};

// The neutral "zero pose" head. All animated frames share its topology.
struct TemplateMesh {
  Vertices vertices;
  std::vector<Triangle> faces;
  std::vector<Landmark> landmarks;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  std::vector<int> landmark_indices() const;
  std::vector<int> lip_landmark_indices() const;
  // Positions within `landmarks` of the lip-flagged entries.
  std::vector<int> lip_landmark_slots() const;

  // Throws kTopology on out-of-range or duplicate indices, or V < 4.
  void validate() const;
};

// Per-frame vertex offsets from the template, frames x (3 * vertices).
struct DisplacementSequence {
  FrameMatrix frames;
  int vertices = 0;
  int fps = kVideoFps;

  int frame_count() const { return static_cast<int>(frames.rows()); }
};

TemplateMesh parse_obj(std::istream& in, const std::string& source = "<stream>");
// Polygons are fan-triangulated. Landmarks come from the optional sidecar.
TemplateMesh load_obj(const std::filesystem::path& path,
                      const std::optional<std::filesystem::path>& landmarks = std::nullopt);
void save_obj(const TemplateMesh& mesh, const std::filesystem::path& path);
void save_obj(const Vertices& vertices, std::span<const Triangle> faces,
              const std::filesystem::path& path);

// One 0-based index per line; lip landmarks are written "lip:<index>".
std::vector<Landmark> parse_landmarks(std::istream& in, const std::string& source = "<stream>");
std::vector<Landmark> load_landmarks(const std::filesystem::path& path);
void save_landmarks(std::span<const Landmark> landmarks, const std::filesystem::path& path);

std::vector<Vertices> apply_displacements(const TemplateMesh& mesh, const DisplacementSequence& d);
// Ground truth construction: animated frames minus the template.
DisplacementSequence subtract_template(const TemplateMesh& mesh, std::span<const Vertices> animated,
                                       int fps = kVideoFps);

// "LSA1" | u32 frames | u32 vertices | u32 fps | f32 payload (LE, row-major)
std::vector<std::uint8_t> encode_anim(const DisplacementSequence& d);
DisplacementSequence decode_anim(std::span<const std::uint8_t> bytes,
                                 const std::string& source = "<memory>");
void save_anim(const DisplacementSequence& d, const std::filesystem::path& path);
DisplacementSequence load_anim(const std::filesystem::path& path);

void require_same_topology(const TemplateMesh& mesh, int vertices, const std::string& what);

}  // namespace lipsync
