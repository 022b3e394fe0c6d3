#include "lipsync/mesh.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "lipsync/error.hpp"

namespace lipsync {
namespace {

constexpr std::string_view kAnimMagic = "LSA1";
constexpr std::size_t kAnimHeaderBytes = 16;

[[noreturn]] void parse_error(const std::string& source, int line, const std::string& what) {
  fail(ErrorKind::kFormat, source + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_int(std::string_view s, long& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<int> TemplateMesh::landmark_indices() const {
  std::vector<int> out;
  out.reserve(landmarks.size());
  for (const auto& lm : landmarks) out.push_back(lm.index);
  return out;
}

std::vector<int> TemplateMesh::lip_landmark_indices() const {
  std::vector<int> out;
  for (const auto& lm : landmarks) {
    if (lm.lip) out.push_back(lm.index);
  }
  return out;
}

std::vector<int> TemplateMesh::lip_landmark_slots() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    if (landmarks[i].lip) out.push_back(static_cast<int>(i));
  }
  return out;
}

void TemplateMesh::validate() const {
  const int v = vertex_count();
  if (v < 4) fail(ErrorKind::kTopology, "mesh has " + std::to_string(v) + " vertices (need >= 4)");
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= v) {
        fail(ErrorKind::kTopology, "face " + std::to_string(f) + " references vertex " +
                                       std::to_string(idx) + " of " + std::to_string(v));
      }
    }
  }
  std::set<int> seen;
  for (const auto& lm : landmarks) {
    if (lm.index < 0 || lm.index >= v) {
      fail(ErrorKind::kTopology, "landmark index " + std::to_string(lm.index) + " out of range");
    }
    if (!seen.insert(lm.index).second) {
      fail(ErrorKind::kTopology, "duplicate landmark index " + std::to_string(lm.index));
    }
  }
}

TemplateMesh parse_obj(std::istream& in, const std::string& source) {
  std::vector<std::array<double, 3>> verts;
  std::vector<std::vector<long>> polygons;
  std::vector<int> polygon_lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto tokens = split_ws(std::string_view(line).substr(0, hash));
    if (tokens.empty()) continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) parse_error(source, line_no, "vertex needs 3 coordinates");
      std::array<double, 3> p{};
      for (int k = 0; k < 3; ++k) {
        if (!parse_double(tokens[k + 1], p[k])) {
          parse_error(source, line_no, "non-numeric vertex coordinate '" + std::string(tokens[k + 1]) + "'");
        }
      }
      verts.push_back(p);
    } else if (tokens[0] == "f") {
      if (tokens.size() < 4) parse_error(source, line_no, "face needs at least 3 vertices");
      std::vector<long> poly;
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        const auto ref = tokens[k].substr(0, tokens[k].find('/'));
        long idx = 0;
        if (!parse_int(ref, idx) || idx == 0) {
          parse_error(source, line_no, "bad face index '" + std::string(tokens[k]) + "'");
        }
        // Negative indices are relative to the vertices read so far.
        const long resolved = idx > 0 ? idx - 1 : static_cast<long>(verts.size()) + idx;
        poly.push_back(resolved);
      }
      polygons.push_back(std::move(poly));
      polygon_lines.push_back(line_no);
    }
  }

  TemplateMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    for (int k = 0; k < 3; ++k) mesh.vertices(static_cast<Eigen::Index>(i), k) = verts[i][k];
  }
  const long v = static_cast<long>(verts.size());
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    const auto& poly = polygons[p];
    for (long idx : poly) {
      if (idx < 0 || idx >= v) {
        parse_error(source, polygon_lines[p],
                    "face index " + std::to_string(idx + 1) + " out of range (" +
                        std::to_string(v) + " vertices)");
      }
    }
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      mesh.faces.push_back({static_cast<int>(poly[0]), static_cast<int>(poly[k]),
                            static_cast<int>(poly[k + 1])});
    }
  }
  return mesh;
}

TemplateMesh load_obj(const std::filesystem::path& path,
                      const std::optional<std::filesystem::path>& landmarks) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  TemplateMesh mesh = parse_obj(in, path.string());
  if (landmarks) mesh.landmarks = load_landmarks(*landmarks);
  mesh.validate();
  return mesh;
}

void save_obj(const Vertices& vertices, std::span<const Triangle> faces,
              const std::filesystem::path& path) {
  std::string text;
  text.reserve(static_cast<std::size_t>(vertices.rows()) * 48 + faces.size() * 24);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    text += "v";
    for (int k = 0; k < 3; ++k) {
      text += ' ';
      append_double(text, vertices(i, k));
    }
    text += '\n';
  }
  for (const auto& f : faces) {
    text += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
            std::to_string(f[2] + 1) + '\n';
  }
  auto out = open_for_write(path);
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

void save_obj(const TemplateMesh& mesh, const std::filesystem::path& path) {
  save_obj(mesh.vertices, mesh.faces, path);
}

std::vector<Landmark> parse_landmarks(std::istream& in, const std::string& source) {
  std::vector<Landmark> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    std::string_view tok = tokens[0];
    Landmark lm;
    if (tok.starts_with("lip:")) {
      lm.lip = true;
      tok.remove_prefix(4);
    }
    long idx = 0;
    if (!parse_int(tok, idx) || idx < 0) {
      parse_error(source, line_no, "bad landmark index '" + std::string(tokens[0]) + "'");
    }
    lm.index = static_cast<int>(idx);
    out.push_back(lm);
  }
  return out;
}

std::vector<Landmark> load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return parse_landmarks(in, path.string());
}

void save_landmarks(std::span<const Landmark> landmarks, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const auto& lm : landmarks) out << (lm.lip ? "lip:" : "") << lm.index << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

void require_same_topology(const TemplateMesh& mesh, int vertices, const std::string& what) {
  if (mesh.vertex_count() != vertices) {
    fail(ErrorKind::kTopology, what + " has " + std::to_string(vertices) +
                                   " vertices but the template has " +
                                   std::to_string(mesh.vertex_count()));
  }
}

std::vector<Vertices> apply_displacements(const TemplateMesh& mesh, const DisplacementSequence& d) {
  require_same_topology(mesh, d.vertices, "displacement sequence");
  if (d.frames.cols() != 3 * d.vertices) {
    fail(ErrorKind::kShape, "displacement frames have " + std::to_string(d.frames.cols()) +
                                " columns, expected " + std::to_string(3 * d.vertices));
  }
  std::vector<Vertices> out;
  out.reserve(static_cast<std::size_t>(d.frame_count()));
  for (int t = 0; t < d.frame_count(); ++t) {
    const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>> offsets(
        d.frames.row(t).data(), d.vertices, 3);
    out.emplace_back(mesh.vertices + offsets.cast<double>());
  }
  return out;
}

DisplacementSequence subtract_template(const TemplateMesh& mesh, std::span<const Vertices> animated,
                                       int fps) {
  DisplacementSequence d;
  d.vertices = mesh.vertex_count();
  d.fps = fps;
  d.frames.resize(static_cast<Eigen::Index>(animated.size()), 3 * d.vertices);
  for (std::size_t t = 0; t < animated.size(); ++t) {
    require_same_topology(mesh, static_cast<int>(animated[t].rows()),
                          "animated frame " + std::to_string(t));
    const Vertices delta = animated[t] - mesh.vertices;
    d.frames.row(static_cast<Eigen::Index>(t)) =
        Eigen::Map<const Eigen::RowVectorXd>(delta.data(), 3 * d.vertices).cast<float>();
  }
  return d;
}

std::vector<std::uint8_t> encode_anim(const DisplacementSequence& d) {
  detail::ByteWriter out;
  out.buffer().reserve(kAnimHeaderBytes + static_cast<std::size_t>(d.frames.size()) * 4);
  out.bytes(kAnimMagic);
  out.u32(static_cast<std::uint32_t>(d.frame_count()));
  out.u32(static_cast<std::uint32_t>(d.vertices));
  out.u32(static_cast<std::uint32_t>(d.fps));
  for (Eigen::Index i = 0; i < d.frames.size(); ++i) out.f32(d.frames.data()[i]);
  return std::move(out.buffer());
}

DisplacementSequence decode_anim(std::span<const std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(4, "magic") != kAnimMagic) in.error("bad magic (expected LSA1)");
  const std::uint32_t frames = in.u32("frame count");
  const std::uint32_t vertices = in.u32("vertex count");
  const std::uint32_t fps = in.u32("fps");
  if (fps == 0) in.error("zero fps");
  const std::uint64_t payload = static_cast<std::uint64_t>(frames) * vertices * 12;
  if (payload > (1ULL << 36)) in.error("dimension overflow");
  in.need(payload, "payload");
  if (in.remaining() != payload) in.error("shape mismatch: trailing bytes after payload");
  DisplacementSequence d;
  d.vertices = static_cast<int>(vertices);
  d.fps = static_cast<int>(fps);
  d.frames.resize(frames, 3 * static_cast<Eigen::Index>(vertices));
  for (Eigen::Index i = 0; i < d.frames.size(); ++i) d.frames.data()[i] = in.f32("payload");
  return d;
}

void save_anim(const DisplacementSequence& d, const std::filesystem::path& path) {
  detail::write_file(path, encode_anim(d));
}

DisplacementSequence load_anim(const std::filesystem::path& path) {
  return decode_anim(detail::read_file(path), path.string());
}

}  // namespace lipsync
