#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "lipsync/error.hpp"
#include "lipsync/mesh.hpp"
#include "lipsync/synthdata.hpp"
#include "oracles.hpp"

using namespace lipsync;

namespace {

const char* kTetra =
    "# unit tetrahedron\n"
    "v 0 0 0\n"
    "v 1 0 0\n"
    "v 0 1 0\n"
    "v 0 0 1\n"
    "f 1 3 2\n"
    "f 1 2 4\n"
    "f 1 4 3\n"
    "f 2 3 4\n";

TemplateMesh tetra() {
  std::istringstream in(kTetra);
  return parse_obj(in, "tetra.obj");
}

std::string error_message(const std::string& obj, ErrorKind expect) {
  std::istringstream in(obj);
  try {
    parse_obj(in, "bad.obj").validate();
  } catch (const Error& e) {
    CHECK(e.kind() == expect);
    return e.what();
  }
  FAIL("no throw");
  return {};
}

DisplacementSequence random_anim(int frames, int vertices, std::uint64_t seed) {
  DisplacementSequence d;
  d.vertices = vertices;
  d.frames = oracle::random_matrix(frames, 3 * vertices, seed, 0.1).cast<float>();
  return d;
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("tetrahedron parses") {
  const auto m = tetra();
  CHECK(m.vertex_count() == 4);
  REQUIRE(m.faces.size() == 4);
  CHECK(m.faces[0] == Triangle{0, 2, 1});
  CHECK(m.vertices(3, 2) == 1.0);
  m.validate();
}

TEST_CASE("polygons are fan triangulated") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  const auto m = parse_obj(in);
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == Triangle{0, 1, 2});
  CHECK(m.faces[1] == Triangle{0, 2, 3});
}

TEST_CASE("slash and negative face indices") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nf 1/1/1 2//1 -1\n");
  const auto m = parse_obj(in);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == Triangle{0, 1, 3});
}

TEST_CASE("parse errors carry the line number") {
  const std::string out_of_range = std::string(kTetra) + "f 1 2 9\n";
  CHECK(error_message(out_of_range, ErrorKind::kFormat).find("bad.obj:10:") != std::string::npos);
  const auto msg = error_message("v 0 0 0\nv 1 zero 0\n", ErrorKind::kFormat);
  CHECK(msg.find("bad.obj:2:") != std::string::npos);
  CHECK(msg.find("zero") != std::string::npos);
}

TEST_CASE("obj and landmark round trip") {
  const auto dir = oracle::scratch_dir("mesh_rt");
  auto head = make_head(150, 3);
  save_obj(head, dir / "head.obj");
  save_landmarks(head.landmarks, dir / "head.landmarks");
  const auto back = load_obj(dir / "head.obj", dir / "head.landmarks");
  CHECK(back.faces == head.faces);
  CHECK(back.landmarks == head.landmarks);
  CHECK((back.vertices - head.vertices).cwiseAbs().maxCoeff() <= 1e-6);
  // Shortest round-trip printing makes this exact.
  CHECK((back.vertices.array() == head.vertices.array()).all());
}

TEST_CASE("landmark sidecar syntax") {
  std::istringstream in("# lips\nlip:5\nlip:2\n\n7\n");
  const auto lm = parse_landmarks(in);
  REQUIRE(lm.size() == 3);
  CHECK(lm[0] == Landmark{5, true});
  CHECK(lm[2] == Landmark{7, false});
  std::istringstream bad("lip:x\n");
  CHECK_THROWS_AS(parse_landmarks(bad), Error);

  auto m = tetra();
  m.landmarks = {{1, false}, {1, true}};
  CHECK_THROWS_AS(m.validate(), Error);
  m.landmarks = {{4, false}};
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("apply displacements") {
  const auto m = tetra();
  DisplacementSequence zero;
  zero.vertices = 4;
  zero.frames = FrameMatrix::Zero(3, 12);
  for (const auto& frame : apply_displacements(m, zero)) CHECK(frame == m.vertices);

  DisplacementSequence ones;
  ones.vertices = 4;
  ones.frames = FrameMatrix::Ones(1, 12);
  const auto shifted = apply_displacements(m, ones);
  REQUIRE(shifted.size() == 1);
  for (int v = 0; v < 4; ++v)
    for (int c = 0; c < 3; ++c) CHECK(shifted[0](v, c) == m.vertices(v, c) + 1.0);

  DisplacementSequence wrong;
  wrong.vertices = 5;
  wrong.frames = FrameMatrix::Zero(1, 15);
  try {
    apply_displacements(m, wrong);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kTopology);
  }
}

TEST_CASE("subtract then apply reproduces animated frames") {
  const auto m = make_head(60, 1);
  std::vector<Vertices> animated;
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    Vertices v = m.vertices;
    for (int i = 0; i < v.size(); ++i) v.data()[i] += 0.05 * rng.normal();
    animated.push_back(v);
  }
  const auto d = subtract_template(m, animated);
  const auto back = apply_displacements(m, d);
  for (int t = 0; t < 5; ++t) {
    const double rel = (back[t] - animated[t]).norm() / animated[t].norm();
    CHECK(rel <= 1e-5);
  }
}

TEST_CASE("LSA1 round trip and size formula") {
  const auto d = random_anim(60, 100, 2);
  const auto bytes = encode_anim(d);
  CHECK(bytes.size() == 72016u);
  const auto back = decode_anim(bytes);
  CHECK(back.vertices == 100);
  CHECK(back.fps == 60);
  CHECK((back.frames.array() == d.frames.array()).all());

  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = static_cast<int>(rng.below(50)), v = 1 + static_cast<int>(rng.below(300));
    CHECK(encode_anim(random_anim(t, v, trial)).size() == 16u + 12u * t * v);
  }
}

TEST_CASE("LSA1 errors") {
  auto bytes = encode_anim(random_anim(4, 10, 1));
  auto check_format = [](std::span<const std::uint8_t> b) {
    try {
      decode_anim(b);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
    }
  };
  check_format(std::span(bytes).first(bytes.size() - 4));
  auto extra = bytes;
  extra.push_back(0);
  check_format(extra);
  bytes[0] = 'X';
  check_format(bytes);

  try {
    require_same_topology(tetra(), 10, "anim");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kTopology);
  }
}

}  // TEST_SUITE
