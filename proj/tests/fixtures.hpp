#pragma once
// In-memory synthetic samples, for tests that do not need corpus files.

#include <string>
#include <vector>

#include "lipsync/rng.hpp"
#include "lipsync/synthdata.hpp"
#include "lipsync/training.hpp"

namespace fixtures {

struct World {
  lipsync::TemplateMesh mesh;
  lipsync::SurrogateProvider provider;
  lipsync::OracleArticulator oracle;
};

inline World make_world(int vertices = 100, std::uint64_t seed = 7) {
  World w;
  w.mesh = lipsync::make_head(vertices, seed);
  w.provider = lipsync::SurrogateProvider::from_seed(seed);
  w.oracle = lipsync::OracleArticulator::for_mesh(w.mesh, seed);
  return w;
}

inline lipsync::Sample make_sample(const World& w, const std::string& id, double seconds,
                                   std::uint64_t seed) {
  lipsync::Sample s;
  s.id = id;
  s.features = lipsync::features_from_waveform(lipsync::synth_speech(seconds, seed), w.provider);
  s.displacements = lipsync::articulate(w.oracle, s.features);
  return s;
}

inline std::vector<lipsync::Sample> make_samples(const World& w, int n, std::uint64_t seed,
                                                 double min_s = 1.0, double max_s = 3.0) {
  lipsync::Rng rng(seed);
  std::vector<lipsync::Sample> out;
  for (int i = 0; i < n; ++i) {
    const double seconds = rng.uniform(min_s, max_s);
    out.push_back(make_sample(w, "m" + std::to_string(i), seconds, lipsync::derive_seed(seed, i)));
  }
  return out;
}

}  // namespace fixtures
