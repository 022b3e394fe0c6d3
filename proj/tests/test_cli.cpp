#include <doctest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lipsync/cli.hpp"
#include "lipsync/eval.hpp"
#include "lipsync/synthdata.hpp"
#include "oracles.hpp"

using namespace lipsync;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lipsync");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// Small corpus shared by the tests below.
const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    auto d = oracle::scratch_dir("cli_corpus");
    const int rc = run_cli({"gen-corpus", "--out", d.string(), "--sentences", "6", "--vertices", "40",
                        "--min-duration", "0.4", "--max-duration", "0.8", "--seed", "7"});
    REQUIRE(rc == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"frobnicate"}) == 1);
  CHECK(run_cli({"infer", "--no-such-flag"}) == 1);
  CHECK(run_cli({"infer"}) == 1);
  CHECK(run_cli({"--help"}) == 0);
  const auto m = (corpus_dir() / "manifest.jsonl").string();
  CHECK(run_cli({"train", "--manifest", m, "--out", "/tmp/x.lsn1", "--epochs", "0"}) == 1);
  CHECK(run_cli({"train", "--manifest", m, "--out", "/tmp/x.lsn1", "--arch", "mlp"}) == 1);
  CHECK(run_cli({"features", "--wav", (corpus_dir() / "s0000.wav").string(), "--out", "/tmp/f.lsf1",
             "--kind", "spectrogram"}) == 1);
}

TEST_CASE("data errors exit 2") {
  const auto dir = oracle::scratch_dir("cli_bad");
  std::ofstream(dir / "junk.lsn1") << "LSN1 not really";
  CHECK(run_cli({"infer", "--checkpoint", (dir / "junk.lsn1").string(), "--wav",
             (corpus_dir() / "s0000.wav").string(), "--out", (dir / "o.lsa1").string()}) == 2);
  CHECK(run_cli({"eval", "--manifest", (dir / "missing.jsonl").string(), "--self-test"}) == 2);
}

TEST_CASE("train, infer, eval, traj round trip") {
  const auto dir = oracle::scratch_dir("cli_pipeline");
  const auto m = (corpus_dir() / "manifest.jsonl").string();
  std::ofstream(dir / "train.cfg") << "# two epochs unless overridden\nepochs = 2\nlr = 0.001\n";

  REQUIRE(run_cli({"train", "--manifest", m, "--out", (dir / "a.lsn1").string(), "--config",
               (dir / "train.cfg").string(), "--metrics", (dir / "a.csv").string()}) == 0);
  CHECK(count_lines(slurp(dir / "a.csv")) == 1 + 2 * 2);
  // flags beat the config file
  REQUIRE(run_cli({"train", "--manifest", m, "--out", (dir / "b.lsn1").string(), "--config",
               (dir / "train.cfg").string(), "--epochs", "1", "--metrics", (dir / "b.csv").string(),
               "--best-out", (dir / "b_best.lsn1").string(), "--arch", "lstm"}) == 0);
  CHECK(count_lines(slurp(dir / "b.csv")) == 1 + 2);
  CHECK(fs::exists(dir / "b_best.lsn1"));
  CHECK(load_checkpoint(dir / "b.lsn1").convs.empty());

  save_wav(synth_speech(2.0, 11), dir / "clip.wav");
  REQUIRE(run_cli({"infer", "--checkpoint", (dir / "a.lsn1").string(), "--wav", (dir / "clip.wav").string(),
               "--out", (dir / "clip.lsa1").string()}) == 0);
  const auto anim = load_anim(dir / "clip.lsa1");
  CHECK(anim.frame_count() == 120);
  CHECK(anim.vertices == 40);

  REQUIRE(run_cli({"features", "--wav", (dir / "clip.wav").string(), "--out", (dir / "clip.lsf1").string()}) == 0);
  REQUIRE(run_cli({"infer", "--checkpoint", (dir / "a.lsn1").string(), "--features",
               (dir / "clip.lsf1").string(), "--out", (dir / "clip2.lsa1").string()}) == 0);
  CHECK(slurp(dir / "clip.lsa1") == slurp(dir / "clip2.lsa1"));

  REQUIRE(run_cli({"eval", "--manifest", m, "--checkpoint", (dir / "a.lsn1").string(), "--out",
               (dir / "report.json").string()}) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report.at("pos_err_all").get<double>() > 0.0);

  REQUIRE(run_cli({"traj", "--anim", (dir / "clip.lsa1").string(), "--template",
               (corpus_dir() / "head.obj").string(), "--landmarks", (corpus_dir() / "head.landmarks").string(),
               "--out", (dir / "lip.csv").string()}) == 0);
  const auto csv = slurp(dir / "lip.csv");
  CHECK(csv.starts_with("frame,v_pixels\n"));
  CHECK(count_lines(csv) == 121);
}

TEST_CASE("eval self-test reports zeros") {
  const auto out = oracle::scratch_dir("cli_self") / "r.json";
  REQUIRE(run_cli({"eval", "--manifest", (corpus_dir() / "manifest.jsonl").string(), "--self-test", "--out",
               out.string()}) == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  for (const char* k : {"pos_err_all", "pos_err_lip", "vel_err_all", "vel_err_lip"}) CHECK(j.at(k).get<double>() == 0.0);
}

TEST_CASE("export-obj-seq") {
  const auto dir = oracle::scratch_dir("cli_export");
  const auto head = load_obj(corpus_dir() / "head.obj", corpus_dir() / "head.landmarks");
  save_checkpoint(zero_params<double>(NetworkConfig::standard(40)), dir / "zero.lsn1");
  save_wav(synth_speech(1.0, 2), dir / "one.wav");
  REQUIRE(run_cli({"export-obj-seq", "--checkpoint", (dir / "zero.lsn1").string(), "--wav",
               (dir / "one.wav").string(), "--template", (corpus_dir() / "head.obj").string(), "--out",
               (dir / "frames").string()}) == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "frames")) {
    ++files;
    const auto frame = load_obj(e.path());
    CHECK((frame.vertices.array() == head.vertices.array()).all());
    CHECK(frame.faces == head.faces);
  }
  CHECK(files == 60);
  CHECK(fs::exists(dir / "frames" / "frame_00059.obj"));

  save_obj(make_head(41, 1), dir / "other.obj");
  CHECK(run_cli({"export-obj-seq", "--checkpoint", (dir / "zero.lsn1").string(), "--wav", (dir / "one.wav").string(),
             "--template", (dir / "other.obj").string(), "--out", (dir / "bad").string()}) == 2);
}

TEST_CASE("seeded commands are reproducible") {
  const auto a = oracle::scratch_dir("cli_seed_a"), b = oracle::scratch_dir("cli_seed_b");
  for (const auto& d : {a, b})
    REQUIRE(run_cli({"gen-corpus", "--out", d.string(), "--sentences", "3", "--vertices", "30", "--min-duration",
                 "0.3", "--max-duration", "0.5", "--seed", "3"}) == 0);
  for (const auto& e : fs::directory_iterator(a)) CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
}

}  // TEST_SUITE
