#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "pp/error.hpp"
#include "pp/pipeline.hpp"

using namespace pp;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = PP_SOURCE_DIR;
const std::string kCli = PP_CLI_PATH;

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::BadConfig;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = kCli + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

PipelineConfig small_config(const fs::path& out) {
  std::vector<std::string> sets{"paths.out_dir=" + out.string()};
  return load_config(kSource / "configs" / "small.json", sets);
}

// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::vector<std::uint8_t>> tree(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = testutil::read_bytes(e.path());
  return files;
}

void run_all(const PipelineConfig& c) {
  stage::gen(c);
  stage::train_pp(c);
  stage::encode(c);
  stage::decode(c);
  stage::make_pairs(c);
  stage::train_ds(c);
  stage::downscale(c);
  stage::evaluate(c);
  stage::report(c);
}

}  // namespace

TEST_CASE("config JSON round trip and bundled defaults") {
  PipelineConfig d;
  const auto text = config_json(d);
  CHECK(config_json(parse_config(text)) == text);
  CHECK(config_json(parse_config("{}")) == text);
  CHECK(slurp(kSource / "configs" / "default.json") == text);
  CHECK(d.synth.nlat == 96);
  CHECK(d.synth.nlon == 96);
  CHECK(d.synth.nsteps == 2048);
  CHECK(d.train.w_quant == 20.0);
  CHECK(d.train.w_rec == 1.0);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("overrides and validation") {
  std::vector<std::string> sets{"train.epochs=3", "paths.out_dir=plain/dir", "paths.data_dir=\"quoted\"",
                                "lowpass.taper=brick_wall", "seed=42"};
  auto c = parse_config("{\"train\": {\"epochs\": 7, \"lr\": 0.005}}", sets);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.lr == 0.005);
  CHECK(c.out_dir == "plain/dir");
  CHECK(c.data_dir == "quoted");
  CHECK(c.lowpass.taper == Taper::BrickWall);
  CHECK(c.seed == 42);
  CHECK(c.synth_config().seed == 42);
  CHECK(c.train_config().seed == derive_seed(42, 1, 0));

  auto bad = [](std::vector<std::string> s, const std::string& text = "{}") {
    return code_of([&] { parse_config(text, s); });
  };
  CHECK(bad({"train.epochz=3"}) == Errc::BadConfig);
  CHECK(bad({"train.epochs=\"many\""}) == Errc::BadConfig);
  CHECK(bad({"train.batch_size=10"}) == Errc::BadConfig);
  CHECK(bad({"lowpass.taper=sinc"}) == Errc::BadConfig);
  CHECK(bad({"train.weight_init=zeros"}) == Errc::BadConfig);
  CHECK(bad({"noequals"}) == Errc::BadConfig);
  CHECK(bad({}, "{\"unknown\": 1}") == Errc::BadConfig);
  CHECK(bad({}, "{not json") == Errc::BadConfig);
  CHECK(bad({"eval.probe_cells=[[200, 1]]"}) == Errc::BadConfig);
  CHECK(bad({"factor=5"}) == Errc::BadConfig);
  CHECK(code_of([] { load_config(fs::path("/nonexistent/cfg.json")); }) == Errc::MissingInput);
}

TEST_CASE("exit codes and input checks") {
  CHECK(exit_code(Error(Errc::MissingInput, "")) == 2);
  CHECK(exit_code(Error(Errc::InsufficientData, "")) == 2);
  CHECK(exit_code(Error(Errc::NonFiniteLoss, "")) == 3);
  CHECK(exit_code(Error(Errc::SingularSystem, "")) == 3);
  CHECK(exit_code(Error(Errc::IoFailure, "")) == 1);
  CHECK(exit_code(Error(Errc::KindMismatch, "")) == 4);
  CHECK(exit_code(Error(Errc::BadConfig, "")) == 4);

  auto dir = testutil::temp_dir("pipe_inputs");
  CHECK(code_of([&] { require_input(dir / "missing.ppg", "PPG1"); }) == Errc::MissingInput);
  testutil::write_bytes(dir / "model.ppg", {'P', 'P', 'M', '1', 0, 0});
  CHECK(code_of([&] { require_input(dir / "model.ppg", "PPG1"); }) == Errc::MalformedHeader);
  CHECK_NOTHROW(require_input(dir / "model.ppg", "PPM1"));
}

TEST_CASE("layout resolves the data directory against the output directory") {
  PipelineConfig c;
  c.out_dir = "/tmp/x";
  Layout l(c);
  CHECK(l.tp == fs::path("/tmp/x/data/tp.ppg"));
  CHECK(l.model == fs::path("/tmp/x/model.ppm"));
  CHECK(l.report_dir == fs::path("/tmp/x/report"));
  c.data_dir = "/abs/data";
  CHECK(Layout(c).vimd == fs::path("/abs/data/vimd.ppg"));
}

TEST_CASE("full pipeline on the small config is byte-reproducible") {
  auto a = testutil::temp_dir("pipe_run_a");
  auto b = testutil::temp_dir("pipe_run_b");
  auto ca = small_config(a), cb = small_config(b);
  run_all(ca);
  run_all(cb);
  auto ta = tree(a), tb = tree(b);
  // config.json records the output directory; everything else must match.
  ta.erase("config.json");
  tb.erase("config.json");
  CHECK(ta.size() >= 20);
  CHECK(ta == tb);
  CHECK(fs::exists(a / "report" / "index.txt"));

  const auto gibbs = slurp(a / "eval" / "gibbs.csv");
  CHECK(gibbs.find(",route_a,") != std::string::npos);
  CHECK(gibbs.find(",route_b,") != std::string::npos);

  // Stages are idempotent.
  const auto before = testutil::read_bytes(a / "downscaled.ppg");
  stage::downscale(ca);
  CHECK(testutil::read_bytes(a / "downscaled.ppg") == before);
}

TEST_CASE("command-line interface") {
  auto dir = testutil::temp_dir("pipe_cli");
  const auto out = dir / "run";
  const std::string common = "--config " + (kSource / "configs" / "small.json").string() + " --out " + out.string();

  auto r = cli("config " + common + " --set train.epochs=2", dir);
  CHECK(r.code == 0);
  CHECK(parse_config(r.out).train.epochs == 2);

  r = cli("train-pp " + common, dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("tp.ppg") != std::string::npos);

  r = cli("gen " + common + " --set synth.nsteps=100", dir);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("gen ", 0) == 0);
  CHECK(r.err.find("multiple of 8") != std::string::npos);
  CHECK(fs::exists(out / "data" / "tp.ppg"));

  fs::remove(out / "data" / "vimd.ppg");
  r = cli("train-pp " + common, dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("vimd.ppg") != std::string::npos);

  r = cli("decode " + common + " --input " + (out / "data" / "tp.ppg").string(), dir);
  CHECK(r.code == 4);
  CHECK(r.err.find("KindMismatch") != std::string::npos);

  r = cli("gen " + common + " --set train.nope=1", dir);
  CHECK(r.code == 4);

  r = cli("gen " + common + " --seed 5", dir);
  CHECK(r.code == 0);
  const auto first = testutil::read_bytes(out / "data" / "tp.ppg");
  r = cli("gen " + common + " --seed 5", dir);
  CHECK(testutil::read_bytes(out / "data" / "tp.ppg") == first);

  r = cli("train-pp " + common + " --set train.epochs=1", dir);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("ks=", 0) == 0);
  CHECK(r.out.find(" mae=") != std::string::npos);
}
