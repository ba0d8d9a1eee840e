// Pipeline driver: gen, train-pp, encode, decode, make-pairs, train-ds,
// downscale, evaluate, report.

#include <fmt/core.h>

#include <CLI11.hpp>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pp/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string input;
};

pp::PipelineConfig resolve_config(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  if (!c.out.empty()) overrides.push_back("paths.out_dir=" + nlohmann::json(c.out).dump());
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  return pp::load_config(c.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(c.config), overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-precipitation pipeline"};
  app.require_subcommand(1);
  Common common;

  using Stage = std::function<std::string(const pp::PipelineConfig&, const Common&)>;
  auto add = [&](const std::string& name, const std::string& help, Stage stage, bool takes_input) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--set", common.sets, "Override a config key (dotted.key=value), repeatable");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Global seed");
    if (takes_input) sub->add_option("--input", common.input, "Input series (default: the stage's usual input)");
    sub->callback([&common, stage, name] {
      int code = 0;
      try {
        const pp::PipelineConfig config = resolve_config(common);
        fmt::print("{}\n", stage(config, common));
        std::fflush(stdout);
      } catch (const pp::Error& e) {
        fmt::print(stderr, "[pp] {} failed: {}\n", name, e.what());
        code = pp::exit_code(e);
      } catch (const std::exception& e) {
        fmt::print(stderr, "[pp] {} failed: {}\n", name, e.what());
        code = 1;
      }
      if (code != 0) throw CLI::RuntimeError(code);
    });
  };

  auto input_of = [](const Common& c) {
    return c.input.empty() ? std::nullopt : std::optional<std::filesystem::path>(c.input);
  };
  add("gen", "Generate synthetic TP and VIMD series", [](auto& cfg, auto&) { return pp::stage::gen(cfg); }, false);
  add("train-pp", "Train the pseudo-precipitation encoder/decoder",
      [](auto& cfg, auto&) { return pp::stage::train_pp(cfg); }, false);
  add("encode", "Encode TP and VIMD into PP", [](auto& cfg, auto&) { return pp::stage::encode(cfg); }, false);
  add("decode", "Decode a PP series back to TP",
      [input_of](auto& cfg, auto& c) { return pp::stage::decode(cfg, input_of(c)); }, true);
  add("make-pairs", "Build high/low resolution training pairs",
      [input_of](auto& cfg, auto& c) { return pp::stage::make_pairs(cfg, input_of(c)); }, true);
  add("train-ds", "Fit the linear downscaler on the pairs",
      [](auto& cfg, auto&) { return pp::stage::train_ds(cfg); }, false);
  add("downscale", "Apply the downscaler to a low-resolution series",
      [input_of](auto& cfg, auto& c) { return pp::stage::downscale(cfg, input_of(c)); }, true);
  add("evaluate", "Compare the TP and PP routes and write metric tables",
      [](auto& cfg, auto&) { return pp::stage::evaluate(cfg); }, false);
  add("report", "Render the metric tables as CSV and SVG",
      [](auto& cfg, auto&) { return pp::stage::report(cfg); }, false);

  auto* dump = app.add_subcommand("config", "Print the resolved configuration as JSON");
  dump->add_option("--config", common.config, "JSON config file");
  dump->add_option("--set", common.sets, "Override a config key (dotted.key=value), repeatable");
  dump->add_option("--out", common.out, "Output directory");
  dump->add_option("--seed", common.seed, "Global seed");
  dump->callback([&common] {
    try {
      fmt::print("{}", pp::config_json(resolve_config(common)));
    } catch (const pp::Error& e) {
      fmt::print(stderr, "[pp] config failed: {}\n", e.what());
      throw CLI::RuntimeError(pp::exit_code(e));
    }
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
