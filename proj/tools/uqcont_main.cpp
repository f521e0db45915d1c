#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uqcont/harness/commands.hpp"

int main(int argc, char** argv) {
  using namespace uqcont::harness;

  CLI::App app{"Margins of forced response curves under bounded parametric uncertainty"};
  std::string command;
  std::string config_path;
  std::string preset;
  std::string out_dir;
  int threads = 0;
  std::vector<double> seed_omegas;

  app.add_option("command", command, "frc | expand | propagate | margins | grid-validate | isola-scan | natfreq")
      ->required()
      ->check(CLI::IsMember(command_names()));
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "run a named preset with default settings")->excludes(config_opt);
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--threads", threads, "worker threads for oracle samples and seeds")->check(CLI::PositiveNumber);
  app.add_option("--seed-omegas", seed_omegas, "seed frequencies (overrides seed_omegas)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  RunConfig config;
  try {
    if (!config_path.empty()) {
      config = load_config(config_path);
    } else if (!preset.empty()) {
      config = parse_config(nlohmann::json{{"preset", preset}});
    } else {
      std::cerr << "error: --config or --preset is required\n";
      return kConfigError;
    }
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (threads > 0) config.threads = threads;
    if (!seed_omegas.empty()) {
      nlohmann::json doc = to_json(config);
      doc["seed_omegas"] = seed_omegas;
      doc["output_dir"] = config.output_dir;
      doc["threads"] = config.threads;
      config = parse_config(doc);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const auto result = run_command(command, config, std::cout);
  if (!result.run_dir.empty()) std::cout << "wrote " << result.run_dir.string() << "\n";
  return result.exit_code;
}
