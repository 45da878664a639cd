#include <iostream>

#include "CLI11.hpp"
#include "stochdom/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stochastic matrix cocycles: exponents, dominated splittings, perturbations."};
  std::string config;
  stochdom::Overrides o;
  std::uint64_t seed = 0;
  std::string out, format;
  std::size_t threads = 1;
  app.add_option("--config", config, "Run config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  auto* out_opt = app.add_option("--out", out, "Directory for report files; stdout if omitted");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* format_opt = app.add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << stochdom::error_json("validation", "invalid_arguments", e.what()) << "\n";
    return 2;
  }
  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out = out;
  if (*threads_opt) o.threads = threads;
  if (*format_opt) o.format = format;
  return stochdom::execute(config, o, std::cout, std::cerr);
}
