#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "runners.hpp"

namespace fs = std::filesystem;
using qimex::cli::json;

namespace {

enum Exit { ok = 0, validation = 1, numerical = 2 };

json read_config(const std::string& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) throw qimex::ValidationError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw qimex::ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
}

void write_outputs(const fs::path& dir, const qimex::cli::Output& out)
{
  fs::create_directories(dir);
  if (out.solution) qimex::cli::write_atomic(dir / "solution.csv", qimex::cli::to_csv(*out.solution));
  if (out.bounds) qimex::cli::write_atomic(dir / "bounds.csv", qimex::cli::to_csv(*out.bounds));
  qimex::cli::write_atomic(dir / "report.json", out.report.dump(2) + "\n");
}

int fail(const fs::path& dir, int code, const std::string& type, const std::string& msg)
{
  std::cerr << "qimex: " << type << " error: " << msg << "\n";
  try {
    fs::create_directories(dir);
    json diag = {{"schema", 1},
                 {"tool", "qimex"},
                 {"version", QIMEX_VERSION},
                 {"status", "error"},
                 {"exit_code", code},
                 {"error", {{"type", type}, {"message", msg}}}};
    qimex::cli::write_atomic(dir / "report.json", diag.dump(2) + "\n");
  } catch (const std::exception&) {
  }
  return code;
}

int execute(const std::string& config_path, const fs::path& out_dir, const qimex::cli::RunContext& ctx,
            bool sweep)
{
  try {
    json cfg = read_config(config_path);
    if (sweep && !(cfg.is_object() && cfg.contains("kind") && cfg["kind"] == "epsilon-sweep"))
      throw qimex::ValidationError("sweep: config kind must be epsilon-sweep");
    auto out = qimex::cli::run_config(cfg, ctx);
    write_outputs(out_dir, out);
    return ok;
  } catch (const qimex::ValidationError& e) {
    return fail(out_dir, validation, "validation", e.what());
  } catch (const qimex::NumericalError& e) {
    return fail(out_dir, numerical, "numerical", e.what());
  } catch (const json::exception& e) {
    return fail(out_dir, validation, "validation", e.what());
  } catch (const std::exception& e) {
    return fail(out_dir, numerical, "numerical", e.what());
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"qimex: quantum IMEX experiment runner"};
  app.set_version_flag("--version", std::string(QIMEX_VERSION));
  app.require_subcommand(1);

  std::string config, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  for (const char* name : {"run", "sweep"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "run" ? "Run one experiment config"
                                                                     : "Run an epsilon-sweep config");
    sub->add_option("config", config, "JSON config file")->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Seed for random ensembles (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 1024));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? ok : validation;
  }
  qimex::cli::RunContext ctx;
  ctx.seed = seed;
  ctx.threads = threads;
  const bool sweep = app.got_subcommand("sweep");
  return execute(config, out_dir, ctx, sweep);
}
