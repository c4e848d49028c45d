#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "commands.hpp"
#include "demoe/error.hpp"

namespace demoe::cli {

namespace {

struct Entry {
  Command* cmd = nullptr;
  CLI::App* app = nullptr;
  std::unique_ptr<Options> opts;
  std::string config;
  std::string out_dir;
};

std::string default_out_dir(const std::string& sub) {
  const char* root = std::getenv("DEMOE_OUT_ROOT");
  const std::filesystem::path base = root != nullptr && *root != '\0' ? root : "demoe-out";
  return (base / sub).string();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

bool given(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Appends `--key=value` for every config-file entry not given on the command line.
void merge_config(std::vector<std::string>& args, const Options& opts) {
  const auto path = config_path(args);
  if (!path) return;
  std::ifstream in(*path);
  if (!in) throw UsageError("cannot read config file " + *path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> extra;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(*path + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!opts.known(key)) throw UsageError(*path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!given(args, key)) extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"DeMoE: all-in-one deblurring with a mixture of decoder experts"};
  app.name("demoe");
  app.require_subcommand(1);
  app.set_version_flag("--version", "demoe 0.1.0");

  const auto commands = make_commands();
  std::vector<std::unique_ptr<Entry>> entries;
  for (const auto& c : commands) {
    auto e = std::make_unique<Entry>();
    e->cmd = c.get();
    e->app = app.add_subcommand(c->name(), c->description());
    e->opts = std::make_unique<Options>(e->app);
    e->out_dir = default_out_dir(c->name());
    e->app->add_option("--config", e->config, "Flat key=value file; command-line flags take precedence");
    e->opts->add("out-dir", e->out_dir, "Output directory (default $DEMOE_OUT_ROOT/<subcommand>)");
    c->setup(*e->opts);
    entries.push_back(std::move(e));
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  Entry* active = nullptr;
  try {
    if (!args.empty()) {
      for (auto& e : entries) {
        if (e->cmd->name() == args[0]) merge_config(args, *e->opts);
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
    for (auto& e : entries) {
      if (e->app->parsed()) active = e.get();
    }
    active->cmd->check();
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return 0;
    }
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  }

  try {
    OutputDir out(active->out_dir);
    std::ofstream(out.file("effective_config.txt")) << active->opts->echo();
    const int code = active->cmd->execute(out);
    out.commit();
    return code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace demoe::cli
