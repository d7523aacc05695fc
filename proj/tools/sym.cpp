// sym: server and operator commands.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sym/analytics.hpp"
#include "sym/config.hpp"
#include "sym/http.hpp"
#include "sym/json.hpp"
#include "sym/service.hpp"

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) sym::fail(sym::ErrorCode::not_found, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) sym::fail(sym::ErrorCode::validation, "cannot write '" + path + "'");
  out << bytes;
}

struct Common {
  std::string config_path;
  std::string data_dir;

  sym::Config config() const {
    sym::Config c = config_path.empty() ? sym::Config{} : sym::load_config(config_path);
    if (!data_dir.empty()) c.data_dir = data_dir;
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "TOML configuration file");
  cmd->add_option("--data-dir", common.data_dir, "data directory (overrides the config)");
}

sym::Service open_service(const sym::Config& c, bool read_only) {
  sym::StoreOptions opts;
  opts.data_dir = c.data_dir;
  opts.read_only = read_only;
  return sym::Service(opts, c.service_config());
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_stats(const sym::ExperimentStats& s) {
  std::cout << "experiment " << s.experiment_id << ": " << s.sessions << " sessions, " << s.spots
            << " spots, " << s.accepted << " with an accepted word\n\n";
  if (!s.stimuli.empty()) {
    std::cout << "stimulus             n   centroid (v, a)      mean dist   sd v     sd a\n";
    std::cout << "──────────────────── ─── ──────────────────── ─────────── ──────── ────────\n";
    for (const auto& [id, d] : s.stimuli) {
      char line[256];
      std::snprintf(line, sizeof line, "%-20s %3zu (%7s, %7s)   %9s   %6s   %6s\n", id.c_str(), d.n,
                    fixed(d.centroid.valence).c_str(), fixed(d.centroid.arousal).c_str(),
                    fixed(d.mean_distance, 3).c_str(), fixed(d.sd_valence).c_str(), fixed(d.sd_arousal).c_str());
      std::cout << line;
    }
    std::cout << '\n';
  }
  std::cout << "session          Δ valence  Δ arousal\n";
  std::cout << "──────────────── ───────── ─────────\n";
  for (const auto& [id, d] : s.session_deltas) {
    char line[128];
    if (d) {
      std::snprintf(line, sizeof line, "%-16s %9d %9d\n", id.c_str(), d->valence, d->arousal);
    } else {
      std::snprintf(line, sizeof line, "%-16s %9s %9s\n", id.c_str(), "-", "-");
    }
    std::cout << line;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sym: live mood spotting server and tools"};
  app.require_subcommand(1);

  Common common;

  auto* serve = app.add_subcommand("serve", "run the HTTP server");
  add_common(serve, common);

  auto* dict = app.add_subcommand("dict", "dictionary interchange files");
  dict->require_subcommand(1);
  std::string dict_file, dict_id;
  int dict_version = 0;
  auto* dict_import = dict->add_subcommand("import", "publish a dictionary file");
  dict_import->add_option("file", dict_file, "interchange JSON")->required();
  add_common(dict_import, common);
  auto* dict_export = dict->add_subcommand("export", "write a published dictionary");
  dict_export->add_option("file", dict_file, "output path")->required();
  dict_export->add_option("--id", dict_id, "dictionary id")->required();
  dict_export->add_option("--version", dict_version, "version (default: latest)");
  add_common(dict_export, common);

  auto* update = app.add_subcommand("update", "run the position update now");
  std::string update_id;
  update->add_option("dictionary_id", update_id)->required();
  add_common(update, common);

  auto* exp = app.add_subcommand("export", "export spots as CSV");
  std::string export_experiment, export_out;
  exp->add_option("--experiment", export_experiment, "experiment id")->required();
  exp->add_option("--out", export_out, "output .csv path")->required();
  add_common(exp, common);

  auto* stats = app.add_subcommand("stats", "summary statistics for an experiment");
  std::string stats_experiment;
  bool stats_json = false;
  stats->add_option("--experiment", stats_experiment, "experiment id")->required();
  stats->add_flag("--json", stats_json, "print JSON instead of a table");
  add_common(stats, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = common.config();

    if (*serve) {
      auto service = open_service(config, false);
      httplib::Server server;
      sym::HttpOptions options;
      if (const char* token = std::getenv("SYM_ADMIN_TOKEN")) options.admin_token = token;
      sym::install_routes(server, service, options);
      sym::UpdateScheduler scheduler(service, service.config().update_interval, [](const sym::UpdateOutcome& o) {
        std::cerr << "updated " << o.dictionary_id << " to version " << o.version << '\n';
      });
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << config.listen_addr << '\n';
      if (!server.listen(config.host(), config.port())) {
        std::cerr << "error: cannot listen on " << config.listen_addr << '\n';
        return 1;
      }
      service.write_snapshot();
      return 0;
    }

    if (*dict_import) {
      auto service = open_service(config, false);
      auto d = sym::load_dictionary(sym::json::parse(read_file(dict_file)));
      auto outcome = service.publish_dictionary(std::move(d));
      std::cout << outcome.dictionary_id << " version " << outcome.version << '\n';
      return 0;
    }

    if (*dict_export) {
      auto service = open_service(config, true);
      auto doc = service.read([&](const sym::StoreState& s) {
        auto handle = dict_version > 0 ? s.dictionaries().get(dict_id, dict_version) : s.dictionaries().latest(dict_id);
        if (!handle) sym::fail(sym::ErrorCode::not_found, "unknown dictionary '" + dict_id + "'");
        return sym::dictionary_to_json(*handle);
      });
      write_file(dict_file, doc.dump(2) + "\n");
      return 0;
    }

    if (*update) {
      auto service = open_service(config, false);
      auto outcome = service.run_update(update_id);
      std::cout << outcome.dictionary_id << " version " << outcome.version
                << (outcome.changed ? " (published)" : " (no feedback, unchanged)") << '\n';
      return 0;
    }

    if (*exp) {
      auto service = open_service(config, true);
      write_file(export_out, service.export_csv(sym::ExportFilter::experiment(export_experiment)));
      return 0;
    }

    if (*stats) {
      auto service = open_service(config, true);
      auto s = service.read([&](const sym::StoreState& st) { return sym::experiment_stats(st, stats_experiment); });
      if (stats_json) {
        std::cout << sym::to_json(s).dump(2) << '\n';
      } else {
        print_stats(s);
      }
      return 0;
    }
  } catch (const sym::Error& e) {
    std::cerr << "error [" << sym::to_string(e.code()) << "]: " << e.what() << '\n';
    for (const auto& d : e.detail()) std::cerr << "  " << d << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
