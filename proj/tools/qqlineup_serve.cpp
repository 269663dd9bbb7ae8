#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "qqlineup/experiment.hpp"
#include "qqlineup/service/http.hpp"

namespace {

std::string env(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace qqlineup;
  using namespace qqlineup::service;

  CLI::App app{"Study service hosting Q-Q plot lineups"};
  std::string bind = env("QQL_BIND", "127.0.0.1:8080");
  std::string store_path = env("QQL_STORE", "qqlineup-store.jsonl");
  std::string import_path;
  app.add_option("--bind", bind, "host:port (QQL_BIND)");
  app.add_option("--store", store_path, "Record log path (QQL_STORE)");
  app.add_option("--import", import_path, "Import a private manifest from `qqlineup generate` at startup")
      ->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  ServiceConfig cfg;
  try {
    cfg.admin_token = env("QQL_ADMIN_TOKEN");
    cfg.disclosure_threshold = std::stoul(env("QQL_DISCLOSURE_THRESHOLD", "10"));
    cfg.service_seed = std::stoull(env("QQL_SERVICE_SEED", "0"));
    cfg.session_size = std::stoul(env("QQL_SESSION_SIZE", "10"));
    cfg.max_serves = std::stoul(env("QQL_MAX_SERVES", "0"));
    cfg.salt = env("QQL_SALT");
  } catch (const std::exception&) {
    std::fprintf(stderr, "error: numeric QQL_* environment variable could not be parsed\n");
    return 2;
  }
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    std::fprintf(stderr, "error: bind address must be host:port\n");
    return 2;
  }
  const std::string host = bind.substr(0, colon);
  const int port = std::atoi(bind.c_str() + colon + 1);

  try {
    StudyService svc(std::make_unique<JsonLinesStore>(store_path), cfg);
    if (!import_path.empty()) {
      const auto manifest = nlohmann::json::parse(read_text_file(import_path));
      std::size_t count = 0;
      for (const auto& rec : manifest.at("lineups")) {
        svc.import_private(rec);
        ++count;
      }
      std::printf("imported %zu lineups from %s\n", count, import_path.c_str());
    }
    if (cfg.admin_token.empty()) std::fprintf(stderr, "warning: QQL_ADMIN_TOKEN unset; admin routes disabled\n");
    httplib::Server server;
    mount(server, svc);
    std::printf("listening on %s:%d (store %s)\n", host.c_str(), port, store_path.c_str());
    std::fflush(stdout);
    if (!server.listen(host, port)) {
      std::fprintf(stderr, "error: cannot listen on %s\n", bind.c_str());
      return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
