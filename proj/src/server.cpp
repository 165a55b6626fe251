#include "driverchain/server.hpp"

// A burst of participants finishing together should queue, not be refused.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#define CPPHTTPLIB_THREAD_POOL_COUNT 16

#include <httplib.h>

#include <fmt/format.h>

#include "driverchain/errors.hpp"
#include "driverchain/ingestion.hpp"

namespace driverchain {

namespace fs = std::filesystem;

SessionLog::SessionLog(const fs::path& dir) : path_(dir / "sessions.jsonl") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create session directory '{}': {}", dir.string(), ec.message()));
  {
    std::ifstream existing(path_);
    std::string line;
    while (std::getline(existing, line)) {
      if (!line.empty()) ++lines_;
    }
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw IoError(fmt::format("cannot open '{}' for appending", path_.string()));
}

std::string SessionLog::append(InteractionTrace trace) {
  std::lock_guard lock(mutex_);
  const auto id = fmt::format("s{:06d}", lines_ + 1);
  trace.profile.id = id;
  out_ << to_json(trace).dump() << '\n';
  out_.flush();
  if (!out_) throw IoError(fmt::format("write to '{}' failed", path_.string()));
  ++lines_;
  return id;
}

std::size_t SessionLog::size() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>Scenario runner</title></head>"
    "<body><p>Scenario runner bundle not installed. Start the server with --static &lt;dir&gt;.</p></body></html>";

nlohmann::json error_body(const std::vector<FieldError>& errors) {
  auto list = nlohmann::json::array();
  for (const auto& e : errors) list.push_back({{"field", e.field}, {"reason", e.reason}});
  return {{"errors", list}};
}

}  // namespace

CollectionServer::CollectionServer(ScenarioConfig config, const fs::path& session_dir,
                                   std::optional<fs::path> static_dir)
    : config_(std::move(config)), log_(session_dir), http_(std::make_unique<httplib::Server>()) {
  http_->Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(config_.document().dump(), "application/json");
  });
  http_->Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto response = submit(req.body);
    res.status = response.status;
    res.set_content(response.body.dump(), "application/json");
  });
  if (static_dir && fs::is_directory(*static_dir)) {
    http_->set_mount_point("/", static_dir->string());
  } else {
    http_->Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
    });
  }
}

CollectionServer::~CollectionServer() { stop(); }

SubmitResponse CollectionServer::submit(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return {422, error_body({{"$", fmt::format("malformed JSON: {}", e.what())}})};
  }
  // The server owns participant ids; a placeholder satisfies validation.
  if (doc.is_object() && doc.contains("profile") && doc["profile"].is_object()) doc["profile"]["id"] = "pending";
  auto decoded = decode_trace(doc, config_);
  if (!decoded.ok()) return {422, error_body(decoded.errors)};
  try {
    const auto id = log_.append(std::move(*decoded.trace));
    return {201, {{"id", id}}};
  } catch (const IoError& e) {
    return {500, {{"errors", {{{"field", "$"}, {"reason", e.what()}}}}}};
  }
}

int CollectionServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = http_->bind_to_any_port(host);
    if (bound < 0) throw IoError(fmt::format("cannot bind {}", host));
    return bound;
  }
  if (!http_->bind_to_port(host, port)) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void CollectionServer::listen() { http_->listen_after_bind(); }

void CollectionServer::stop() {
  if (http_) http_->stop();
}

}  // namespace driverchain
