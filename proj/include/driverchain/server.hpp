#pragma once

// Collection backend for the scenario runner.
//
//   GET  /api/config    scenario config document
//   POST /api/sessions  one trace (choice ids; LoA is coded here) -> 201 {"id"} or 422 {"errors"}
//   GET  /              static UI bundle, when a directory is given
//
// Sessions are append-only. All writes to sessions.jsonl go through one mutex-guarded writer,
// so concurrent posts never interleave partial lines.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "driverchain/core_types.hpp"

namespace httplib {
class Server;
}

namespace driverchain {

class SessionLog {
 public:
  /// Creates the directory if needed and opens sessions.jsonl for appending.
  /// Throws IoError when the directory is not writable.
  explicit SessionLog(const std::filesystem::path& dir);

  /// Assigns the next id, stores it as profile.id, appends one line and flushes.
  std::string append(InteractionTrace trace);

  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::size_t lines_ = 0;
};

struct SubmitResponse {
  int status = 201;
  nlohmann::json body;
};

class CollectionServer {
 public:
  CollectionServer(ScenarioConfig config, const std::filesystem::path& session_dir,
                   std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~CollectionServer();

  CollectionServer(const CollectionServer&) = delete;
  CollectionServer& operator=(const CollectionServer&) = delete;

  /// Validation and storage without HTTP.
  SubmitResponse submit(const std::string& body);

  /// Returns the bound port; 0 requests an ephemeral port. Throws IoError on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

  const SessionLog& log() const noexcept { return log_; }

 private:
  ScenarioConfig config_;
  SessionLog log_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace driverchain
