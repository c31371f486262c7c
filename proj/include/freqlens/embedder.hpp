#ifndef FREQLENS_EMBEDDER_HPP
#define FREQLENS_EMBEDDER_HPP

// Face-embedding backends and similarity scoring. A backend stands in for the
// recognition model: the built-in reference embedder, a precomputed store on
// disk, or an external process speaking the line-delimited JSON protocol.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "freqlens/codec.hpp"
#include "freqlens/error.hpp"
#include "freqlens/spectral.hpp"

extern char** environ;

namespace freqlens {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

inline constexpr double kDegenerateNorm = 1e-12;

inline double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

/// Cosine similarity; 0 when either side is (numerically) the zero vector.
inline double similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::kInvalidInput, "embedding dimensions differ: " +
                                              std::to_string(a.dim()) + " vs " +
                                              std::to_string(b.dim()));
  }
  const double na = l2_norm(a.values);
  const double nb = l2_norm(b.values);
  if (na < kDegenerateNorm || nb < kDegenerateNorm) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

enum class BackendKind { kReference, kPrecomputed, kSubprocess };

struct BackendDescriptor {
  BackendKind kind = BackendKind::kReference;
  std::string parameter;  // store directory or command line

  friend bool operator==(const BackendDescriptor&, const BackendDescriptor&) = default;
};

/// Parses `reference`, `precomputed:<dir>` or `subprocess:<cmd>`.
inline BackendDescriptor parse_backend(const std::string& text) {
  if (text == "reference") return {BackendKind::kReference, {}};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    std::string rest = text.substr(colon + 1);
    if (rest.empty()) {
      throw Error(ErrorKind::kInvalidConfig, "backend '" + head + "' needs a parameter after ':'");
    }
    if (head == "precomputed") return {BackendKind::kPrecomputed, std::move(rest)};
    if (head == "subprocess") return {BackendKind::kSubprocess, std::move(rest)};
  }
  throw Error(ErrorKind::kInvalidConfig,
              "unknown backend '" + text +
                  "' (expected reference, precomputed:<dir> or subprocess:<cmd>)");
}

inline std::string to_string(const BackendDescriptor& d) {
  switch (d.kind) {
    case BackendKind::kReference: return "reference";
    case BackendKind::kPrecomputed: return "precomputed:" + d.parameter;
    case BackendKind::kSubprocess: return "subprocess:" + d.parameter;
  }
  return "reference";
}

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual Embedding embed(const Image& image) = 0;

  /// Order-preserving; equal elementwise to repeated embed() calls. On
  /// failure the error names the first failing index.
  virtual std::vector<Embedding> embed_batch(std::span<const Image> images) {
    std::vector<Embedding> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      try {
        out.push_back(embed(images[i]));
      } catch (const Error& e) {
        rethrow_with_context(e, "image " + std::to_string(i));
      }
    }
    return out;
  }

  virtual BackendDescriptor descriptor() const = 0;
};

inline std::vector<Embedding> batch_embed(EmbeddingBackend& backend,
                                          std::span<const Image> images) {
  return backend.embed_batch(images);
}

// ---------------------------------------------------------------------------
// Reference embedder

struct ReferenceEmbedderConfig {
  int block_size = 8;
};

/// Deterministic desk-scale stand-in for a recognition model: grayscale by
/// channel mean, block averages, mean removal, L2 normalization.
class ReferenceEmbedder final : public EmbeddingBackend {
 public:
  explicit ReferenceEmbedder(ReferenceEmbedderConfig config = {}) : config_(config) {
    if (config_.block_size < 1) {
      throw Error(ErrorKind::kInvalidConfig, "block size must be positive");
    }
  }

  Embedding embed(const Image& image) override {
    const int bs = config_.block_size;
    if (image.height() % bs != 0 || image.width() % bs != 0) {
      throw Error(ErrorKind::kInvalidInput, "block size " + std::to_string(bs) +
                                                " does not divide image " +
                                                to_string(image.extent()));
    }
    const int rows = image.height() / bs;
    const int cols = image.width() / bs;
    const int ch = image.channels();
    std::vector<double> v(static_cast<std::size_t>(rows) * cols, 0.0);
    const double scale = 1.0 / (static_cast<double>(bs) * bs * ch);
    for (int by = 0; by < rows; ++by) {
      for (int bx = 0; bx < cols; ++bx) {
        double sum = 0.0;
        for (int y = by * bs; y < (by + 1) * bs; ++y) {
          for (int x = bx * bs; x < (bx + 1) * bs; ++x) {
            for (int c = 0; c < ch; ++c) sum += image.at(y, x, c);
          }
        }
        v[static_cast<std::size_t>(by) * cols + bx] = sum * scale;
      }
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    const double norm = l2_norm(v);
    if (norm < kDegenerateNorm) {
      std::fill(v.begin(), v.end(), 0.0);
    } else {
      for (double& x : v) x /= norm;
    }
    return {std::move(v)};
  }

  BackendDescriptor descriptor() const override { return {BackendKind::kReference, {}}; }

  const ReferenceEmbedderConfig& config() const { return config_; }

 private:
  ReferenceEmbedderConfig config_;
};

// ---------------------------------------------------------------------------
// Precomputed store
//
// Layout of a store directory:
//   index.json        {"dim": D, "entries": {<image path>: {"file": ..., "hash": ...}
//                      | {"error": ...}}, "format": "f32le", "version": 1}
//   <hash>.f32        D float32 little-endian values
// where <hash> is the lowercase hex SHA-256 of "H,W,C\n" followed by the
// image's float32 little-endian pixels (row-major H x W x C).

/// Content key of an image as stored in a precomputed store.
inline std::string image_key(const Image& image) {
  const std::string header = std::to_string(image.height()) + "," +
                             std::to_string(image.width()) + "," +
                             std::to_string(image.channels()) + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const auto payload = codec::encode_f32le(image.values());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return codec::sha256_hex(bytes);
}

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

}  // namespace detail

class PrecomputedBackend final : public EmbeddingBackend {
 public:
  explicit PrecomputedBackend(std::filesystem::path directory) : directory_(std::move(directory)) {
    const auto index_path = directory_ / "index.json";
    nlohmann::json index;
    try {
      const auto bytes = detail::read_bytes(index_path);
      index = nlohmann::json::parse(bytes.begin(), bytes.end());
      dim_ = index.at("dim").get<int>();
      for (const auto& [path, entry] : index.at("entries").items()) {
        if (entry.contains("file")) {
          files_by_path_[path] = entry.at("file").get<std::string>();
        } else {
          errors_by_path_[path] = entry.value("error", std::string("unknown error"));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, "malformed store index " + index_path.string() + ": " + e.what());
    }
  }

  int dim() const { return dim_; }

  Embedding embed(const Image& image) override { return load_file(image_key(image) + ".f32"); }

  /// Looks up an embedding by the image path recorded in the index.
  Embedding embed_path(const std::string& image_path) const {
    if (auto it = files_by_path_.find(image_path); it != files_by_path_.end()) {
      return load_file(it->second);
    }
    if (auto it = errors_by_path_.find(image_path); it != errors_by_path_.end()) {
      throw Error(ErrorKind::kMissingEmbedding,
                  "store recorded an error for " + image_path + ": " + it->second);
    }
    throw Error(ErrorKind::kMissingEmbedding, "no store entry for " + image_path);
  }

  BackendDescriptor descriptor() const override {
    return {BackendKind::kPrecomputed, directory_.string()};
  }

 private:
  Embedding load_file(const std::string& name) const {
    const auto path = directory_ / name;
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorKind::kMissingEmbedding, "no stored embedding " + name);
    }
    const auto bytes = detail::read_bytes(path);
    Embedding e{codec::decode_f32le(bytes)};
    if (static_cast<int>(e.dim()) != dim_) {
      throw Error(ErrorKind::kDecode, name + " holds " + std::to_string(e.dim()) +
                                          " values, index declares " + std::to_string(dim_));
    }
    return e;
  }

  std::filesystem::path directory_;
  int dim_ = 0;
  std::map<std::string, std::string> files_by_path_;
  std::map<std::string, std::string> errors_by_path_;
};

/// Builds a precomputed store. Entries are hash-keyed; `save_index` writes the
/// path index for everything added with a path.
class PrecomputedStoreWriter {
 public:
  explicit PrecomputedStoreWriter(std::filesystem::path directory) : directory_(std::move(directory)) {
    std::filesystem::create_directories(directory_);
  }

  void add(const Image& image, const Embedding& embedding,
           const std::optional<std::string>& image_path = std::nullopt) {
    if (dim_ < 0) dim_ = static_cast<int>(embedding.dim());
    if (static_cast<int>(embedding.dim()) != dim_) {
      throw Error(ErrorKind::kInvalidInput, "store embeddings must share one dimension");
    }
    const std::string key = image_key(image);
    detail::write_bytes(directory_ / (key + ".f32"), codec::encode_f32le(embedding.values));
    if (image_path) index_[*image_path] = {{"file", key + ".f32"}, {"hash", key}};
  }

  void add_error(const std::string& image_path, const std::string& message) {
    index_[image_path] = {{"error", message}};
  }

  void save_index() const {
    const nlohmann::json index = {{"dim", std::max(dim_, 0)},
                                  {"entries", index_},
                                  {"format", "f32le"},
                                  {"version", 1}};
    const std::string text = index.dump(1) + "\n";
    detail::write_bytes(directory_ / "index.json",
                        std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

 private:
  std::filesystem::path directory_;
  int dim_ = -1;
  nlohmann::json index_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Subprocess backend
//
// The child is started through /bin/sh -c with its stdin and stdout joined to
// one end of a socket pair. It first writes {"protocol": 1, "dim": D}; each
// request line is answered by one response line carrying the same id, in any
// order.

struct SubprocessOptions {
  std::chrono::milliseconds timeout{30000};
};

inline std::string encode_request(std::uint64_t id, const Image& image) {
  nlohmann::ordered_json request;
  request["id"] = id;
  request["height"] = image.height();
  request["width"] = image.width();
  request["channels"] = image.channels();
  request["pixels"] = codec::base64_encode(codec::encode_f32le(image.values()));
  return request.dump() + "\n";
}

class SubprocessBackend final : public EmbeddingBackend {
 public:
  explicit SubprocessBackend(std::string command, SubprocessOptions options = {})
      : command_(std::move(command)), options_(options) {
    spawn();
    try {
      const auto deadline = Clock::now() + options_.timeout;
      std::string line;
      while (!pop_line(line)) {
        if (!wait_io(false, deadline)) fail("timed out waiting for handshake");
      }
      const auto hello = nlohmann::json::parse(line);
      if (hello.value("protocol", 0) != 1) fail("unsupported protocol in handshake: " + line);
      dim_ = hello.at("dim").get<int>();
      if (dim_ <= 0) fail("handshake declares non-positive dim");
    } catch (const nlohmann::json::exception& e) {
      shutdown_child();
      throw Error(ErrorKind::kBackendIo, "malformed handshake: " + std::string(e.what()));
    } catch (...) {
      shutdown_child();
      throw;
    }
  }

  SubprocessBackend(const SubprocessBackend&) = delete;
  SubprocessBackend& operator=(const SubprocessBackend&) = delete;

  ~SubprocessBackend() override { shutdown_child(); }

  int dim() const { return dim_; }

  Embedding embed(const Image& image) override {
    return embed_batch(std::span(&image, 1)).front();
  }

  std::vector<Embedding> embed_batch(std::span<const Image> images) override {
    std::lock_guard lock(mutex_);
    if (broken_) throw Error(ErrorKind::kBackendIo, "subprocess backend is no longer usable");
    if (images.empty()) return {};

    std::map<std::uint64_t, std::size_t> pending;
    std::string outgoing;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::uint64_t id = next_id_++;
      pending[id] = i;
      outgoing += encode_request(id, images[i]);
    }

    std::vector<std::optional<Embedding>> results(images.size());
    std::map<std::size_t, std::string> failures;
    std::size_t sent = 0;
    auto deadline = Clock::now() + options_.timeout;
    std::string line;
    while (!pending.empty()) {
      while (pop_line(line)) {
        handle_response(line, pending, results, failures);
        deadline = Clock::now() + options_.timeout;
      }
      if (pending.empty()) break;
      const bool want_write = sent < outgoing.size();
      if (!wait_io(want_write, deadline)) fail("timed out waiting for a response");
      if (want_write) {
        const ssize_t n = ::send(fd_, outgoing.data() + sent, outgoing.size() - sent,
                                 MSG_NOSIGNAL | MSG_DONTWAIT);
        if (n > 0) {
          sent += static_cast<std::size_t>(n);
          deadline = Clock::now() + options_.timeout;
        } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
          fail("write to embedding process failed");
        }
      }
    }
    if (!failures.empty()) {
      const auto& [index, message] = *failures.begin();
      throw Error(ErrorKind::kBackendIo, "image " + std::to_string(index) + ": " + message);
    }
    std::vector<Embedding> out;
    out.reserve(results.size());
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
  }

  BackendDescriptor descriptor() const override { return {BackendKind::kSubprocess, command_}; }

 private:
  using Clock = std::chrono::steady_clock;

  [[noreturn]] void fail(const std::string& message) {
    broken_ = true;
    throw Error(ErrorKind::kBackendIo, message + " (command: " + command_ + ")");
  }

  void spawn() {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw Error(ErrorKind::kBackendIo, "socketpair failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDOUT_FILENO);
    const char* argv[] = {"sh", "-c", command_.c_str(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr,
                               const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(sv[1]);
    if (rc != 0) {
      ::close(sv[0]);
      pid_ = -1;
      throw Error(ErrorKind::kBackendIo, "cannot start embedding process: " + command_);
    }
    fd_ = sv[0];
  }

  void shutdown_child() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
    }
    if (pid_ > 0) {
      int status = 0;
      bool exited = false;
      for (int i = 0; i < 200 && !exited; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          exited = true;
        } else {
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
      }
      if (!exited) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool pop_line(std::string& line) {
    const auto nl = buffer_.find('\n');
    if (nl == std::string::npos) return false;
    line.assign(buffer_, 0, nl);
    buffer_.erase(0, nl + 1);
    return true;
  }

  // Waits for readability (and writability when asked); drains any readable
  // bytes into the line buffer. Returns false on timeout.
  bool wait_io(bool want_write, Clock::time_point deadline) {
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) return false;
    pollfd pfd{fd_, static_cast<short>(POLLIN | (want_write ? POLLOUT : 0)), 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (rc < 0) {
      if (errno == EINTR) return true;
      fail("poll failed");
    }
    if (rc == 0) return false;
    if (pfd.revents & (POLLIN | POLLHUP | POLLERR)) {
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, MSG_DONTWAIT);
      if (n == 0) fail("embedding process closed its output");
      if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) fail("read from embedding process failed");
      if (n > 0) buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    return true;
  }

  void handle_response(const std::string& line, std::map<std::uint64_t, std::size_t>& pending,
                       std::vector<std::optional<Embedding>>& results,
                       std::map<std::size_t, std::string>& failures) {
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail("unparseable response line");
    }
    if (!response.contains("id") || !response["id"].is_number_unsigned()) {
      fail("response without a valid id");
    }
    const auto id = response["id"].get<std::uint64_t>();
    const auto it = pending.find(id);
    if (it == pending.end()) fail("response for unknown id " + std::to_string(id));
    const std::size_t index = it->second;
    pending.erase(it);
    if (response.contains("error")) {
      failures[index] = response["error"].is_string() ? response["error"].get<std::string>()
                                                      : response["error"].dump();
      return;
    }
    try {
      Embedding e{codec::decode_f32le(codec::base64_decode(response.at("embedding").get<std::string>()))};
      if (static_cast<int>(e.dim()) != dim_) {
        failures[index] = "embedding has " + std::to_string(e.dim()) + " values, expected " +
                          std::to_string(dim_);
        return;
      }
      results[index] = std::move(e);
    } catch (const nlohmann::json::exception& e) {
      failures[index] = std::string("malformed response: ") + e.what();
    } catch (const Error& e) {
      failures[index] = e.what();
    }
  }

  std::string command_;
  SubprocessOptions options_;
  pid_t pid_ = -1;
  int fd_ = -1;
  int dim_ = 0;
  std::string buffer_;
  std::uint64_t next_id_ = 0;
  bool broken_ = false;
  std::mutex mutex_;
};

inline std::unique_ptr<EmbeddingBackend> make_backend(const BackendDescriptor& descriptor,
                                                      SubprocessOptions options = {}) {
  switch (descriptor.kind) {
    case BackendKind::kReference: return std::make_unique<ReferenceEmbedder>();
    case BackendKind::kPrecomputed: return std::make_unique<PrecomputedBackend>(descriptor.parameter);
    case BackendKind::kSubprocess:
      return std::make_unique<SubprocessBackend>(descriptor.parameter, options);
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown backend kind");
}

}  // namespace freqlens

#endif  // FREQLENS_EMBEDDER_HPP
