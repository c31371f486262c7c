// Test double for the subprocess embedding protocol. The embedding of each
// request is the first `dim` float32 values of its pixel payload, copied
// byte-for-byte.
//
//   echo_embedder --dim 4 [--reverse] [--fail-id N] [--hang] [--bad-handshake]
//                 [--wrong-dim]
//
// --reverse buffers requests until stdin goes idle, then answers them in
// reverse order.

#include <poll.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "freqlens/codec.hpp"

namespace {

struct Options {
  int dim = 4;
  bool reverse = false;
  long long fail_id = -1;
  bool hang = false;
  bool bad_handshake = false;
  bool wrong_dim = false;
};

std::string answer(const std::string& line, const Options& opt) {
  const auto request = nlohmann::json::parse(line);
  const auto id = request.at("id").get<std::uint64_t>();
  nlohmann::ordered_json response;
  response["id"] = id;
  if (static_cast<long long>(id) == opt.fail_id) {
    response["error"] = "requested failure";
    return response.dump();
  }
  const auto bytes = freqlens::codec::base64_decode(request.at("pixels").get<std::string>());
  const std::size_t take = 4 * static_cast<std::size_t>(opt.wrong_dim ? opt.dim + 1 : opt.dim);
  std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + std::min(take, bytes.size()));
  response["embedding"] = freqlens::codec::base64_encode(prefix);
  return response.dump();
}

bool stdin_idle(int ms) {
  pollfd pfd{STDIN_FILENO, POLLIN, 0};
  return ::poll(&pfd, 1, ms) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--dim" && i + 1 < argc) opt.dim = std::stoi(argv[++i]);
    else if (a == "--reverse") opt.reverse = true;
    else if (a == "--fail-id" && i + 1 < argc) opt.fail_id = std::stoll(argv[++i]);
    else if (a == "--hang") opt.hang = true;
    else if (a == "--bad-handshake") opt.bad_handshake = true;
    else if (a == "--wrong-dim") opt.wrong_dim = true;
  }
  std::ios::sync_with_stdio(false);
  if (opt.bad_handshake) {
    std::cout << "{\"protocol\": 7, \"dim\": " << opt.dim << "}\n" << std::flush;
  } else {
    std::cout << "{\"protocol\": 1, \"dim\": " << opt.dim << "}\n" << std::flush;
  }

  std::vector<std::string> pending;
  std::string line;
  // Read raw bytes so idle detection via poll() is not defeated by iostream buffering.
  std::string buffer;
  char chunk[65536];
  while (true) {
    const ssize_t n = ::read(STDIN_FILENO, chunk, sizeof chunk);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      pending.push_back(buffer.substr(0, nl));
      buffer.erase(0, nl + 1);
    }
    if (opt.hang) continue;
    if (opt.reverse && !stdin_idle(100)) continue;
    if (opt.reverse) {
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) std::cout << answer(*it, opt) << "\n";
    } else {
      for (const auto& p : pending) std::cout << answer(p, opt) << "\n";
    }
    std::cout << std::flush;
    pending.clear();
  }
  return 0;
}
