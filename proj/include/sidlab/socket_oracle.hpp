// Copyright 2026 The sidlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Loopback TCP transport for the black-box oracle. Requests are raw
// MELSPEC1 blocks; responses are a u32 count followed by that many f32
// little-endian probabilities. A count of 0xFFFFFFFF signals budget
// exhaustion, followed by the u64 query count.

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include "sidlab/mel.hpp"
#include "sidlab/substitute.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

namespace detail {

constexpr std::uint32_t kBudgetSentinel = 0xFFFFFFFFu;

inline void write_full(int fd, const void* data, std::size_t len) {
  const char* p = static_cast<const char*>(data);
  while (len > 0) {
    const ssize_t n = ::send(fd, p, len, 0);
    if (n <= 0) throw IoError("socket write failed");
    p += n;
    len -= static_cast<std::size_t>(n);
  }
}

// Returns false on clean EOF before the first byte.
inline bool read_full(int fd, void* out, std::size_t len) {
  char* p = static_cast<char*>(out);
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, p + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw IoError("socket closed mid-message");
    }
    if (n < 0) throw IoError("socket read failed");
    got += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

// Serves one oracle on a fresh loopback port until stopped.
class OracleServer {
 public:
  explicit OracleServer(BlackBoxOracle& oracle) : oracle_(oracle) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("OracleServer: cannot create socket");
    const int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) < 0 ||
        ::listen(listen_fd_, 4) < 0) {
      ::close(listen_fd_);
      throw IoError("OracleServer: cannot bind loopback port");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;
  ~OracleServer() { stop(); }

  std::uint16_t port() const { return port_; }

  void stop() {
    if (listen_fd_ < 0) return;
    stopping_.store(true);
    ::shutdown(listen_fd_, SHUT_RDWR);  // wakes the blocked accept
    const int c = conn_fd_.load();
    if (c >= 0) ::shutdown(c, SHUT_RDWR);  // wakes a blocked recv
    if (thread_.joinable()) thread_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
  }

 private:
  void serve() {
    while (true) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      if (stopping_.load()) {
        ::close(fd);
        return;
      }
      conn_fd_.store(fd);
      try {
        handle(fd);
      } catch (...) {
        // A broken or malformed client only loses its own connection.
      }
      conn_fd_.store(-1);
      ::close(fd);
    }
  }

  void handle(int fd) {
    while (true) {
      char header[24];
      if (!detail::read_full(fd, header, sizeof(header))) return;
      if (std::memcmp(header, "MELSPEC1", 8) != 0)
        throw IoError("oracle request with bad magic");
      std::uint32_t frames, n_mels;
      std::memcpy(&frames, header + 8, 4);
      std::memcpy(&n_mels, header + 12, 4);
      if (frames == 0 || n_mels == 0 || frames > (1u << 20) ||
          n_mels > (1u << 20) ||
          static_cast<std::uint64_t>(frames) * n_mels > (1u << 26))
        throw IoError("oracle request with implausible mel shape");
      std::string payload(static_cast<std::size_t>(4) * frames * n_mels,
                          '\0');
      if (!detail::read_full(fd, payload.data(), payload.size()))
        throw IoError("oracle request truncated");
      const MelRecord rec = parse_melspec(
          std::string(header, sizeof(header)) + payload, "oracle request");
      try {
        const ProbVector p = oracle_.query(rec.mel);
        const auto n = static_cast<std::uint32_t>(p.size());
        detail::write_full(fd, &n, 4);
        std::vector<float> probs(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
          probs[i] = static_cast<float>(p[i]);
        detail::write_full(fd, probs.data(), 4 * probs.size());
      } catch (const BudgetExhaustedError& e) {
        const std::uint32_t sentinel = detail::kBudgetSentinel;
        detail::write_full(fd, &sentinel, 4);
        const std::uint64_t made = e.queries_made;
        detail::write_full(fd, &made, 8);
      }
    }
  }

  BlackBoxOracle& oracle_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<int> conn_fd_{-1};
  std::thread thread_;
};

// Client with the same query surface as the in-process oracle.
class SocketOracle {
 public:
  SocketOracle(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError("SocketOracle: cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) <
            0) {
      ::close(fd_);
      fd_ = -1;
      throw IoError("SocketOracle: cannot connect to " + host + ":" +
                    std::to_string(port));
    }
  }

  SocketOracle(const SocketOracle&) = delete;
  SocketOracle& operator=(const SocketOracle&) = delete;
  ~SocketOracle() {
    if (fd_ >= 0) ::close(fd_);
  }

  ProbVector query(const MelSpectrogram& m) {
    const std::string req = melspec_bytes(m, 0);
    detail::write_full(fd_, req.data(), req.size());
    std::uint32_t n = 0;
    if (!detail::read_full(fd_, &n, 4))
      throw IoError("SocketOracle: server closed the connection");
    if (n == detail::kBudgetSentinel) {
      std::uint64_t made = 0;
      detail::read_full(fd_, &made, 8);
      throw BudgetExhaustedError("oracle query budget exhausted (remote)",
                                 made);
    }
    if (n < 2 || n > 65536)
      throw IoError("SocketOracle: implausible posterior length");
    std::vector<float> probs(n);
    detail::read_full(fd_, probs.data(), 4 * probs.size());
    ProbVector p;
    p.probs.assign(probs.begin(), probs.end());
    if (!p.valid())
      throw IoError("SocketOracle: response is not a valid posterior");
    return p;
  }

 private:
  int fd_ = -1;
};

}  // namespace sidlab
