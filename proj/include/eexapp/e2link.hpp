#pragma once

// Line protocol between the controller ("RIC") and the simulated cell
// ("DU"). One JSON object per line; see docs/e2link-protocol.md.
//
//   DU  -> RIC  HELLO(0)        frame config, slice table, version
//   RIC -> DU   HELLO(0)        version (or BYE to refuse)
//   DU  -> RIC  KPM_REPORT(t)   observation after t steps
//   RIC -> DU   POLICY(t)       action to apply for step t -> t+1
//   either      BYE

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eexapp/baselines.hpp"
#include "eexapp/environment.hpp"
#include "eexapp/errors.hpp"
#include "eexapp/trainer.hpp"

namespace eexapp::e2 {

inline constexpr int kProtocolVersion = 1;

enum class Kind { kKpmReport, kPolicy, kAck, kHello, kBye };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::kKpmReport: return "KPM_REPORT";
    case Kind::kPolicy: return "POLICY";
    case Kind::kAck: return "ACK";
    case Kind::kHello: return "HELLO";
    case Kind::kBye: return "BYE";
  }
  return "?";
}

inline Kind parse_kind(const std::string& s) {
  if (s == "KPM_REPORT") return Kind::kKpmReport;
  if (s == "POLICY") return Kind::kPolicy;
  if (s == "ACK") return Kind::kAck;
  if (s == "HELLO") return Kind::kHello;
  if (s == "BYE") return Kind::kBye;
  throw ProtocolError("unknown message kind '" + s + "'");
}

struct Hello {
  int version = kProtocolVersion;
  std::optional<FrameConfig> frame;  // sent by the DU only
  std::vector<QosTarget> slices;
};

struct Message {
  Kind kind = Kind::kAck;
  std::int64_t step_index = 0;
  Hello hello;
  StateObservation kpm;
  Action policy;
  std::string reason;  // BYE
};

/// Field-wise equality of the parts meaningful for `kind`.
inline bool same_message(const Message& a, const Message& b) {
  if (a.kind != b.kind || a.step_index != b.step_index) return false;
  switch (a.kind) {
    case Kind::kHello:
      return a.hello.version == b.hello.version && a.hello.frame == b.hello.frame && a.hello.slices == b.hello.slices;
    case Kind::kKpmReport: return a.kpm.step_index == b.kpm.step_index && a.kpm.ues == b.kpm.ues;
    case Kind::kPolicy:
      return a.policy.sleep.a == b.policy.sleep.a && a.policy.sleep.b == b.policy.sleep.b &&
             a.policy.sleep.c == b.policy.sleep.c && a.policy.alloc.beta == b.policy.alloc.beta;
    case Kind::kBye: return a.reason == b.reason;
    case Kind::kAck: return true;
  }
  return false;
}

inline std::string encode(const Message& m) {
  using nlohmann::json;
  json j;
  j["kind"] = to_string(m.kind);
  j["step_index"] = m.step_index;
  json p = json::object();
  switch (m.kind) {
    case Kind::kHello: {
      p["version"] = m.hello.version;
      if (m.hello.frame)
        p["frame"] = {{"mu", m.hello.frame->mu},
                      {"prb_total", m.hello.frame->prb_total},
                      {"frames_per_step", m.hello.frame->frames_per_step}};
      json slices = json::array();
      for (const auto& s : m.hello.slices)
        slices.push_back({{"slice_id", s.slice_id}, {"q_target_mbps", s.q_target_mbps}, {"d_target_ms", s.d_target_ms}});
      p["slices"] = std::move(slices);
      break;
    }
    case Kind::kKpmReport: {
      json ues = json::array();
      for (const auto& u : m.kpm.ues)
        ues.push_back({{"ue_id", u.ue_id},
                       {"slice_id", u.slice_id},
                       {"features", u.features},
                       {"q_mbps", u.throughput_mbps},
                       {"d_ms", u.delay_ms},
                       {"offered_mbps", u.offered_mbps}});
      p["ues"] = std::move(ues);
      break;
    }
    case Kind::kPolicy:
      p["a"] = m.policy.sleep.a;
      p["b"] = m.policy.sleep.b;
      p["c"] = m.policy.sleep.c;
      p["beta"] = m.policy.alloc.beta;
      break;
    case Kind::kBye: p["reason"] = m.reason; break;
    case Kind::kAck: break;
  }
  j["payload"] = std::move(p);
  return j.dump() + "\n";
}

namespace detail {

template <typename T>
T field(const nlohmann::json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ProtocolError(std::string("decode error at byte 0: missing field '") + key + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(std::string("decode error at byte 0: field '") + key + "' in " + where + " has the wrong type");
  }
}

}  // namespace detail

/// Parses one line (trailing newline optional). Unknown fields are ignored.
inline Message decode(std::string_view line) {
  using nlohmann::json;
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos) throw ProtocolError("decode error: interior newline");
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError("decode error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object()) throw ProtocolError("decode error at byte 0: message is not an object");
  Message m;
  m.kind = parse_kind(detail::field<std::string>(j, "kind", "message"));
  m.step_index = detail::field<std::int64_t>(j, "step_index", "message");
  const json empty = json::object();
  const json& p = j.contains("payload") ? j["payload"] : empty;
  switch (m.kind) {
    case Kind::kHello: {
      m.hello.version = detail::field<int>(p, "version", "HELLO");
      if (p.contains("frame")) {
        const json& f = p["frame"];
        FrameConfig fc;
        fc.mu = detail::field<int>(f, "mu", "HELLO.frame");
        fc.prb_total = detail::field<int>(f, "prb_total", "HELLO.frame");
        fc.frames_per_step = detail::field<int>(f, "frames_per_step", "HELLO.frame");
        m.hello.frame = fc;
      }
      if (p.contains("slices")) {
        if (!p["slices"].is_array()) throw ProtocolError("decode error at byte 0: HELLO.slices is not an array");
        for (const json& s : p["slices"])
          m.hello.slices.push_back(QosTarget{detail::field<int>(s, "slice_id", "HELLO.slices"),
                                             detail::field<double>(s, "q_target_mbps", "HELLO.slices"),
                                             detail::field<double>(s, "d_target_ms", "HELLO.slices")});
      }
      break;
    }
    case Kind::kKpmReport: {
      m.kpm.step_index = m.step_index;
      const json ues = detail::field<json>(p, "ues", "KPM_REPORT");
      if (!ues.is_array()) throw ProtocolError("decode error at byte 0: KPM_REPORT.ues is not an array");
      for (const json& u : ues) {
        UeObservation o;
        o.ue_id = detail::field<int>(u, "ue_id", "KPM_REPORT.ues");
        o.slice_id = detail::field<int>(u, "slice_id", "KPM_REPORT.ues");
        const auto f = detail::field<std::vector<double>>(u, "features", "KPM_REPORT.ues");
        if (f.size() != static_cast<std::size_t>(kNumFeatures))
          throw ProtocolError("decode error at byte 0: features must hold " + std::to_string(kNumFeatures) + " values");
        std::copy(f.begin(), f.end(), o.features.begin());
        o.throughput_mbps = detail::field<double>(u, "q_mbps", "KPM_REPORT.ues");
        o.delay_ms = detail::field<double>(u, "d_ms", "KPM_REPORT.ues");
        o.offered_mbps = u.contains("offered_mbps") ? detail::field<double>(u, "offered_mbps", "KPM_REPORT.ues") : 0.0;
        m.kpm.ues.push_back(o);
      }
      break;
    }
    case Kind::kPolicy:
      m.policy.sleep.a = detail::field<int>(p, "a", "POLICY");
      m.policy.sleep.b = detail::field<int>(p, "b", "POLICY");
      m.policy.sleep.c = detail::field<int>(p, "c", "POLICY");
      m.policy.alloc.beta = detail::field<std::vector<double>>(p, "beta", "POLICY");
      break;
    case Kind::kBye: m.reason = p.contains("reason") ? detail::field<std::string>(p, "reason", "BYE") : ""; break;
    case Kind::kAck: break;
  }
  return m;
}

inline Message make_hello(std::int64_t step, std::optional<FrameConfig> frame, std::vector<QosTarget> slices,
                          int version = kProtocolVersion) {
  Message m;
  m.kind = Kind::kHello;
  m.step_index = step;
  m.hello = Hello{version, frame, std::move(slices)};
  return m;
}

inline Message make_kpm(const StateObservation& obs) {
  Message m;
  m.kind = Kind::kKpmReport;
  m.step_index = obs.step_index;
  m.kpm = obs;
  return m;
}

inline Message make_policy(std::int64_t step, const Action& a) {
  Message m;
  m.kind = Kind::kPolicy;
  m.step_index = step;
  m.policy = a;
  return m;
}

inline Message make_bye(std::int64_t step, std::string reason) {
  Message m;
  m.kind = Kind::kBye;
  m.step_index = step;
  m.reason = std::move(reason);
  return m;
}

/// Raised when the peer closes the stream or the socket fails.
class ConnectionLost : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Newline-framed stream over a connected socket.
class LineSocket {
 public:
  LineSocket() = default;
  explicit LineSocket(int fd) : fd_(fd) {}
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;
  LineSocket(LineSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), buf_(std::move(o.buf_)) {}
  LineSocket& operator=(LineSocket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
      buf_ = std::move(o.buf_);
    }
    return *this;
  }
  ~LineSocket() { close(); }

  bool open() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void write_line(const std::string& line) {
    if (fd_ < 0) throw ConnectionLost("write on closed connection");
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionLost(std::string("send failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line without its newline; nullopt when timeout_ms elapses first
  /// (negative waits forever).
  std::optional<std::string> read_line(int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(std::max(timeout_ms, 0));
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      if (fd_ < 0) throw ConnectionLost("read on closed connection");
      int wait = -1;
      if (timeout_ms >= 0) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
        if (left <= 0) return std::nullopt;
        wait = static_cast<int>(left);
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, wait);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ConnectionLost(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) return std::nullopt;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n == 0) throw ConnectionLost("peer closed the connection");
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ConnectionLost(std::string("recv failed: ") + std::strerror(errno));
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void send(const Message& m, std::ostream* record = nullptr) {
    const std::string line = encode(m);
    if (record) *record << line;
    write_line(line);
  }

  std::optional<Message> receive(int timeout_ms, std::ostream* record = nullptr) {
    auto line = read_line(timeout_ms);
    if (!line) return std::nullopt;
    if (record) *record << *line << '\n';
    return decode(*line);
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

/// Connected pair for in-process loopback.
inline std::pair<LineSocket, LineSocket> socket_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw std::runtime_error(std::string("socketpair failed: ") + std::strerror(errno));
  return {LineSocket(fds[0]), LineSocket(fds[1])};
}

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;
};

/// "host:port" or ":port".
inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address '" + s + "' must be host:port");
  Endpoint e;
  if (colon > 0) e.host = s.substr(0, colon);
  try {
    e.port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in address '" + s + "'");
  }
  if (e.port < 0 || e.port > 65535) throw ConfigError("port out of range in '" + s + "'");
  return e;
}

class Listener {
 public:
  explicit Listener(const Endpoint& ep) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error(std::string("socket failed: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw ConfigError("listen address must be a dotted IPv4 address: " + ep.host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 1) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw std::runtime_error("cannot listen on " + ep.host + ":" + std::to_string(ep.port) + ": " + err);
    }
  }
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener() {
    if (fd_ >= 0) ::close(fd_);
  }

  int port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  LineSocket accept() {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) throw ConnectionLost(std::string("accept failed: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return LineSocket(c);
  }

 private:
  int fd_ = -1;
};

/// Connects, retrying for up to retry_ms while the server comes up.
inline LineSocket connect_to(const Endpoint& ep, int retry_ms = 5000) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0 || !res)
    throw ConfigError("cannot resolve " + ep.host);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(retry_ms);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return LineSocket(fd);
    }
    if (fd >= 0) ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      ::freeaddrinfo(res);
      throw ConnectionLost("cannot connect to " + ep.host + ":" + std::to_string(ep.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

struct DuOptions {
  int policy_timeout_ms = 10000;  // wait for POLICY(t) before reusing the last one
  int grace_steps = 10;           // steps on the last policy after the link drops
  std::int64_t max_steps = 0;     // 0 = until BYE or fallback completes
  int handshake_timeout_ms = 10000;
};

struct DuReport {
  std::int64_t steps = 0;
  std::int64_t late_steps = 0;      // steps that reused the previous policy
  std::int64_t fallback_steps = 0;  // steps on static_always_on after link loss
  bool peer_bye = false;
  bool link_lost = false;
  std::vector<StepOutcome> outcomes;
};

/// DU side of the lock-step loop. Each StepOutcome is handed to on_step (for
/// trace export) and kept in the report.
inline DuReport serve_du(Simulator& sim, LineSocket& link, const DuOptions& opt, std::ostream* record = nullptr,
                         const std::function<void(const StepOutcome&)>& on_step = {}) {
  DuReport rep;
  link.send(make_hello(0, sim.frame_config(), sim.slices()), record);
  auto reply = link.receive(opt.handshake_timeout_ms, record);
  if (!reply) throw ProtocolError("handshake timed out");
  if (reply->kind == Kind::kBye) throw ProtocolError("controller refused handshake: " + reply->reason);
  if (reply->kind != Kind::kHello) throw ProtocolError(std::string("expected HELLO, got ") + to_string(reply->kind));
  if (reply->hello.version != kProtocolVersion)
    throw ProtocolError("protocol version mismatch: peer " + std::to_string(reply->hello.version) + ", local " +
                        std::to_string(kProtocolVersion));

  const Action always_on{fixed_sleep_action(0, sim.frame_config()), SliceAllocation::uniform(sim.slices().size())};
  Action last = always_on;
  std::int64_t last_received = -1;
  int grace_left = opt.grace_steps;
  StateObservation obs = sim.initial_observation();

  for (;;) {
    const std::int64_t t = sim.step_index();
    if (opt.max_steps > 0 && t >= opt.max_steps) break;
    Action act = last;
    if (!rep.link_lost) {
      try {
        link.send(make_kpm(obs), record);
        bool got = false;
        while (!got) {
          auto m = link.receive(opt.policy_timeout_ms, record);
          if (!m) {
            ++rep.late_steps;
            break;
          }
          if (m->kind == Kind::kBye) {
            rep.peer_bye = true;
            break;
          }
          if (m->kind != Kind::kPolicy) throw ProtocolError(std::string("unexpected ") + to_string(m->kind) + " from controller");
          if (m->step_index <= last_received || m->step_index > t)
            throw ProtocolError("out-of-order POLICY step " + std::to_string(m->step_index) + " (current " +
                                std::to_string(t) + ", last " + std::to_string(last_received) + ")");
          last_received = m->step_index;
          if (m->step_index < t) continue;  // late answer to an earlier report
          if (!m->policy.sleep.valid_for(sim.frame_config().n_ts()) || m->policy.alloc.beta.size() != sim.slices().size() ||
              !m->policy.alloc.valid())
            throw ProtocolError("POLICY " + std::to_string(t) + " violates the action constraints");
          act = last = m->policy;
          got = true;
        }
        if (rep.peer_bye) break;
      } catch (const ConnectionLost&) {
        rep.link_lost = true;
      }
    }
    if (rep.link_lost) {
      if (grace_left > 0) {
        --grace_left;
        act = last;
      } else {
        act = always_on;
        ++rep.fallback_steps;
        if (opt.max_steps == 0) break;
      }
    }
    StepOutcome out = sim.step(act.sleep, act.alloc);
    obs = out.observation;
    if (on_step) on_step(out);
    rep.outcomes.push_back(std::move(out));
    ++rep.steps;
  }
  if (!rep.link_lost && !rep.peer_bye) {
    try {
      link.send(make_bye(sim.step_index(), "done"), record);
    } catch (const ConnectionLost&) {
    }
  }
  return rep;
}

/// RIC-side environment: the cell lives behind the link and the reward is
/// computed locally from the reported q/d, exactly as LocalEnv does.
class RemoteEnv : public Environment {
 public:
  RemoteEnv(LineSocket& link, Scenario expected, int timeout_ms = -1, std::ostream* record = nullptr)
      : link_(link), sc_(std::move(expected)), timeout_ms_(timeout_ms), record_(record) {}

  StateObservation reset(std::optional<std::uint64_t> seed) override {
    if (started_) throw ConfigError("remote cells cannot be reset; use a continuing task (episode_steps = 0)");
    if (seed && *seed != sc_.seed) throw ConfigError("remote cell seed is fixed by the DU");
    started_ = true;
    handshake(link_, sc_, timeout_ms_, record_);
    return expect_kpm(0);
  }

  EnvStep step(const SleepAction& act, const SliceAllocation& alloc) override {
    link_.send(make_policy(t_, Action{act, alloc}), record_);
    StateObservation obs = expect_kpm(t_ + 1);
    return score_step(std::move(obs), act, sc_.slices, sc_.lambda_q, sc_.lambda_d, sc_.frame);
  }

  const Scenario& scenario() const override { return sc_; }

  void bye(const std::string& reason = "done") {
    try {
      link_.send(make_bye(t_, reason), record_);
    } catch (const ConnectionLost&) {
    }
  }

  /// Receives the DU HELLO, checks it against the expected scenario, replies.
  static void handshake(LineSocket& link, const Scenario& sc, int timeout_ms, std::ostream* record) {
    auto m = link.receive(timeout_ms, record);
    if (!m) throw ProtocolError("handshake timed out");
    if (m->kind != Kind::kHello) throw ProtocolError(std::string("expected HELLO, got ") + to_string(m->kind));
    if (m->hello.version != kProtocolVersion) {
      link.send(make_bye(0, "version mismatch"), record);
      throw ProtocolError("protocol version mismatch: peer " + std::to_string(m->hello.version) + ", local " +
                          std::to_string(kProtocolVersion));
    }
    if (!m->hello.frame || !(*m->hello.frame == sc.frame) || !(m->hello.slices == sc.slices)) {
      link.send(make_bye(0, "scenario mismatch"), record);
      throw ProtocolError("DU frame config or slice table differs from the local scenario");
    }
    link.send(make_hello(0, std::nullopt, {}), record);
  }

 private:
  StateObservation expect_kpm(std::int64_t step) {
    auto m = link_.receive(timeout_ms_, record_);
    if (!m) throw ProtocolError("timed out waiting for KPM_REPORT " + std::to_string(step));
    if (m->kind == Kind::kBye) throw ConnectionLost("DU ended the session: " + m->reason);
    if (m->kind != Kind::kKpmReport) throw ProtocolError(std::string("expected KPM_REPORT, got ") + to_string(m->kind));
    if (m->step_index != step)
      throw ProtocolError("KPM_REPORT step " + std::to_string(m->step_index) + ", expected " + std::to_string(step));
    t_ = step;
    return m->kpm;
  }

  LineSocket& link_;
  Scenario sc_;
  int timeout_ms_;
  std::ostream* record_;
  bool started_ = false;
  std::int64_t t_ = 0;
};

/// Inference-only RIC loop: answer every report with the controller's action
/// for `steps` steps (0 = until the DU says BYE), then say BYE.
inline std::vector<StepRecord> run_ric(LineSocket& link, const Scenario& sc, Controller& ctl, std::int64_t steps,
                                       std::uint64_t seed, std::ostream* record = nullptr,
                                       const std::function<void(const StepRecord&)>& on_step = {}) {
  RemoteEnv env(link, sc, -1, record);
  Engine rng(stream_seed(seed, 11));
  std::vector<StepRecord> out;
  StateObservation obs = env.reset(std::nullopt);
  for (std::int64_t t = 0; steps == 0 || t < steps; ++t) {
    const Action a = ctl.decide(obs, rng);
    EnvStep es;
    try {
      es = env.step(a.sleep, a.alloc);
    } catch (const ConnectionLost&) {
      if (steps == 0) return out;
      throw;
    }
    StepRecord r{t, es.reward.r_total, es.reward.r_alpha, es.reward.r_beta, es.sleep_ratio, es.violation_ratio, {}};
    if (on_step) on_step(r);
    out.push_back(r);
    obs = std::move(es.obs);
  }
  env.bye();
  return out;
}

struct ReplayRow {
  std::int64_t t = 0;
  std::size_t k = 0;
  int recorded_b = -1;
  int agent_b = 0;
  int agent_class = 0;
  double recorded_r_total = 0.0;
  double recorded_violation_ratio = 0.0;
};

/// Re-scores a recorded session: for each KPM_REPORT(t) followed by the
/// POLICY(t) that was applied and KPM_REPORT(t+1), reports the reward the
/// recorded action earned and what the controller would have chosen.
inline std::vector<ReplayRow> replay(std::istream& in, const Scenario& sc, Controller& ctl, std::uint64_t seed) {
  std::vector<Message> kpm;
  std::map<std::int64_t, Action> policy;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Message m;
    try {
      m = decode(line);
    } catch (const ProtocolError& e) {
      throw ProtocolError("replay line " + std::to_string(lineno) + ": " + e.what());
    }
    if (m.kind == Kind::kKpmReport) kpm.push_back(std::move(m));
    else if (m.kind == Kind::kPolicy) policy[m.step_index] = m.policy;
  }
  const auto actions = enumerate_sleep_actions(sc.frame);
  Engine rng(stream_seed(seed, 11));
  std::vector<ReplayRow> rows;
  for (std::size_t i = 0; i < kpm.size(); ++i) {
    const StateObservation& obs = kpm[i].kpm;
    ReplayRow r;
    r.t = obs.step_index;
    r.k = obs.k();
    const Action a = ctl.decide(obs, rng);
    r.agent_b = a.sleep.b;
    for (std::size_t c = 0; c < actions.size(); ++c)
      if (actions[c].a == a.sleep.a && actions[c].b == a.sleep.b) r.agent_class = static_cast<int>(c);
    if (auto it = policy.find(r.t); it != policy.end() && i + 1 < kpm.size() && kpm[i + 1].step_index == r.t + 1) {
      r.recorded_b = it->second.sleep.b;
      const EnvStep es = score_step(kpm[i + 1].kpm, it->second.sleep, sc.slices, sc.lambda_q, sc.lambda_d, sc.frame);
      r.recorded_r_total = es.reward.r_total;
      r.recorded_violation_ratio = es.violation_ratio;
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace eexapp::e2
