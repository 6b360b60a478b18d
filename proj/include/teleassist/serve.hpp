#pragma once

// Network endpoint for an interactive console. One TCP port speaks the
// newline-delimited message schema either raw or inside WebSocket text frames
// (a client that opens with an HTTP GET is upgraded). Each connection gets its
// own engine; the reader thread only decodes and queues, the session loop owns
// all state.

#include "teleassist/config.hpp"
#include "teleassist/protocol.hpp"
#include "teleassist/session.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace teleassist::serve {

struct SocketError : std::runtime_error {
    explicit SocketError(const std::string& what) : std::runtime_error(what + ": " + std::strerror(errno)) {}
};

/// Sec-WebSocket-Accept for a client key.
inline std::string websocket_accept(const std::string& key) {
    const std::string s = key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (!EVP_Digest(s.data(), s.size(), md, &n, EVP_sha1(), nullptr)) throw std::runtime_error("sha1 failed");
    return intent::base64_encode(std::vector<std::uint8_t>(md, md + n));
}

/// One server-to-client WebSocket frame (never masked).
inline std::string ws_frame(const std::string& payload, std::uint8_t opcode = 0x1) {
    std::string f;
    f.push_back(static_cast<char>(0x80 | opcode));
    const std::size_t n = payload.size();
    if (n < 126) {
        f.push_back(static_cast<char>(n));
    } else if (n < 65536) {
        f.push_back(static_cast<char>(126));
        f.push_back(static_cast<char>(n >> 8));
        f.push_back(static_cast<char>(n & 0xFF));
    } else {
        f.push_back(static_cast<char>(127));
        for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
    }
    return f + payload;
}

/// Incremental WebSocket frame parser for client traffic.
class WsReader {
public:
    struct Frame {
        std::uint8_t opcode;
        std::string payload;
    };

    void feed(const char* p, std::size_t n) { buf_.append(p, n); }

    std::optional<Frame> next() {
        if (buf_.size() < 2) return std::nullopt;
        const auto b0 = static_cast<std::uint8_t>(buf_[0]), b1 = static_cast<std::uint8_t>(buf_[1]);
        std::size_t at = 2;
        std::uint64_t len = b1 & 0x7F;
        if (len == 126) {
            if (buf_.size() < 4) return std::nullopt;
            len = (static_cast<std::uint8_t>(buf_[2]) << 8) | static_cast<std::uint8_t>(buf_[3]);
            at = 4;
        } else if (len == 127) {
            if (buf_.size() < 10) return std::nullopt;
            len = 0;
            for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf_[2 + i]);
            at = 10;
        }
        const bool masked = b1 & 0x80;
        std::uint8_t mask[4] = {0, 0, 0, 0};
        if (masked) {
            if (buf_.size() < at + 4) return std::nullopt;
            for (int i = 0; i < 4; ++i) mask[i] = static_cast<std::uint8_t>(buf_[at + i]);
            at += 4;
        }
        if (buf_.size() < at + len) return std::nullopt;
        std::string payload = buf_.substr(at, len);
        if (masked)
            for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ mask[i % 4]);
        buf_.erase(0, at + len);
        const std::uint8_t op = b0 & 0x0F;
        if (op == 0x0) {  // continuation
            partial_ += payload;
            if (!(b0 & 0x80)) return next();
            return Frame{partial_op_, std::exchange(partial_, {})};
        }
        if (!(b0 & 0x80)) {
            partial_op_ = op;
            partial_ = std::move(payload);
            return next();
        }
        return Frame{op, std::move(payload)};
    }

private:
    std::string buf_, partial_;
    std::uint8_t partial_op_ = 0x1;
};

inline void send_all(int fd, const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
        const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw SocketError("send");
        }
        off += static_cast<std::size_t>(n);
    }
}

/// One client connection: transport framing plus the ordered inbound queue.
class Connection {
public:
    explicit Connection(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    ~Connection() {
        closed_ = true;
        ::shutdown(fd_, SHUT_RDWR);
        if (reader_.joinable()) reader_.join();
        ::close(fd_);
    }
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    bool websocket() const { return ws_; }

    /// Sniffs the first bytes, performs the upgrade if asked, then starts the reader.
    void start() {
        std::string head;
        char c;
        // raw clients start with '{'; anything else is treated as HTTP
        while (head.empty()) {
            const ssize_t n = ::recv(fd_, &c, 1, MSG_PEEK);
            if (n <= 0) throw SocketError("peer closed before first byte");
            head.push_back(c);
        }
        if (head[0] != '{') upgrade();
        reader_ = std::thread([this] { read_loop(); });
    }

    void send(const protocol::Message& m) {
        const std::string line = protocol::encode(m);
        std::lock_guard lk(write_mu_);
        send_all(fd_, ws_ ? ws_frame(line) : line);
    }

    /// Messages decoded since the last call, in arrival order.
    std::vector<protocol::Message> drain() {
        std::lock_guard lk(mu_);
        std::vector<protocol::Message> out(inbox_.begin(), inbox_.end());
        inbox_.clear();
        return out;
    }

    bool open() const { return !closed_; }
    std::vector<std::string> errors() {
        std::lock_guard lk(mu_);
        return errors_;
    }

private:
    void upgrade() {
        std::string req;
        char buf[1024];
        while (req.find("\r\n\r\n") == std::string::npos) {
            const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
            if (n <= 0) throw SocketError("handshake");
            req.append(buf, static_cast<std::size_t>(n));
            if (req.size() > 16384) throw std::runtime_error("handshake too large");
        }
        const std::size_t end = req.find("\r\n\r\n") + 4;
        const std::string rest = req.substr(end);
        std::string key;
        std::size_t pos = 0;
        while (true) {
            const std::size_t eol = req.find("\r\n", pos);
            if (eol == std::string::npos || eol >= end - 2) break;
            std::string line = req.substr(pos, eol - pos);
            pos = eol + 2;
            const std::size_t colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string name = line.substr(0, colon);
            for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (name == "sec-websocket-key") {
                key = line.substr(colon + 1);
                key.erase(0, key.find_first_not_of(' '));
                key.erase(key.find_last_not_of(" \t") + 1);
            }
        }
        if (key.empty()) {
            send_all(fd_, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
            throw std::runtime_error("not a websocket upgrade");
        }
        send_all(fd_, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                      "Sec-WebSocket-Accept: " +
                          websocket_accept(key) + "\r\n\r\n");
        ws_ = true;
        ws_reader_.feed(rest.data(), rest.size());
    }

    void push_lines(const std::string& bytes) {
        lines_.feed(bytes);
        try {
            while (auto m = lines_.next()) {
                std::lock_guard lk(mu_);
                inbox_.push_back(std::move(*m));
            }
        } catch (const protocol::MalformedFrame& e) {
            std::lock_guard lk(mu_);
            errors_.push_back(e.what());
            lines_ = protocol::FrameReader();
        }
    }

    void read_loop() {
        char buf[4096];
        while (!closed_) {
            if (ws_) {
                while (auto f = ws_reader_.next()) {
                    if (f->opcode == 0x8) {
                        try {
                            std::lock_guard lk(write_mu_);
                            send_all(fd_, ws_frame(f->payload, 0x8));
                        } catch (...) {
                        }
                        closed_ = true;
                        return;
                    }
                    if (f->opcode == 0x9) {
                        std::lock_guard lk(write_mu_);
                        send_all(fd_, ws_frame(f->payload, 0xA));
                    } else if (f->opcode == 0x1) {
                        // a text frame holds whole lines; a missing final newline is tolerated
                        std::string s = f->payload;
                        if (!s.empty() && s.back() != '\n') s.push_back('\n');
                        push_lines(s);
                    }
                }
            }
            const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
            if (n <= 0) {
                if (n < 0 && errno == EINTR) continue;
                closed_ = true;
                return;
            }
            if (ws_)
                ws_reader_.feed(buf, static_cast<std::size_t>(n));
            else
                push_lines(std::string(buf, static_cast<std::size_t>(n)));
        }
    }

    int fd_;
    bool ws_ = false;
    std::atomic<bool> closed_{false};
    std::thread reader_;
    std::mutex mu_, write_mu_;
    std::deque<protocol::Message> inbox_;
    std::vector<std::string> errors_;
    protocol::FrameReader lines_;
    WsReader ws_reader_;
};

/// Listening socket. Port 0 picks an ephemeral port.
class Listener {
public:
    Listener(const std::string& bind, int port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw SocketError("socket");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, bind.c_str(), &a.sin_addr) != 1) {
            ::close(fd_);
            throw std::invalid_argument("bad bind address " + bind);
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) < 0 || ::listen(fd_, 4) < 0) {
            const int e = errno;
            ::close(fd_);
            errno = e;
            throw SocketError("bind " + bind + ":" + std::to_string(port));
        }
        socklen_t len = sizeof a;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
        port_ = ntohs(a.sin_port);
    }
    ~Listener() { ::close(fd_); }
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    int port() const { return port_; }

    /// Waits up to timeout_ms; returns -1 on timeout.
    int accept(int timeout_ms) {
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, timeout_ms);
        if (r <= 0) return -1;
        return ::accept(fd_, nullptr, nullptr);
    }

private:
    int fd_ = -1;
    int port_ = 0;
};

struct ServeOptions {
    bool realtime = true;       // pace ticks against the wall clock
    double idle_timeout = 0.0;  // s without traffic before closing; 0 keeps waiting
    Condition condition;        // initial condition; the client may switch it between blocks
};

/// Runs one interactive session on an accepted connection until the client
/// leaves or all blocks are done.
inline void run_connection(int fd, const RunConfig& rc, const intent::Model* model, const ServeOptions& opt,
                           std::uint64_t seed) {
    Connection conn(fd);
    conn.start();
    const SessionConfig& cfg = rc.session;
    Engine engine(cfg, opt.condition, model, seed);
    std::uint64_t seq = 0;
    auto send = [&](protocol::Kind k, double t, nlohmann::json p) {
        conn.send({k, seq++, t * 1000.0, std::move(p)});
    };

    // handshake
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
    std::optional<protocol::Message> hello;
    while (!hello && conn.open() && std::chrono::steady_clock::now() < deadline) {
        for (auto& m : conn.drain())
            if (m.kind == protocol::Kind::Hello) hello = m;
        if (!hello) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (!hello) return;
    if (hello->payload.at("version").get<int>() != protocol::kVersion) {
        send(protocol::Kind::Bye, 0.0, {{"reason", "version mismatch: server speaks " +
                                                       std::to_string(protocol::kVersion)}});
        return;
    }
    send(protocol::Kind::Hello, 0.0, {{"version", protocol::kVersion}, {"role", "remote"}});

    int block = 0;
    long tick = 0;
    double t = 0.0;
    auto begin = [&] {
        const Block b = spawn_block(cfg.scene, mix_seed({seed, static_cast<std::uint64_t>(block), 0x5BA7}));
        engine.begin_block(block, b, cfg.scene, t);
        send(protocol::Kind::ModeChange, t,
             {{"mode", "direct"}, {"condition", {{"va", engine.condition().va}, {"mmipn", engine.condition().mmipn}}}});
    };
    begin();
    auto last_traffic = std::chrono::steady_clock::now();
    auto next_tick = std::chrono::steady_clock::now();
    protocol::Mode last_mode = protocol::Mode::Direct;
    while (conn.open()) {
        for (auto& m : conn.drain()) {
            last_traffic = std::chrono::steady_clock::now();
            if (m.kind == protocol::Kind::Bye) {
                send(protocol::Kind::Bye, t, {{"reason", "client left"}});
                return;
            }
            if (m.kind == protocol::Kind::GraspRequest && (!m.payload.contains("image") || m.payload["image"].is_null())) {
                // the console has no camera; render the remote view
                const WorldSnapshot s = engine.snapshot(t);
                m.payload["image"] = {{"height", cfg.view.height}, {"width", cfg.view.width}, {"channels", 3},
                                      {"encoding", "base64-u8-hwc"},
                                      {"data", intent::image_to_base64(intent::quantize_image(
                                                   render(cfg.view, engine.scene(), s.objects, s.ee)))}};
            }
            engine.receive(m, t);
        }
        engine.step(t, cfg.tick);
        t = static_cast<double>(++tick) * cfg.tick;
        const WorldSnapshot snap = engine.snapshot(t);
        if (snap.mode != last_mode) {
            send(protocol::Kind::ModeChange, t, {{"mode", protocol::mode_name(snap.mode)}});
            last_mode = snap.mode;
        }
        send(protocol::Kind::WorldSnapshot, t, snapshot_to_json(snap));
        for (auto& m : engine.take_outbox()) send(m.kind, t, m.payload);
        for (const auto& a : engine.take_attempts())
            send(protocol::Kind::MetricsTick, t,
                 {{"metrics", {{"block", a.block}, {"trial", a.trial}, {"attempt", a.attempt},
                               {"success", a.success}, {"grasp_time_s", a.t_end - a.t_start}}}});
        if (auto br = engine.take_block())
            send(protocol::Kind::MetricsTick, t,
                 {{"metrics", {{"block", br->block}, {"attempts", br->attempts}, {"successes", br->successes},
                               {"complete", br->complete}, {"block_time_s", br->t_end - br->t_start}}}});
        if (engine.idle()) {
            if (++block >= cfg.blocks) {
                send(protocol::Kind::Bye, t, {{"reason", "study complete"}});
                return;
            }
            begin();
        }
        if (opt.idle_timeout > 0 &&
            std::chrono::steady_clock::now() - last_traffic > std::chrono::duration<double>(opt.idle_timeout)) {
            send(protocol::Kind::Bye, t, {{"reason", "idle timeout"}});
            return;
        }
        if (opt.realtime) {
            next_tick += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(cfg.tick));
            std::this_thread::sleep_until(next_tick);
        }
    }
}

/// Accept loop; sessions are served one at a time until `stop` is set.
inline void serve_forever(Listener& l, const RunConfig& rc, const intent::Model* model, const ServeOptions& opt,
                          const std::atomic<bool>& stop) {
    std::uint64_t n = 0;
    while (!stop) {
        const int fd = l.accept(200);
        if (fd < 0) continue;
        try {
            run_connection(fd, rc, model, opt, mix_seed({rc.study.seed, n++, 0x5E7E}));
        } catch (const std::exception&) {
            // a broken client must not take the endpoint down
        }
    }
}

}  // namespace teleassist::serve
