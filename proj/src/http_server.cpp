#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <list>
#include <set>
#include <sys/socket.h>

#include "skyweave/service.hpp"

namespace skyweave {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

struct Outbox {
  std::mutex m;
  std::condition_variable cv;
  std::deque<std::string> frames;
  bool closed = false;
};

void stream_session(MissionService& svc, websocket::stream<tcp::socket>& ws, const std::atomic<bool>& stop) {
  auto box = std::make_shared<Outbox>();
  int sub = svc.subscribe([box](const std::string& f) {
    std::lock_guard lk(box->m);
    if (box->frames.size() < 4096) box->frames.push_back(f);  // drop when the client stalls
    box->cv.notify_one();
  });
  try {
    while (!stop) {
      std::deque<std::string> out;
      {
        std::unique_lock lk(box->m);
        box->cv.wait_for(lk, std::chrono::milliseconds(100), [&] { return !box->frames.empty(); });
        out.swap(box->frames);
      }
      for (auto& f : out) ws.write(net::buffer(f));
    }
    ws.close(websocket::close_code::going_away);
  } catch (const std::exception&) {
    // client went away
  }
  svc.unsubscribe(sub);
}

// Open connections, so that shutdown can unblock their reads.
struct Registry {
  std::mutex m;
  std::set<int> fds;
  void add(int fd) {
    std::lock_guard lk(m);
    fds.insert(fd);
  }
  void remove(int fd) {
    std::lock_guard lk(m);
    fds.erase(fd);
  }
  void shutdown_all() {
    std::lock_guard lk(m);
    for (int fd : fds) ::shutdown(fd, SHUT_RDWR);
  }
};

void http_session(MissionService& svc, tcp::socket sock, const std::atomic<bool>& stop, Registry& reg) {
  int fd = sock.native_handle();
  reg.add(fd);
  beast::flat_buffer buf;
  try {
    for (;;) {
      http::request<http::string_body> req;
      http::read(sock, buf, req);
      if (websocket::is_upgrade(req)) {
        if (req.target() != "/stream") return;
        websocket::stream<tcp::socket> ws(std::move(sock));
        ws.text(true);
        ws.accept(req);
        stream_session(svc, ws, stop);
        reg.remove(fd);
        return;
      }
      HttpResponse r = svc.handle(std::string(req.method_string()), std::string(req.target()), req.body());
      http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req.keep_alive());
      res.body() = r.body.dump();
      res.prepare_payload();
      http::write(sock, res);
      if (!req.keep_alive()) break;
    }
  } catch (const std::exception&) {
    // closed or malformed; drop the connection
  }
  reg.remove(fd);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
}

std::pair<std::string, unsigned short> split_bind(const std::string& bind) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) return {bind, 8080};
  return {bind.substr(0, colon), static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)))};
}

}  // namespace

void serve(MissionService& svc, const std::string& bind, const std::atomic<bool>& stop, double tick_seconds,
           bool realtime, const std::function<void(unsigned short)>& on_listen) {
  auto [host, port] = split_bind(bind);
  net::io_context ioc;
  tcp::acceptor acc(ioc, {net::ip::make_address(host), port});
  if (on_listen) on_listen(acc.local_endpoint().port());

  std::list<std::thread> sessions;
  Registry reg;
  std::function<void()> accept = [&] {
    acc.async_accept([&](beast::error_code ec, tcp::socket sock) {
      if (!ec) sessions.emplace_back(http_session, std::ref(svc), std::move(sock), std::cref(stop), std::ref(reg));
      if (!stop) accept();
    });
  };
  accept();
  std::thread io([&] { ioc.run(); });

  auto next = std::chrono::steady_clock::now();
  auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(tick_seconds));
  while (!stop) {
    svc.step();
    if (realtime) {
      next += period;
      std::this_thread::sleep_until(next);
    }
  }
  beast::error_code ec;
  acc.close(ec);
  ioc.stop();
  io.join();
  reg.shutdown_all();
  for (auto& t : sessions) t.join();
}

}  // namespace skyweave
