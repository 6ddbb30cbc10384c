#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "podhive/server.hpp"

namespace podhive::api {

struct HttpServer::Impl {
  Service& service;
  httplib::Server http;
  std::thread thread;
  std::atomic<bool> stopping{false};

  explicit Impl(Service& s) : service(s) {
    http.new_task_queue = [] { return new httplib::ThreadPool(16); };
    http.Get("/events", [this](const httplib::Request&, httplib::Response& res) { events(res); });
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      Request r;
      r.method = req.method;
      r.path = req.path;
      for (const auto& [k, v] : req.params) r.query.emplace(k, v);
      r.content_type = req.get_header_value("Content-Type");
      if (req.is_multipart_form_data()) {
        if (req.files.empty()) {
          res.status = 400;
          res.set_content(R"({"error":{"code":"InvalidArgument","message":"empty multipart body"}})" "\n",
                          "application/json");
          return;
        }
        r.body = req.files.begin()->second.content;
        r.content_type = "application/json";
      } else {
        r.body = req.body;
      }
      Response out = service.handle(r);
      res.status = out.status;
      res.set_content(out.body, out.content_type);
    };
    http.Get(".*", forward);
    http.Post(".*", forward);
    http.Patch(".*", forward);
    http.Delete(".*", forward);
  }

  void events(httplib::Response& res) {
    auto sub = service.events().subscribe();
    std::uint64_t start = service.events().last_seq();
    auto greeted = std::make_shared<bool>(false);
    res.set_chunked_content_provider(
        "application/x-ndjson",
        [this, sub, start, greeted](std::size_t, httplib::DataSink& sink) {
          if (!*greeted) {
            *greeted = true;
            std::string hello =
                nlohmann::json{{"subscribed", true}, {"seq", start}}.dump() + "\n";
            return sink.write(hello.data(), hello.size());
          }
          while (!stopping) {
            if (!sink.is_writable()) return false;
            auto ev = sub->next(std::chrono::milliseconds(100));
            if (!ev) {
              if (sub->finished()) break;
              continue;
            }
            std::string frame = encode_event(*ev);
            if (!sink.write(frame.data(), frame.size())) return false;
            if (ev->kind == EventKind::Lagged) break;
            return true;
          }
          sink.done();
          return true;
        },
        [sub](bool) { sub->close(); });
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("IoFailure", "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->http.bind_to_port(host, port)) {
    throw Error("IoFailure", "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->http.listen_after_bind();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->service.events().close_all();
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace podhive::api
