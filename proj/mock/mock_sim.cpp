#include "mock_sim.hpp"

#include <cctype>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "uqgate/error.hpp"

namespace uqgate::mock {

using nlohmann::json;

namespace {

std::set<std::string> tokens(const std::string& text) {
  std::string clean;
  for (unsigned char c : text) clean.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : ' ');
  std::istringstream in(clean);
  std::set<std::string> out;
  std::string w;
  while (in >> w) out.insert(w);
  return out;
}

}  // namespace

std::vector<double> mock_scores(const sim::SimilarityRequest& req) {
  std::vector<double> out;
  for (const auto& [a, b] : req.pairs) {
    if (req.backend == sim::WireBackend::embedding) {
      out.push_back(sim::lexical_similarity(a, b));
      continue;
    }
    const auto ta = tokens(a);
    const auto tb = tokens(b);
    if (tb.empty()) {
      out.push_back(ta.empty() ? 1.0 : 0.0);
      continue;
    }
    std::size_t shared = 0;
    for (const auto& t : tb) shared += ta.count(t);
    out.push_back(static_cast<double>(shared) / static_cast<double>(tb.size()));
  }
  return out;
}

struct MockSimServer::Impl {
  SimFaults faults;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mutex;
  int similarity_calls = 0;
  int health_calls = 0;
  std::vector<std::size_t> batches;
};

MockSimServer::MockSimServer(SimFaults faults, int port) : impl_(std::make_unique<Impl>()) {
  impl_->faults = faults;
  Impl* impl = impl_.get();

  impl->server.Post(R"(.*/similarity)", [impl](const httplib::Request& http_req, httplib::Response& res) {
    int nth = 0;
    {
      std::lock_guard lock(impl->mutex);
      nth = impl->similarity_calls++;
    }
    if (nth < impl->faults.fail_first_n) {
      res.status = 500;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    sim::SimilarityRequest req;
    try {
      req = sim::decode_request(http_req.body);
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    {
      std::lock_guard lock(impl->mutex);
      impl->batches.push_back(req.pairs.size());
    }
    auto scores = mock_scores(req);
    if (impl->faults.wrong_length && !scores.empty()) scores.pop_back();
    if (impl->faults.out_of_range && !scores.empty()) scores.front() = 1.5;
    res.set_content(sim::encode_scores(scores), "application/json");
  });

  impl->server.Get(R"(.*/health)", [impl](const httplib::Request&, httplib::Response& res) {
    int nth = 0;
    {
      std::lock_guard lock(impl->mutex);
      nth = impl->health_calls++;
    }
    if (nth < impl->faults.unhealthy_first_n) {
      res.status = 503;
      res.set_content(R"({"status":"loading"})", "application/json");
      return;
    }
    res.set_content(R"({"status":"ok","models":{"embedding":"mock-jaccard","nli":"mock-overlap"}})",
                    "application/json");
  });

  if (port == 0) {
    impl->port = impl->server.bind_to_any_port("127.0.0.1");
  } else {
    impl->port = impl->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (impl->port <= 0) fail(ErrorCode::ConfigError, "mock similarity server could not bind a port");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockSimServer::~MockSimServer() { stop(); }

int MockSimServer::port() const { return impl_->port; }

std::string MockSimServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

std::vector<std::size_t> MockSimServer::batch_sizes() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->batches;
}

void MockSimServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockSimServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace uqgate::mock
