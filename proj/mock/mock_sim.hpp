#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uqgate/similarity.hpp"

namespace uqgate::mock {

struct SimFaults {
  int fail_first_n = 0;        // HTTP 500 for the first N /similarity calls
  int unhealthy_first_n = 0;   // HTTP 503 for the first N /health calls
  bool wrong_length = false;   // drop the last score
  bool out_of_range = false;   // first score becomes 1.5
};

/// Scores without models: embedding = token Jaccard, nli = |A ∩ B| / |B|, the
/// share of the hypothesis tokens found in the premise.
std::vector<double> mock_scores(const sim::SimilarityRequest& req);

class MockSimServer {
 public:
  explicit MockSimServer(SimFaults faults = {}, int port = 0);
  ~MockSimServer();
  MockSimServer(const MockSimServer&) = delete;
  MockSimServer& operator=(const MockSimServer&) = delete;

  int port() const;
  std::string endpoint() const;
  // Pair count of each /similarity request received.
  std::vector<std::size_t> batch_sizes() const;
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uqgate::mock
