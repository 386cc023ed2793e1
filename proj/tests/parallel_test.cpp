#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "invtrans/errors.hpp"
#include "invtrans/parallel.hpp"

using namespace invtrans;

TEST_CASE("worker resolution: explicit, then environment, then hardware") {
  CHECK(resolve_workers(5) == 5);
  CHECK(resolve_workers(1) == 1);

  setenv("INVTRANS_WORKERS", "3", 1);
  CHECK(resolve_workers(0) == 3);
  CHECK(resolve_workers(2) == 2);  // explicit beats the environment
  CHECK(resolve_workers(-1) == 3);

  setenv("INVTRANS_WORKERS", "garbage", 1);
  CHECK(resolve_workers(0) >= 1);
  setenv("INVTRANS_WORKERS", "-4", 1);
  CHECK(resolve_workers(0) >= 1);

  unsetenv("INVTRANS_WORKERS");
  CHECK(resolve_workers(0) >= 1);
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (int workers : {1, 2, 7}) {
    const std::size_t n = 101;
    std::vector<std::atomic<int>> hits(n);
    std::atomic<std::size_t> max_worker{0};
    parallel_for(n, workers, [&](std::size_t i, std::size_t w) {
      hits[i].fetch_add(1);
      std::size_t cur = max_worker.load();
      while (w > cur && !max_worker.compare_exchange_weak(cur, w)) {
      }
    });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK(max_worker.load() < static_cast<std::size_t>(workers));
  }
}

TEST_CASE("parallel_for with no work returns immediately") {
  bool called = false;
  parallel_for(0, 4, [&](std::size_t, std::size_t) { called = true; });
  CHECK_FALSE(called);
}

TEST_CASE("exceptions from work items are rethrown to the caller") {
  for (int workers : {1, 3}) {
    CAPTURE(workers);
    try {
      parallel_for(20, workers, [](std::size_t i, std::size_t) {
        if (i == 7) fail(Errc::InvalidConfig, "boom");
      });
      FAIL("expected parallel_for to rethrow");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InvalidConfig);
    }
    CHECK_THROWS_AS(
        parallel_for(5, workers, [](std::size_t, std::size_t) { throw std::runtime_error("x"); }),
        std::runtime_error);
  }
}
