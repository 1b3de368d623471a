#include "vstop/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace vstop {

QuadRule gauss_legendre(int n, double a, double b) {
  QuadRule q;
  q.x.resize(n);
  q.w.resize(n);
  // Newton iteration on P_n starting from the Chebyshev-like guess.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    q.x[i] = -z;
    q.x[n - 1 - i] = z;
    q.w[i] = w;
    q.w[n - 1 - i] = w;
  }
  double c = 0.5 * (a + b), h = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    q.x[i] = c + h * q.x[i];
    q.w[i] *= h;
  }
  return q;
}

QuadRule composite_gauss_legendre(int n, int panels, double a, double b) {
  QuadRule q;
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    QuadRule r = gauss_legendre(n, a + p * h, a + (p + 1) * h);
    q.x.insert(q.x.end(), r.x.begin(), r.x.end());
    q.w.insert(q.w.end(), r.w.begin(), r.w.end());
  }
  return q;
}

namespace {
std::atomic<int> g_workers{0};
}

void set_worker_count(int n) { g_workers = std::max(0, n); }

int worker_count() {
  int n = g_workers.load();
  if (n > 0) return n;
  if (const char* env = std::getenv("VSTOP_THREADS")) {
    int e = std::atoi(env);
    if (e > 0) return e;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(m);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace vstop
