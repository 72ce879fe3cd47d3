#include "coherency/symmetric_eigen.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <vector>

namespace coherency {

namespace {

constexpr int kMaxSweeps = 64;

}  // namespace

void jacobi_eigenvalues(std::span<double> a, int n, std::span<double> eig) {
  assert(a.size() >= static_cast<std::size_t>(n * n));
  assert(eig.size() >= static_cast<std::size_t>(n));
  auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r * n + c)]; };

  // Mirror the upper triangle so rotations can touch both halves uniformly.
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c) at(c, r) = at(r, c);

  double scale = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) scale = std::max(scale, std::abs(at(r, c)));
  const double eps = std::numeric_limits<double>::epsilon();

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (std::sqrt(off) <= eps * scale * 0.5) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double app = at(p, p);
        const double aqq = at(q, q);
        // Rotation angle chosen so the (p, q) entry vanishes; smaller root for stability.
        const double theta = (aqq - app) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        at(p, p) = app - t * apq;
        at(q, q) = aqq + t * apq;
        at(p, q) = 0.0;
        at(q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = at(r, p);
          const double arq = at(r, q);
          const double nrp = c * arp - s * arq;
          const double nrq = s * arp + c * arq;
          at(r, p) = nrp;
          at(p, r) = nrp;
          at(r, q) = nrq;
          at(q, r) = nrq;
        }
      }
    }
  }

  for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = at(i, i);
  std::sort(eig.begin(), eig.begin() + n);
}

double jacobi_min_eigenvalue(std::span<double> a, int n) {
  if (n == 1) return a[0];
  if (n == 2) {
    // Closed form: mean minus half the spread.
    const double m = 0.5 * (a[0] + a[3]);
    const double d = 0.5 * (a[0] - a[3]);
    return m - std::hypot(d, a[1]);
  }
  double diag[64];
  if (n <= 64) {
    jacobi_eigenvalues(a, n, std::span<double>(diag, static_cast<std::size_t>(n)));
    return diag[0];
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  jacobi_eigenvalues(a, n, eig);
  return eig[0];
}

}  // namespace coherency
