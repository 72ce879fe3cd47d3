// Wall-clock comparison of the serial reference kernels and their OpenMP
// counterparts. Usage: bench_kernels [repeats]
#include "coherency/dictionary.hpp"
#include "coherency/experiments.hpp"
#include "coherency/mcg.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

using namespace coherency;

namespace {

double best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-34s %10.4f %10.4f %8.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d\n%-34s %10s %10s %9s\n", omp_get_max_threads(), "kernel", "serial[s]", "omp[s]", "speedup");

  const Dictionary d = gen_gaussian(15, 25, 7);
  const Eigen::MatrixXd gram = d.gram();
  row("ill subsets 15x25 order 5", best_of(repeats, [&] { enumerate_ill_subsets_serial(gram, 5, 0.4); }),
      best_of(repeats, [&] { enumerate_ill_subsets(gram, 5, 0.4); }));
  row("worst subdictionary 15x25 s=6", best_of(repeats, [&] { worst_subdictionary_serial(d, 6); }),
      best_of(repeats, [&] { worst_subdictionary(d, 6); }));

  const Dictionary big = gen_gaussian(40, 80, 7);
  const Eigen::MatrixXd big_gram = big.gram();
  row("ill subsets 40x80 order 3", best_of(repeats, [&] { enumerate_ill_subsets_serial(big_gram, 3, 0.4); }),
      best_of(repeats, [&] { enumerate_ill_subsets(big_gram, 3, 0.4); }));

  TrialSpec spec;
  spec.dictionary = {"gaussian", 15, 25, 7};
  spec.sparsity = {5, 7};
  spec.trials_per_s = 200;
  spec.master_seed = 1;
  spec.solvers = {{SolverKind::Irls, "irls", {}}};
  spec.threads = 1;
  const double serial = best_of(repeats, [&] { run_recovery_sweep(spec); });
  spec.threads = 0;
  row("irls sweep 15x25, 400 trials", serial, best_of(repeats, [&] { run_recovery_sweep(spec); }));
}
