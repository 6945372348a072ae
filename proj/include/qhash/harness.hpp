#pragma once

#include <cstddef>
#include <cstdint>

#include "qhash/codes.hpp"
#include "qhash/core.hpp"
#include "qhash/metric.hpp"
#include "qhash/trainer.hpp"

namespace qhash {

/// Class means uniform in [-1, 1], lambda uniform in [0, 1].
AssignmentProblem random_assignment_problem(std::size_t n_c, std::size_t d, std::size_t k, Rng& rng);

struct BenchPoint {
  std::size_t n_c = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t repeats = 0;
  double mean_seconds = 0.0;
};

/// Mean wall-clock time of solve_assignment over `repeats` random instances.
/// Instance generation is outside the timed region.
BenchPoint bench_assignment(std::size_t n_c, std::size_t d, std::size_t k, std::size_t repeats, Rng& rng);

struct GradcheckShape {
  std::size_t classes = 4;
  std::size_t per_class = 3;  // forced to 2 for npairs
  std::size_t dim = 8;
  std::size_t k = 2;
};

/// A random batch away from every kink of the loss: coordinate gaps on the
/// masked dimensions, distance gaps that decide mining, and active hinges
/// all exceed `margin`. Codes are drawn per class.
Batch random_smooth_batch(LossKind kind, const GradcheckShape& shape, const LossConfig& cfg, Rng& rng,
                          double margin = 1e-3);

/// Worst finite-difference relative error over `batches` smooth batches.
double gradcheck(LossKind kind, const GradcheckShape& shape, const LossConfig& cfg, std::size_t batches,
                 double epsilon, Rng& rng);

}  // namespace qhash
