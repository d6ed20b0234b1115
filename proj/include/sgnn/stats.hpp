#pragma once

#include <span>

namespace sgnn {

double mean(std::span<const double> xs);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> xs);
// Pearson correlation of average ranks. Returns 0 when either side is constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace sgnn
