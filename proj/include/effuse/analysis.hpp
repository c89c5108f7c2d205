#pragma once

#include <string>
#include <vector>

#include "effuse/config.hpp"
#include "effuse/fusion.hpp"
#include "effuse/synth.hpp"
#include "effuse/tensor.hpp"

namespace effuse {

struct LinearFit {
    Tensor weights;    // [r_src x r_tgt]
    Tensor intercept;  // [r_tgt]
};

// Least-squares with intercept via normal equations on centered data,
// ridge-stabilized. Requires more rows than source columns.
LinearFit fit_linear(const Tensor& x, const Tensor& y, double ridge_eps);

// Matrix coefficient of determination:
// 1 - ||Y - XW - b||_F^2 / ||Y - mean_rows(Y)||_F^2.
double r_squared(const Tensor& x, const Tensor& y, const Tensor& w, const Tensor& b);

// Square matrix of cross-encoder R^2 values; diagonal not applicable.
struct R2Table {
    std::vector<std::string> ids;
    std::vector<double> values;  // n*n, row = input encoder, col = target

    double at(std::size_t input, std::size_t target) const {
        return values[input * ids.size() + target];
    }
};

// Fits every ordered encoder pair on weighted-sum features pooled from a
// seeded utterance sample, using the model's learned layer weights. Rows are
// aligned per pair by pooling to the pair's coarser frame rate.
R2Table predictability_table(const FusionModel& model, const Corpus& corpus, const AnalysisConfig& cfg);

// CSV with a header row/column of encoder ids and NA on the diagonal.
std::string r2_table_csv(const R2Table& table);

}  // namespace effuse
