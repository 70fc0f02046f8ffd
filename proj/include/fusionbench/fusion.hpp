#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusionbench/metrics.hpp"

namespace fusionbench {

// Per-sensor class probabilities, one row per example, aligned across
// sensors by trial key. Fusion arithmetic stays in doubles end to end.
struct ProbabilityMatrix {
    std::vector<std::string> keys;
    int n_classes = 4;
    std::vector<double> rows;  // keys.size() x n_classes

    std::size_t size() const { return keys.size(); }
    const double* row(std::size_t i) const { return rows.data() + i * n_classes; }
};

inline constexpr const char* kProbsVersion = "fusionbench-probs-v1";

void save_probability_matrix(const ProbabilityMatrix& m, const std::string& sensor,
                             const std::string& path);
// Returns the matrix and the sensor name stored with it.
std::pair<ProbabilityMatrix, std::string> load_probability_matrix(const std::string& path);

// True class codes recovered from the action segment of each trial key.
std::vector<int> labels_from_keys(const ProbabilityMatrix& m);

// Normalized non-negative per-sensor coefficients.
struct FusionWeights {
    std::vector<std::string> sensors;
    std::vector<double> weights;  // sum 1
};

FusionWeights make_weights(std::vector<std::string> sensors, std::vector<double> raw);
void save_weights(const FusionWeights& w, const std::string& path);
FusionWeights load_weights(const std::string& path);

// Elementwise mean of aligned matrices (the "average DLF" of the paper).
ProbabilityMatrix fuse_average(const std::vector<ProbabilityMatrix>& mats);

// Convex combination sum_s w_s * row_s; weights are normalized first and
// must be non-negative.
ProbabilityMatrix fuse_weighted(const std::vector<ProbabilityMatrix>& mats,
                                const std::vector<double>& weights);

// Per-row argmax; ties go to the lowest class code.
std::vector<int> decide(const ProbabilityMatrix& m);

double fused_accuracy(const std::vector<ProbabilityMatrix>& mats, const std::vector<int>& labels,
                      const std::vector<double>& weights);

// Index of the candidate weight vector with the best fused validation
// accuracy; ties go to the first.
std::size_t best_candidate_index(const std::vector<ProbabilityMatrix>& mats,
                                 const std::vector<int>& labels,
                                 const std::vector<std::vector<double>>& candidates);

// Random coefficient search over the validation set: per repeat, draw
// n_candidates vectors uniform in [0,1]^S with the equal-weights vector
// injected into every pool, keep the most accurate, and average the
// winners. The result never scores below equal weights on the validation
// set, so weighted fusion cannot fall behind average fusion there.
FusionWeights search_weights(const std::vector<ProbabilityMatrix>& validation_mats,
                             const std::vector<int>& validation_labels,
                             const std::vector<std::string>& sensor_names, int n_repeats,
                             int n_candidates, std::uint64_t seed);

// fuse_weighted + decide + metrics in one step (the paper's post-processing
// upper-bound analysis runs through this with fixed weights).
MetricsReport evaluate_fixed_weights(const std::vector<ProbabilityMatrix>& mats,
                                     const std::vector<int>& labels,
                                     const std::vector<double>& weights);

}  // namespace fusionbench
