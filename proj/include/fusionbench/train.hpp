#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fusionbench/models.hpp"
#include "fusionbench/optim.hpp"

namespace fusionbench {

struct TrainConfig {
    int epochs = 20;  // reference regimes: 500 for the MLP, 20 for the CNNs
    int batch_size = 32;
    OptimizerSpec optimizer = OptimizerSpec::adam();
    std::uint64_t seed = 0;
    bool abort_on_nan = true;
    bool verbose = false;
};

int default_epochs(ModelKind kind);  // MLP 500, CNNs 20
OptimizerSpec default_optimizer(ModelKind kind);  // MLP: SGD, CNNs: Adam

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    double final_validation_accuracy() const {
        return epochs.empty() ? -1.0 : epochs.back().validation_accuracy;
    }
};

void save_history(const TrainHistory& h, const std::string& path);

// Class codes predicted for a flat probability row-matrix (argmax per row,
// ties to the lowest code).
std::vector<int> argmax_rows(const std::vector<double>& rows, int n_classes);
double accuracy_against(const std::vector<int>& predicted, const std::vector<int>& truth);

// Seeded mini-batch training: per epoch, shuffle the training set, run
// forward/loss/backward/step per batch, then score the validation set.
// Mutates the model parameters in place.
TrainHistory train(Model& model, const std::vector<PairedExample>& train_set,
                   const std::vector<PairedExample>& validation_set, const TrainConfig& cfg);

// Index of the candidate with the highest final validation accuracy; ties
// go to the earlier candidate.
std::size_t select_best(const std::vector<TrainHistory>& candidates);
std::map<SensorId, std::size_t> select_best_per_sensor(
    const std::map<SensorId, std::vector<TrainHistory>>& candidates);

// ---- hyperparameter search ----

struct SearchAxis {
    std::string name;
    std::vector<std::string> values;
};

struct SearchSpace {
    std::vector<SearchAxis> axes;
};

using SearchPoint = std::vector<std::pair<std::string, std::string>>;

enum class SearchStrategy { Grid, Random };

struct SearchTrial {
    SearchPoint point;
    double objective = 0.0;
};

struct SearchResult {
    std::size_t best_index = 0;
    std::vector<SearchTrial> trials;
};

std::string search_point_str(const SearchPoint& p);

// Generic harness: evaluates budget points (grid = cartesian order with the
// last axis fastest, capped at budget; random = per-axis uniform draws) and
// returns the argmax with the full trial log. Ties go to the earlier trial.
SearchResult hyperparameter_search(const SearchSpace& space, SearchStrategy strategy, int budget,
                                   std::uint64_t seed,
                                   const std::function<double(const SearchPoint&)>& objective);

// Interprets the conventional axis names (lr, epochs, batch_size,
// optimizer, dropout) onto configs; unknown names are an error.
void apply_search_point(const SearchPoint& p, ModelConfig& mc, TrainConfig& tc);

}  // namespace fusionbench
