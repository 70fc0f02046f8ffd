#include "fusionbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fusionbench/errors.hpp"

namespace fusionbench {

int default_epochs(ModelKind kind) { return kind == ModelKind::MLP ? 500 : 20; }

OptimizerSpec default_optimizer(ModelKind kind) {
    return kind == ModelKind::MLP ? OptimizerSpec::sgd() : OptimizerSpec::adam();
}

void save_history(const TrainHistory& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_history: cannot open " + path);
    out << "epoch\ttrain_loss\ttrain_accuracy\tvalidation_accuracy\n";
    char buf[128];
    for (std::size_t e = 0; e < h.epochs.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\n", e + 1, h.epochs[e].train_loss,
                      h.epochs[e].train_accuracy, h.epochs[e].validation_accuracy);
        out << buf;
    }
}

std::vector<int> argmax_rows(const std::vector<double>& rows, int n_classes) {
    const std::size_t n = rows.size() / n_classes;
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (rows[r * n_classes + c] > rows[r * n_classes + best]) best = c;
        out[r] = best;
    }
    return out;
}

double accuracy_against(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw DataError("accuracy: prediction/label length mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

double evaluate_accuracy(Model& model, const std::vector<PairedExample>& set) {
    if (set.empty()) return 0.0;
    std::vector<double> rows = predict_proba(model, set);
    std::vector<int> truth(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) truth[i] = static_cast<int>(set[i].label);
    return accuracy_against(argmax_rows(rows, model.config.n_classes), truth);
}

}  // namespace

TrainHistory train(Model& model, const std::vector<PairedExample>& train_set,
                   const std::vector<PairedExample>& validation_set, const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw DataError("train: epochs must be >= 0");
    if (cfg.batch_size < 1) throw DataError("train: batch_size must be >= 1");
    if (train_set.empty() && cfg.epochs > 0) throw DataError("train: empty training set");

    TrainHistory history;
    Optimizer<float> opt(cfg.optimizer);
    const Rng master(cfg.seed);
    const int k = model.config.n_classes;

    std::vector<std::size_t> order(train_set.size());
    Tape<float> tape;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = master.derive(0xE, epoch);
        Rng dropout_rng = master.derive(0xD, epoch);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t hit = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count =
                std::min<std::size_t>(cfg.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, count);
            tape.reset();
            Tensor<float> batch = assemble_batch(train_set, idx, model);
            Tensor<float> labels = one_hot_batch(train_set, idx, k);
            Val<float> probs = model.forward(tape, batch, Mode::Train, dropout_rng);
            Val<float> loss = tape.cross_entropy(probs, labels);
            const double loss_value = static_cast<double>(loss.value()[0]);
            if (std::isnan(loss_value)) {
                if (cfg.abort_on_nan)
                    throw NumericError("train: NaN loss at epoch " + std::to_string(epoch + 1) +
                                       ", batch " + std::to_string(start / cfg.batch_size + 1));
            }
            loss_sum += loss_value * static_cast<double>(count);

            const Tensor<float>& pv = probs.value();
            for (std::size_t r = 0; r < count; ++r) {
                int best = 0;
                for (int c = 1; c < k; ++c)
                    if (pv[r * k + c] > pv[r * k + best]) best = c;
                if (best == static_cast<int>(train_set[idx[r]].label)) ++hit;
            }

            opt.zero_grad(model.params);
            tape.backward(loss);
            opt.step(model.params);
        }
        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(train_set.size());
        stats.train_accuracy = static_cast<double>(hit) / static_cast<double>(train_set.size());
        stats.validation_accuracy = evaluate_accuracy(model, validation_set);
        history.epochs.push_back(stats);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d/%d loss %.4f train_acc %.4f val_acc %.4f\n", epoch + 1,
                         cfg.epochs, stats.train_loss, stats.train_accuracy,
                         stats.validation_accuracy);
    }
    tape.reset();
    return history;
}

std::size_t select_best(const std::vector<TrainHistory>& candidates) {
    if (candidates.empty()) throw DataError("select_best: empty candidate list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i].final_validation_accuracy() >
            candidates[best].final_validation_accuracy())
            best = i;
    return best;
}

std::map<SensorId, std::size_t> select_best_per_sensor(
    const std::map<SensorId, std::vector<TrainHistory>>& candidates) {
    std::map<SensorId, std::size_t> out;
    for (const auto& [sensor, list] : candidates) {
        if (list.empty())
            throw DataError("select_best_per_sensor: no candidates for " + sensor_name(sensor));
        out[sensor] = select_best(list);
    }
    return out;
}

std::string search_point_str(const SearchPoint& p) {
    std::string s;
    for (const auto& [name, value] : p) {
        if (!s.empty()) s += " ";
        s += name + "=" + value;
    }
    return s;
}

SearchResult hyperparameter_search(const SearchSpace& space, SearchStrategy strategy, int budget,
                                   std::uint64_t seed,
                                   const std::function<double(const SearchPoint&)>& objective) {
    if (budget < 1) throw DataError("hyperparameter_search: budget must be >= 1");
    if (space.axes.empty()) throw DataError("hyperparameter_search: empty search space");
    for (const auto& axis : space.axes)
        if (axis.values.empty())
            throw DataError("hyperparameter_search: axis '" + axis.name + "' has no values");

    std::vector<SearchPoint> points;
    if (strategy == SearchStrategy::Grid) {
        std::size_t total = 1;
        for (const auto& axis : space.axes) total *= axis.values.size();
        total = std::min<std::size_t>(total, budget);
        for (std::size_t i = 0; i < total; ++i) {
            SearchPoint p;
            std::size_t rem = i;
            for (std::size_t a = space.axes.size(); a-- > 0;) {
                const auto& axis = space.axes[a];
                p.emplace_back(axis.name, axis.values[rem % axis.values.size()]);
                rem /= axis.values.size();
            }
            std::reverse(p.begin(), p.end());
            points.push_back(std::move(p));
        }
    } else {
        const Rng master(seed);
        for (int i = 0; i < budget; ++i) {
            SearchPoint p;
            for (std::size_t a = 0; a < space.axes.size(); ++a) {
                Rng r = master.derive(i, a);
                const auto& axis = space.axes[a];
                p.emplace_back(axis.name, axis.values[r.next_below(axis.values.size())]);
            }
            points.push_back(std::move(p));
        }
    }

    SearchResult result;
    bool any_finite = false;
    for (auto& point : points) {
        double value = objective(point);
        if (std::isnan(value)) value = -std::numeric_limits<double>::infinity();
        else any_finite = true;
        result.trials.push_back({std::move(point), value});
    }
    if (!any_finite)
        throw NumericError("hyperparameter_search: every trial in the budget failed (NaN)");
    for (std::size_t i = 1; i < result.trials.size(); ++i)
        if (result.trials[i].objective > result.trials[result.best_index].objective)
            result.best_index = i;
    return result;
}

void apply_search_point(const SearchPoint& p, ModelConfig& mc, TrainConfig& tc) {
    for (const auto& [name, value] : p) {
        try {
            if (name == "lr") tc.optimizer.learning_rate = std::stod(value);
            else if (name == "epochs") tc.epochs = std::stoi(value);
            else if (name == "batch_size") tc.batch_size = std::stoi(value);
            else if (name == "dropout") mc.dropout_rate = std::stod(value);
            else if (name == "optimizer") {
                const double lr = tc.optimizer.learning_rate;
                if (value == "sgd") tc.optimizer = OptimizerSpec::sgd(lr);
                else if (value == "adam") tc.optimizer = OptimizerSpec::adam(lr);
                else throw DataError("apply_search_point: unknown optimizer '" + value + "'");
            } else {
                throw DataError("apply_search_point: unknown axis '" + name + "'");
            }
        } catch (const std::invalid_argument&) {
            throw DataError("apply_search_point: bad value '" + value + "' for axis '" + name + "'");
        }
    }
}

}  // namespace fusionbench
