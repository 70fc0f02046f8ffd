#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fusionbench/autograd.hpp"
#include "fusionbench/dataset.hpp"
#include "fusionbench/params.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench {

enum class ModelKind { MLP, CNN1, CNN2 };

const std::string& model_kind_name(ModelKind k);  // mlp|cnn1|cnn2
ModelKind model_kind_from_name(const std::string& name);

// Declarative architecture description. The defaults reproduce the three
// reference architectures; overrides exist for the search harness.
struct ModelConfig {
    ModelKind kind = ModelKind::CNN1;
    Shape input_shape;  // MLP: {D}; CNNs: {S,S,C}
    int n_classes = 4;

    std::vector<int> mlp_hidden = {120, 80, 40};     // tanh stack
    std::vector<int> conv_filters = {32, 64, 128};   // conv+relu+pool blocks
    int cnn1_dense = 128;                            // relu head
    std::vector<int> cnn2_hidden = {480, 224, 32};   // sigmoid, relu, relu
    double dropout_rate = 0.2;                       // CNN-2 only, after flatten
};

struct LayerSpec {
    enum class Kind { Dense, Conv2d, MaxPool2d, Dropout, Relu, Tanh, Sigmoid, Softmax, Flatten };
    Kind kind;
    int units = 0;        // dense width or conv filter count
    double rate = 0.0;    // dropout
    int kernel_idx = -1;  // index into Model::params
    int bias_idx = -1;
};

class Model {
public:
    ModelConfig config;
    std::vector<LayerSpec> layers;
    std::vector<Parameter<float>> params;

    // Runs the layer sequence over a batch ([N,D] or [N,S,S,C]); the rng
    // only feeds dropout in train mode.
    Val<float> forward(Tape<float>& tape, const Tensor<float>& batch, Mode mode, Rng& rng);

    std::size_t param_count() const;
    // One line per layer, e.g. "conv2d(3x3, 32 filters, valid) relu".
    std::vector<std::string> describe() const;
};

// Glorot-initialized model; identical parameters for identical (config, seed).
Model build(const ModelConfig& config, std::uint64_t seed);

// Batch of inputs in the form the model expects; examples may be stored in
// CNN form and are rearranged for MLP models.
Tensor<float> assemble_batch(std::span<const PairedExample> examples,
                             std::span<const std::size_t> indices, const Model& model);
Tensor<float> one_hot_batch(std::span<const PairedExample> examples,
                            std::span<const std::size_t> indices, int n_classes);

// Class-probability rows (n x n_classes, doubles) in eval mode; dropout
// disabled, so repeated calls are identical.
std::vector<double> predict_proba(Model& model, std::span<const PairedExample> examples,
                                  int batch_size = 256);

void save_model(const Model& model, const std::string& dir);
Model load_model(const std::string& dir);

}  // namespace fusionbench
