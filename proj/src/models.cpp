#include "fusionbench/models.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fusionbench/errors.hpp"
#include "fusionbench/init.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fusionbench {

namespace {

const std::array<std::string, 3> kKindNames = {"mlp", "cnn1", "cnn2"};

struct Builder {
    Model model;
    Rng rng;
    Shape cur;  // shape of one example flowing through the stack

    explicit Builder(Rng r) : rng(r) {}

    int add_param(const std::string& name, Shape shape, bool glorot) {
        Parameter<float> p;
        p.name = name;
        p.value = glorot ? glorot_init<float>(shape, rng) : Tensor<float>(shape);
        model.params.push_back(std::move(p));
        return static_cast<int>(model.params.size() - 1);
    }

    void dense(const std::string& name, int units) {
        if (cur.size() != 1)
            throw ShapeError("build: dense '" + name + "' expects a flat input, have " +
                             shape_str(cur));
        LayerSpec l{LayerSpec::Kind::Dense, units};
        l.kernel_idx = add_param(name + ".weight", {cur[0], static_cast<std::size_t>(units)}, true);
        l.bias_idx = add_param(name + ".bias", {static_cast<std::size_t>(units)}, false);
        model.layers.push_back(l);
        cur = {static_cast<std::size_t>(units)};
    }

    void conv(const std::string& name, int filters) {
        if (cur.size() != 3)
            throw ShapeError("build: conv '" + name + "' expects [S,S,C], have " + shape_str(cur));
        if (cur[0] < 3 || cur[1] < 3)
            throw ShapeError("build: conv '" + name + "' input " + shape_str(cur) +
                             " is smaller than the 3x3 kernel");
        LayerSpec l{LayerSpec::Kind::Conv2d, filters};
        l.kernel_idx =
            add_param(name + ".kernel", {3, 3, cur[2], static_cast<std::size_t>(filters)}, true);
        l.bias_idx = add_param(name + ".bias", {static_cast<std::size_t>(filters)}, false);
        model.layers.push_back(l);
        cur = {cur[0] - 2, cur[1] - 2, static_cast<std::size_t>(filters)};
    }

    void pool() {
        if (cur[0] < 2 || cur[1] < 2)
            throw ShapeError("build: maxpool input " + shape_str(cur) + " is smaller than 2x2");
        model.layers.push_back({LayerSpec::Kind::MaxPool2d});
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
    }

    void act(LayerSpec::Kind kind) { model.layers.push_back({kind}); }

    void flatten() {
        model.layers.push_back({LayerSpec::Kind::Flatten});
        cur = {shape_numel(cur)};
    }

    void dropout(double rate) {
        LayerSpec l{LayerSpec::Kind::Dropout};
        l.rate = rate;
        model.layers.push_back(l);
    }
};

}  // namespace

const std::string& model_kind_name(ModelKind k) { return kKindNames[static_cast<int>(k)]; }

ModelKind model_kind_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == name) return static_cast<ModelKind>(i);
    throw DataError("unknown model kind '" + name + "'");
}

Model build(const ModelConfig& config, std::uint64_t seed) {
    if (config.input_shape.empty()) throw ShapeError("build: input_shape is empty");
    if (config.kind == ModelKind::MLP && config.input_shape.size() != 1)
        throw ShapeError("build: MLP wants a flat input, got " + shape_str(config.input_shape));
    if (config.kind != ModelKind::MLP && config.input_shape.size() != 3)
        throw ShapeError("build: CNNs want [S,S,C] input, got " + shape_str(config.input_shape));

    Builder b(Rng(seed));
    b.cur = config.input_shape;
    b.model.config = config;

    if (config.kind == ModelKind::MLP) {
        for (std::size_t i = 0; i < config.mlp_hidden.size(); ++i) {
            b.dense("dense" + std::to_string(i + 1), config.mlp_hidden[i]);
            b.act(LayerSpec::Kind::Tanh);
        }
    } else {
        for (std::size_t i = 0; i < config.conv_filters.size(); ++i) {
            b.conv("conv" + std::to_string(i + 1), config.conv_filters[i]);
            b.act(LayerSpec::Kind::Relu);
            b.pool();
        }
        b.flatten();
        if (config.kind == ModelKind::CNN1) {
            b.dense("fc1", config.cnn1_dense);
            b.act(LayerSpec::Kind::Relu);
        } else {
            b.dropout(config.dropout_rate);
            static const LayerSpec::Kind acts[3] = {LayerSpec::Kind::Sigmoid,
                                                    LayerSpec::Kind::Relu, LayerSpec::Kind::Relu};
            for (std::size_t i = 0; i < config.cnn2_hidden.size(); ++i) {
                b.dense("hidden" + std::to_string(i + 1), config.cnn2_hidden[i]);
                b.act(acts[std::min<std::size_t>(i, 2)]);
            }
        }
    }
    b.dense("out", config.n_classes);
    b.act(LayerSpec::Kind::Softmax);

    std::set<std::string> names;
    for (const auto& p : b.model.params)
        if (!names.insert(p.name).second)
            throw DataError("build: duplicate parameter name " + p.name);
    return std::move(b.model);
}

Val<float> Model::forward(Tape<float>& tape, const Tensor<float>& batch, Mode mode, Rng& rng) {
    const Shape& in = config.input_shape;
    Shape expected{batch.dim(0)};
    expected.insert(expected.end(), in.begin(), in.end());
    if (batch.shape() != expected)
        throw ShapeError("forward: batch " + shape_str(batch.shape()) + " does not match model input " +
                         shape_str(expected));
    Val<float> cur = tape.leaf(batch);
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                cur = tape.dense(cur, tape.param(params[l.kernel_idx]),
                                 tape.param(params[l.bias_idx]));
                break;
            case LayerSpec::Kind::Conv2d:
                cur = tape.conv2d(cur, tape.param(params[l.kernel_idx]),
                                  tape.param(params[l.bias_idx]));
                break;
            case LayerSpec::Kind::MaxPool2d: cur = tape.maxpool2d(cur); break;
            case LayerSpec::Kind::Dropout: cur = tape.dropout(cur, l.rate, mode, rng); break;
            case LayerSpec::Kind::Relu: cur = tape.relu(cur); break;
            case LayerSpec::Kind::Tanh: cur = tape.tanh_act(cur); break;
            case LayerSpec::Kind::Sigmoid: cur = tape.sigmoid(cur); break;
            case LayerSpec::Kind::Softmax: cur = tape.softmax(cur); break;
            case LayerSpec::Kind::Flatten: cur = tape.flatten(cur); break;
        }
    }
    return cur;
}

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
}

std::vector<std::string> Model::describe() const {
    std::vector<std::string> out;
    std::string pending;
    auto flush = [&] {
        if (!pending.empty()) out.push_back(pending);
        pending.clear();
    };
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                flush();
                pending = "dense(" + std::to_string(l.units) + ")";
                break;
            case LayerSpec::Kind::Conv2d:
                flush();
                pending = "conv2d(3x3, " + std::to_string(l.units) + " filters, valid)";
                break;
            case LayerSpec::Kind::MaxPool2d:
                flush();
                out.push_back("maxpool2d(2x2, stride 2)");
                break;
            case LayerSpec::Kind::Dropout: {
                flush();
                std::ostringstream os;
                os << "dropout(" << l.rate << ")";
                out.push_back(os.str());
                break;
            }
            case LayerSpec::Kind::Relu: pending += " relu"; flush(); break;
            case LayerSpec::Kind::Tanh: pending += " tanh"; flush(); break;
            case LayerSpec::Kind::Sigmoid: pending += " sigmoid"; flush(); break;
            case LayerSpec::Kind::Softmax: pending += " softmax"; flush(); break;
            case LayerSpec::Kind::Flatten:
                flush();
                out.push_back("flatten");
                break;
        }
    }
    flush();
    return out;
}

Tensor<float> assemble_batch(std::span<const PairedExample> examples,
                             std::span<const std::size_t> indices, const Model& model) {
    if (indices.empty()) throw DataError("assemble_batch: empty batch");
    const bool wants_flat = model.config.kind == ModelKind::MLP;
    Shape out_shape{indices.size()};
    const Shape& in = model.config.input_shape;
    out_shape.insert(out_shape.end(), in.begin(), in.end());
    Tensor<float> batch(out_shape);
    const std::size_t stride = shape_numel(in);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const PairedExample& ex = examples[indices[i]];
        const Tensor<float>* src = &ex.input;
        Tensor<float> converted;
        if (wants_flat && ex.input.ndim() == 3) {
            converted = cnn_to_mlp_input(ex.input);
            src = &converted;
        } else if (!wants_flat && ex.input.ndim() != 3) {
            throw ShapeError("assemble_batch: CNN model needs CNN-form examples, got " +
                             shape_str(ex.input.shape()));
        }
        if (src->numel() != stride)
            throw ShapeError("assemble_batch: example " + shape_str(src->shape()) +
                             " does not match model input " + shape_str(in));
        std::copy(src->data().begin(), src->data().end(), batch.data().begin() + i * stride);
    }
    return batch;
}

Tensor<float> one_hot_batch(std::span<const PairedExample> examples,
                            std::span<const std::size_t> indices, int n_classes) {
    Tensor<float> labels({indices.size(), static_cast<std::size_t>(n_classes)});
    for (std::size_t i = 0; i < indices.size(); ++i)
        labels[i * n_classes + static_cast<int>(examples[indices[i]].label)] = 1.0f;
    return labels;
}

std::vector<double> predict_proba(Model& model, std::span<const PairedExample> examples,
                                  int batch_size) {
    const int k = model.config.n_classes;
    std::vector<double> rows;
    rows.reserve(examples.size() * k);
    Rng rng(0);  // never consumed in eval mode
    Tape<float> tape;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const std::size_t count = std::min<std::size_t>(batch_size, examples.size() - start);
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
        tape.reset();
        Tensor<float> batch = assemble_batch(examples, idx, model);
        Val<float> probs = model.forward(tape, batch, Mode::Eval, rng);
        const Tensor<float>& v = probs.value();
        for (std::size_t i = 0; i < v.numel(); ++i) rows.push_back(static_cast<double>(v[i]));
    }
    return rows;
}

void save_model(const Model& model, const std::string& dir) {
    fs::create_directories(dir);
    json j;
    j["kind"] = model_kind_name(model.config.kind);
    j["input_shape"] = model.config.input_shape;
    j["n_classes"] = model.config.n_classes;
    j["mlp_hidden"] = model.config.mlp_hidden;
    j["conv_filters"] = model.config.conv_filters;
    j["cnn1_dense"] = model.config.cnn1_dense;
    j["cnn2_hidden"] = model.config.cnn2_hidden;
    j["dropout_rate"] = model.config.dropout_rate;
    j["structure"] = model.describe();
    std::ofstream out(fs::path(dir) / "model.json");
    if (!out) throw DataError("save_model: cannot write to " + dir);
    out << j.dump(2) << "\n";
    save_parameters((fs::path(dir) / "params.bin").string(), model.params);
}

Model load_model(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "model.json");
    if (!in) throw DataError("load_model: cannot open " + dir + "/model.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("load_model: " + dir + "/model.json: " + e.what());
    }
    ModelConfig cfg;
    cfg.kind = model_kind_from_name(j.at("kind").get<std::string>());
    cfg.input_shape = j.at("input_shape").get<Shape>();
    cfg.n_classes = j.at("n_classes").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
    cfg.conv_filters = j.at("conv_filters").get<std::vector<int>>();
    cfg.cnn1_dense = j.at("cnn1_dense").get<int>();
    cfg.cnn2_hidden = j.at("cnn2_hidden").get<std::vector<int>>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    Model model = build(cfg, 0);
    auto loaded = load_parameters<float>((fs::path(dir) / "params.bin").string());
    if (loaded.size() != model.params.size())
        throw DataError("load_model: " + dir + ": parameter count mismatch");
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        if (loaded[i].name != model.params[i].name ||
            loaded[i].value.shape() != model.params[i].value.shape())
            throw DataError("load_model: " + dir + ": parameter " + loaded[i].name +
                            " does not match the architecture");
        model.params[i].value = std::move(loaded[i].value);
    }
    return model;
}

}  // namespace fusionbench
