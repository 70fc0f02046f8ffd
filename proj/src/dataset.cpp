#include "fusionbench/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fusionbench/errors.hpp"
#include "fusionbench/image.hpp"
#include "fusionbench/rng.hpp"

namespace fs = std::filesystem;

namespace fusionbench {

namespace {

const std::array<std::string, 4> kSensorNames = {"color", "depth", "icub_left", "icub_right"};
const std::array<std::string, 4> kActionNames = {"push", "pull", "left_to_right", "right_to_left"};

int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw DataError("expected integer for " + what + ", got '" + s + "'");
    return v;
}

// Strips a literal prefix and parses the remaining digits ("obj07" -> 7).
int parse_prefixed(const std::string& name, const std::string& prefix, const std::string& what) {
    if (name.rfind(prefix, 0) != 0)
        throw DataError("expected " + what + " like '" + prefix + "N', got '" + name + "'");
    return parse_int(name.substr(prefix.size()), what);
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

}  // namespace

int sensor_channels(SensorId id) { return id == SensorId::Depth ? 1 : 3; }

const std::string& sensor_name(SensorId id) { return kSensorNames[static_cast<int>(id)]; }

SensorId sensor_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kSensorNames.size(); ++i)
        if (kSensorNames[i] == name) return static_cast<SensorId>(i);
    throw DataError("unknown sensor '" + name + "'");
}

const std::string& action_name(ActionLabel a) { return kActionNames[static_cast<int>(a)]; }

ActionLabel action_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kActionNames.size(); ++i)
        if (kActionNames[i] == name) return static_cast<ActionLabel>(i);
    throw DataError("unknown action '" + name + "'");
}

std::string trial_key_str(const TrialKey& k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "obj%02d.tool%d.%s.rep%d", k.object_id, k.tool_id,
                  action_name(k.action).c_str(), k.repetition);
    return buf;
}

TrialKey trial_key_from_str(const std::string& s) {
    std::array<std::string, 4> parts;
    std::size_t start = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t dot = i < 3 ? s.find('.', start) : s.size();
        if (dot == std::string::npos) throw DataError("bad trial key '" + s + "'");
        parts[i] = s.substr(start, dot - start);
        start = dot + 1;
    }
    TrialKey k;
    k.object_id = parse_prefixed(parts[0], "obj", "object id");
    k.tool_id = parse_prefixed(parts[1], "tool", "tool id");
    k.action = action_from_name(parts[2]);
    k.repetition = parse_prefixed(parts[3], "rep", "repetition");
    return k;
}

std::vector<TrialKey> Manifest::unique_keys() const {
    std::set<TrialKey> keys;
    for (const auto& r : records) keys.insert(r.key);
    return {keys.begin(), keys.end()};
}

std::vector<const TrialRecord*> Manifest::records_for(SensorId sensor) const {
    std::vector<const TrialRecord*> out;
    for (const auto& r : records)
        if (r.sensor == sensor) out.push_back(&r);
    return out;
}

Manifest scan_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw DataError("scan_dataset: no such directory: " + root);
    Manifest m;
    m.root = root;
    std::set<std::pair<SensorId, TrialKey>> seen;
    for (const auto& sensor_dir : sorted_subdirs(root)) {
        SensorId sensor;
        try {
            sensor = sensor_from_name(sensor_dir);
        } catch (const DataError&) {
            continue;  // unrelated directory
        }
        for (const auto& obj_dir : sorted_subdirs(fs::path(root) / sensor_dir)) {
            const int object_id = parse_prefixed(obj_dir, "obj", "object directory");
            for (const auto& tool_dir : sorted_subdirs(fs::path(root) / sensor_dir / obj_dir)) {
                const int tool_id = parse_prefixed(tool_dir, "tool", "tool directory");
                for (const auto& action_dir :
                     sorted_subdirs(fs::path(root) / sensor_dir / obj_dir / tool_dir)) {
                    const ActionLabel action = action_from_name(action_dir);
                    const fs::path action_path =
                        fs::path(root) / sensor_dir / obj_dir / tool_dir / action_dir;
                    for (const auto& rep_dir : sorted_subdirs(action_path)) {
                        TrialKey key{object_id, tool_id, action,
                                     parse_prefixed(rep_dir, "rep", "repetition directory")};
                        const fs::path trial = action_path / rep_dir;
                        const fs::path initial = trial / "initial.png";
                        const fs::path final_ = trial / "final.png";
                        const bool has_initial = fs::exists(initial);
                        const bool has_final = fs::exists(final_);
                        if (!has_initial || !has_final) {
                            m.incomplete.push_back(sensor_dir + "/" + trial_key_str(key) +
                                                   (has_initial ? " missing final image"
                                                                : " missing initial image"));
                            continue;
                        }
                        if (!seen.insert({sensor, key}).second)
                            throw DataError("scan_dataset: duplicate trial " + sensor_dir + "/" +
                                            trial_key_str(key));
                        for (const fs::path& p : {initial, final_}) {
                            auto [w, h] = read_png_dims(p.string());
                            if (m.native_width == 0) {
                                m.native_width = w;
                                m.native_height = h;
                            } else if (w != m.native_width || h != m.native_height) {
                                throw DataError("scan_dataset: " + p.string() + " is " +
                                                std::to_string(w) + "x" + std::to_string(h) +
                                                ", expected " + std::to_string(m.native_width) +
                                                "x" + std::to_string(m.native_height));
                            }
                        }
                        TrialRecord rec;
                        rec.sensor = sensor;
                        rec.key = key;
                        rec.initial_path = fs::relative(initial, root).string();
                        rec.final_path = fs::relative(final_, root).string();
                        m.records.push_back(std::move(rec));
                    }
                }
            }
        }
    }
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_manifest: cannot open " + path);
    out << kManifestVersion << "\n";
    out << "native_size " << m.native_width << " " << m.native_height << "\n";
    for (const auto& r : m.records) {
        out << "record " << sensor_name(r.sensor) << ' ' << r.key.object_id << ' '
            << r.key.tool_id << ' ' << action_name(r.key.action) << ' ' << r.key.repetition << ' '
            << r.initial_path << ' ' << r.final_path << "\n";
    }
    for (const auto& line : m.incomplete) out << "incomplete " << line << "\n";
    if (!out) throw DataError("save_manifest: write failed for " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_manifest: cannot open " + path);
    Manifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    std::string line;
    int lineno = 1;
    if (!std::getline(in, line) || line != kManifestVersion)
        throw DataError("load_manifest: " + path + ":1: bad version line '" + line + "'");
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        auto where = [&] { return path + ":" + std::to_string(lineno); };
        if (tag == "native_size") {
            if (!(ls >> m.native_width >> m.native_height))
                throw DataError("load_manifest: " + where() + ": bad native_size");
        } else if (tag == "record") {
            std::string sensor, action;
            TrialRecord r;
            if (!(ls >> sensor >> r.key.object_id >> r.key.tool_id >> action >>
                  r.key.repetition >> r.initial_path >> r.final_path))
                throw DataError("load_manifest: " + where() + ": bad record");
            r.sensor = sensor_from_name(sensor);
            r.key.action = action_from_name(action);
            m.records.push_back(std::move(r));
        } else if (tag == "incomplete") {
            std::string rest;
            std::getline(ls, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            m.incomplete.push_back(rest);
        } else {
            throw DataError("load_manifest: " + where() + ": unknown tag '" + tag + "'");
        }
    }
    return m;
}

SplitAssignment split_keys(std::vector<TrialKey> keys, std::uint64_t seed) {
    if (keys.size() < 5)
        throw DataError("split: need at least 5 trials for non-empty 60/20/20 splits, got " +
                        std::to_string(keys.size()));
    std::sort(keys.begin(), keys.end());
    Rng rng(seed);
    rng.shuffle(keys);
    const std::size_t n = keys.size();
    const std::size_t n_val = n / 5;
    const std::size_t n_test = n / 5;
    const std::size_t n_train = n - n_val - n_test;
    SplitAssignment s;
    s.seed = seed;
    s.train.assign(keys.begin(), keys.begin() + n_train);
    s.validation.assign(keys.begin() + n_train, keys.begin() + n_train + n_val);
    s.test.assign(keys.begin() + n_train + n_val, keys.end());
    return s;
}

SplitAssignment split(const Manifest& m, std::uint64_t seed) {
    if (m.records.empty()) throw DataError("split: empty manifest");
    return split_keys(m.unique_keys(), seed);
}

void save_split(const SplitAssignment& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_split: cannot open " + path);
    out << "fusionbench-split-v1\nseed " << s.seed << "\n";
    for (const auto& k : s.train) out << "train " << trial_key_str(k) << "\n";
    for (const auto& k : s.validation) out << "validation " << trial_key_str(k) << "\n";
    for (const auto& k : s.test) out << "test " << trial_key_str(k) << "\n";
    if (!out) throw DataError("save_split: write failed for " + path);
}

SplitAssignment load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_split: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "fusionbench-split-v1")
        throw DataError("load_split: " + path + ": bad version line");
    SplitAssignment s;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag, key;
        ls >> tag;
        if (tag == "seed") {
            ls >> s.seed;
            continue;
        }
        ls >> key;
        if (tag == "train") s.train.push_back(trial_key_from_str(key));
        else if (tag == "validation") s.validation.push_back(trial_key_from_str(key));
        else if (tag == "test") s.test.push_back(trial_key_from_str(key));
        else throw DataError("load_split: " + path + ": unknown tag '" + tag + "'");
    }
    return s;
}

PairedExample load_paired_example(const Manifest& m, const TrialRecord& rec,
                                  const LoadOptions& opts) {
    const int channels = sensor_channels(rec.sensor);
    const double scale = rec.sensor == SensorId::Depth ? 1.0 / opts.depth_max : 1.0 / 255.0;
    const int s = opts.target_size;

    auto load_plane = [&](const std::string& rel) {
        Image img = read_png((fs::path(m.root) / rel).string());
        if (img.channels != channels)
            throw DataError("load_paired_example: " + rel + " has " +
                            std::to_string(img.channels) + " channels, sensor " +
                            sensor_name(rec.sensor) + " expects " + std::to_string(channels));
        return resize_bilinear(img, s, scale);
    };
    const Tensor<float> initial = load_plane(rec.initial_path);
    const Tensor<float> final_ = load_plane(rec.final_path);

    PairedExample ex;
    ex.label = rec.key.action;
    const std::size_t ss = static_cast<std::size_t>(s);
    const std::size_t c = static_cast<std::size_t>(channels);
    if (opts.form == InputForm::CNN) {
        Tensor<float> input({ss, ss, 2 * c});
        for (std::size_t pix = 0; pix < ss * ss; ++pix)
            for (std::size_t ch = 0; ch < c; ++ch) {
                input[pix * 2 * c + ch] = initial[pix * c + ch];
                input[pix * 2 * c + c + ch] = final_[pix * c + ch];
            }
        ex.input = std::move(input);
    } else {
        Tensor<float> input({2 * ss * ss * c});
        std::copy(initial.data().begin(), initial.data().end(), input.data().begin());
        std::copy(final_.data().begin(), final_.data().end(),
                  input.data().begin() + static_cast<std::ptrdiff_t>(ss * ss * c));
        ex.input = std::move(input);
    }
    return ex;
}

Tensor<float> cnn_to_mlp_input(const Tensor<float>& cnn) {
    if (cnn.ndim() != 3 || cnn.dim(2) % 2 != 0)
        throw ShapeError("cnn_to_mlp_input: expected [S,S,2C], got " + shape_str(cnn.shape()));
    const std::size_t s = cnn.dim(0), c2 = cnn.dim(2), c = c2 / 2;
    Tensor<float> out({2 * s * s * c});
    for (std::size_t pix = 0; pix < s * s; ++pix)
        for (std::size_t ch = 0; ch < c; ++ch) {
            out[pix * c + ch] = cnn[pix * c2 + ch];
            out[s * s * c + pix * c + ch] = cnn[pix * c2 + c + ch];
        }
    return out;
}

std::vector<PairedExample> load_examples(const Manifest& m, SensorId sensor,
                                         const std::vector<TrialKey>& keys,
                                         const LoadOptions& opts) {
    std::map<TrialKey, const TrialRecord*> by_key;
    for (const auto& r : m.records)
        if (r.sensor == sensor) by_key[r.key] = &r;
    std::vector<PairedExample> out;
    out.reserve(keys.size());
    for (const auto& k : keys) {
        auto it = by_key.find(k);
        if (it == by_key.end())
            throw DataError("load_examples: sensor " + sensor_name(sensor) +
                            " has no record for trial " + trial_key_str(k));
        out.push_back(load_paired_example(m, *it->second, opts));
    }
    return out;
}

}  // namespace fusionbench
