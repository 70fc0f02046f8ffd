#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fusionbench/tensor.hpp"

namespace fusionbench {

// ---- identity types ----

enum class SensorId { Color, Depth, ICubLeft, ICubRight };

inline constexpr std::array<SensorId, 4> kAllSensors = {
    SensorId::Color, SensorId::Depth, SensorId::ICubLeft, SensorId::ICubRight};

// Depth is single-channel; the three color cameras are RGB.
int sensor_channels(SensorId id);
const std::string& sensor_name(SensorId id);  // color|depth|icub_left|icub_right
SensorId sensor_from_name(const std::string& name);

// Frozen class codes: Push=0, Pull=1, LeftToRight=2, RightToLeft=3.
enum class ActionLabel : int { Push = 0, Pull = 1, LeftToRight = 2, RightToLeft = 3 };
inline constexpr int kNumActions = 4;

const std::string& action_name(ActionLabel a);  // push|pull|left_to_right|right_to_left
ActionLabel action_from_name(const std::string& name);

// Sensor-independent trial identity; the unit the split and fusion align on.
struct TrialKey {
    int object_id = 0;   // 0..19 for the reference design
    int tool_id = 0;     // 0..3
    ActionLabel action = ActionLabel::Push;
    int repetition = 0;  // 0..9

    auto operator<=>(const TrialKey&) const = default;
};

std::string trial_key_str(const TrialKey& k);  // "obj00.tool0.push.rep0"
TrialKey trial_key_from_str(const std::string& s);

struct TrialRecord {
    SensorId sensor = SensorId::Color;
    TrialKey key;
    std::string initial_path;  // relative to the manifest root
    std::string final_path;
};

// ---- manifest ----

// Directory layout: root/<sensor>/obj<NN>/tool<N>/<action>/rep<N>/{initial,final}.png
struct Manifest {
    std::string root;
    int native_width = 0;
    int native_height = 0;
    std::vector<TrialRecord> records;
    std::vector<std::string> incomplete;  // human-readable report of unpaired trials

    std::vector<TrialKey> unique_keys() const;  // sorted
    std::vector<const TrialRecord*> records_for(SensorId sensor) const;
};

inline constexpr const char* kManifestVersion = "fusionbench-manifest-v1";

Manifest scan_dataset(const std::string& root);
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

// ---- split ----

struct SplitAssignment {
    std::uint64_t seed = 0;
    std::vector<TrialKey> train, validation, test;
};

// Deterministic shuffle by seed; 60/20/20 with floor-sized validation and
// test, the remainder to train. Fewer than 5 trials cannot form three
// non-empty splits.
SplitAssignment split(const Manifest& m, std::uint64_t seed);
SplitAssignment split_keys(std::vector<TrialKey> keys, std::uint64_t seed);
void save_split(const SplitAssignment& s, const std::string& path);
SplitAssignment load_split(const std::string& path);

// ---- model-ready examples ----

// CNN form: [S,S,2C] with the initial image's channels first at every
// pixel. MLP form: flat [2*S*S*C], the initial image's pixels flattened
// then the final image's. Both hold the same values.
enum class InputForm { CNN, MLP };

struct PairedExample {
    Tensor<float> input;
    ActionLabel label = ActionLabel::Push;
};

struct LoadOptions {
    int target_size = 64;
    double depth_max = 65535.0;
    InputForm form = InputForm::CNN;
};

PairedExample load_paired_example(const Manifest& m, const TrialRecord& rec,
                                  const LoadOptions& opts = {});

// Rearranges a CNN-form input into the MLP flat layout (a permutation).
Tensor<float> cnn_to_mlp_input(const Tensor<float>& cnn);

// One sensor's examples for a list of trial keys, in key-list order.
std::vector<PairedExample> load_examples(const Manifest& m, SensorId sensor,
                                         const std::vector<TrialKey>& keys,
                                         const LoadOptions& opts = {});

}  // namespace fusionbench
