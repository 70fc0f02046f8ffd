#include "fusionbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fusionbench/errors.hpp"
#include "fusionbench/rng.hpp"

namespace fs = std::filesystem;

namespace fusionbench {

namespace {

constexpr double kHorizon = 0.42;        // wall/table boundary, fraction of height
constexpr double kDepthGain = 18000.0;   // intensity = gain / z
constexpr double kWallZ = 3.2;
constexpr double kDepthMaskZ = 1.5;      // mask threshold: anything closer is "object"

struct Scene {
    double cx = 0.5, cy = 0.55;  // object centre, fraction of image
    double radius = 0.12;        // fraction of image
    double hue = 0.0;
    int shape = 0;  // 0 circle, 1 square, 2 triangle
};

struct View {
    double dx = 0.0;
    double scale = 1.0;
    double gain[3] = {1.0, 1.0, 1.0};
};

View sensor_view(SensorId sensor) {
    switch (sensor) {
        case SensorId::ICubLeft: return {-0.045, 1.05, {1.02, 0.98, 0.96}};
        case SensorId::ICubRight: return {+0.045, 1.05, {0.96, 1.00, 1.03}};
        default: return {};
    }
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = (h - std::floor(h)) * 6.0;
    const int i = static_cast<int>(h);
    const double f = h - i;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

Scene initial_scene(int object_id, int n_objects, Rng& rng) {
    Scene s;
    s.hue = std::fmod(0.61803398875 * object_id, 1.0);
    s.shape = object_id % 3;
    const double base_radius = 0.10 + 0.07 * ((object_id * 7) % 5) / 4.0;
    s.cx = 0.40 + 0.20 * rng.next_double();
    s.cy = 0.50 + 0.12 * rng.next_double();
    s.radius = base_radius * (0.9 + 0.2 * rng.next_double());
    (void)n_objects;
    return s;
}

// Push moves away from the camera (up in the image, shrinking); Pull
// toward it (down, growing); the two lateral actions translate along x.
Scene apply_action(const Scene& s, ActionLabel action, Rng& rng) {
    Scene f = s;
    const double d = rng.next_double();
    switch (action) {
        case ActionLabel::Push:
            f.cy -= 0.12 + 0.06 * d;
            f.radius *= 0.72;
            break;
        case ActionLabel::Pull:
            f.cy += 0.06 + 0.06 * d;
            f.radius *= 1.35;
            break;
        case ActionLabel::LeftToRight:
            f.cx += 0.16 + 0.08 * d;
            break;
        case ActionLabel::RightToLeft:
            f.cx -= 0.16 + 0.08 * d;
            break;
    }
    f.cx += 0.03 * (rng.next_double() - 0.5);
    f.cy += 0.03 * (rng.next_double() - 0.5);
    return f;
}

// Distance of the object from the camera, inferred from apparent size so
// Pull (grows) comes closer and Push (shrinks) recedes.
double object_z(const Scene& s) {
    return std::clamp(1.30 * 0.12 / std::max(s.radius, 1e-3), 0.55, 2.6);
}

double table_z(double yfrac) {
    return 2.4 - 0.8 * std::clamp((yfrac - kHorizon) / (1.0 - kHorizon), 0.0, 1.0);
}

// Signed membership of a pixel (unit offsets from centre) in the shape;
// also yields the squared radial fraction for shading.
bool inside_shape(const Scene& s, double dx, double dy, double* radial2) {
    const double r = s.radius;
    *radial2 = (dx * dx + dy * dy) / (r * r);
    switch (s.shape) {
        case 0: return *radial2 <= 1.0;
        case 1: return std::max(std::abs(dx), std::abs(dy)) <= 0.88 * r;
        default:
            if (dy < -r || dy > 0.8 * r) return false;
            return std::abs(dx) <= 0.95 * r * (dy + r) / (1.8 * r);
    }
}

Image render_color(const Scene& scene, const View& view, int size, double noise_level,
                   Rng& noise_rng) {
    Image img = make_image(size, size, 3, 8);
    Scene s = scene;
    s.cx = s.cx * view.scale + view.dx + 0.5 * (1.0 - view.scale);
    s.cy = s.cy * view.scale + 0.5 * (1.0 - view.scale);
    s.radius *= view.scale;
    double obj_rgb[3];
    hsv_to_rgb(s.hue, 0.85, 0.95, obj_rgb);
    for (int y = 0; y < size; ++y) {
        const double yf = (y + 0.5) / size;
        for (int x = 0; x < size; ++x) {
            const double xf = (x + 0.5) / size;
            double rgb[3];
            if (yf < kHorizon) {
                const double g = 0.78 + 0.08 * yf / kHorizon;  // wall
                rgb[0] = g; rgb[1] = g * 1.02; rgb[2] = g * 1.05;
            } else {
                const double g = 1.0 - 0.25 * (yf - kHorizon) / (1.0 - kHorizon);  // table
                rgb[0] = 0.55 * g; rgb[1] = 0.47 * g; rgb[2] = 0.40 * g;
            }
            double radial2 = 0.0;
            if (inside_shape(s, xf - s.cx, yf - s.cy, &radial2)) {
                const double shade = 1.0 - 0.30 * std::min(radial2, 1.0);
                for (int c = 0; c < 3; ++c) rgb[c] = obj_rgb[c] * shade;
            }
            for (int c = 0; c < 3; ++c) {
                double v = rgb[c] * view.gain[c];
                if (noise_level > 0) v += noise_level * (2.0 * noise_rng.next_double() - 1.0);
                img.at(y, x, c) =
                    static_cast<std::uint16_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
            }
        }
    }
    return img;
}

Image render_depth(const Scene& s, int size, double noise_level, Rng& noise_rng) {
    Image img = make_image(size, size, 1, 16);
    const double zo = object_z(s);
    for (int y = 0; y < size; ++y) {
        const double yf = (y + 0.5) / size;
        for (int x = 0; x < size; ++x) {
            const double xf = (x + 0.5) / size;
            double z = yf < kHorizon ? kWallZ : table_z(yf);
            double radial2 = 0.0;
            if (inside_shape(s, xf - s.cx, yf - s.cy, &radial2))
                z = zo * (1.0 + 0.08 * std::min(radial2, 1.0));  // slight roundness
            double v = kDepthGain / z;
            if (noise_level > 0) v += noise_level * 65535.0 * (2.0 * noise_rng.next_double() - 1.0);
            img.at(y, x, 0) = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0) + 0.5);
        }
    }
    return img;
}

bool object_pixel(const Image& img, SensorId sensor, int y, int x) {
    if (sensor == SensorId::Depth) {
        return img.at(y, x, 0) > kDepthGain / kDepthMaskZ;
    }
    int mx = 0, mn = 255;
    for (int c = 0; c < 3; ++c) {
        mx = std::max<int>(mx, img.at(y, x, c));
        mn = std::min<int>(mn, img.at(y, x, c));
    }
    return mx - mn > 100;
}

}  // namespace

double object_centroid_x(const Image& img, SensorId sensor) {
    double sum_x = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (object_pixel(img, sensor, y, x)) {
                sum_x += (x + 0.5) / img.width;
                ++count;
            }
    if (count == 0) throw DataError("object_centroid_x: no object pixels found");
    return sum_x / static_cast<double>(count);
}

double object_area_fraction(const Image& img, SensorId sensor) {
    std::size_t count = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (object_pixel(img, sensor, y, x)) ++count;
    return static_cast<double>(count) / (static_cast<double>(img.width) * img.height);
}

Manifest synth_generate(const SynthConfig& config) {
    if (config.out_dir.empty()) throw DataError("synth_generate: out_dir is empty");
    if (config.n_objects < 1 || config.n_tools < 1 || config.n_repetitions < 1)
        throw DataError("synth_generate: counts must be positive");
    fs::create_directories(config.out_dir);

    Manifest m;
    m.root = config.out_dir;
    m.native_width = config.image_size;
    m.native_height = config.image_size;

    const Rng master(config.seed);
    for (SensorId sensor : kAllSensors) {
        const View view = sensor_view(sensor);
        for (int object_id = 0; object_id < config.n_objects; ++object_id)
            for (int tool_id = 0; tool_id < config.n_tools; ++tool_id)
                for (int action_code = 0; action_code < kNumActions; ++action_code)
                    for (int rep = 0; rep < config.n_repetitions; ++rep) {
                        const auto action = static_cast<ActionLabel>(action_code);
                        // Scene streams exclude the sensor so all four
                        // sensors observe the same physical trial.
                        Rng scene_rng = master.derive(1, object_id, tool_id, action_code, rep);
                        const Scene initial =
                            initial_scene(object_id, config.n_objects, scene_rng);
                        const Scene final_ = apply_action(initial, action, scene_rng);

                        TrialKey key{object_id, tool_id, action, rep};
                        char obj_dir[16];
                        std::snprintf(obj_dir, sizeof(obj_dir), "obj%02d", object_id);
                        const fs::path dir = fs::path(config.out_dir) / sensor_name(sensor) /
                                             obj_dir / ("tool" + std::to_string(tool_id)) /
                                             action_name(action) / ("rep" + std::to_string(rep));
                        fs::create_directories(dir);

                        for (int phase = 0; phase < 2; ++phase) {
                            const Scene& scene = phase == 0 ? initial : final_;
                            Rng noise_rng = master.derive(2, static_cast<int>(sensor), object_id,
                                                          tool_id, action_code, rep, phase);
                            Image img = sensor == SensorId::Depth
                                            ? render_depth(scene, config.image_size,
                                                           config.noise_level, noise_rng)
                                            : render_color(scene, view, config.image_size,
                                                           config.noise_level, noise_rng);
                            write_png((dir / (phase == 0 ? "initial.png" : "final.png")).string(),
                                      img);
                        }

                        TrialRecord rec;
                        rec.sensor = sensor;
                        rec.key = key;
                        rec.initial_path = fs::relative(dir / "initial.png", config.out_dir).string();
                        rec.final_path = fs::relative(dir / "final.png", config.out_dir).string();
                        m.records.push_back(std::move(rec));
                    }
    }
    save_manifest(m, (fs::path(config.out_dir) / "manifest.txt").string());
    return m;
}

}  // namespace fusionbench
