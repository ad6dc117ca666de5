#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace hyperl1 {

inline std::string version_string() {
#ifdef HYPERL1_GIT_REV
    return std::string("hyperl1 0.1.0+") + HYPERL1_GIT_REV;
#else
    return "hyperl1 0.1.0";
#endif
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

// Stable content hash of a canonical JSON dump (nlohmann objects are
// key-sorted, so the dump is deterministic).
inline std::string config_hash(const nlohmann::json& config) {
    return hash_hex(detail::fnv1a64(config.dump()));
}

enum class OverwritePolicy { Refuse, Version, Force };

inline OverwritePolicy overwrite_policy_from_string(const std::string& s) {
    if (s == "refuse") return OverwritePolicy::Refuse;
    if (s == "version") return OverwritePolicy::Version;
    if (s == "force") return OverwritePolicy::Force;
    throw ConfigError("unknown overwrite policy '" + s + "' (refuse|version|force)");
}

// Applies the output policy and returns the path to actually write. Refuse
// throws on collision; Version moves the existing file to <path>.bak-N.
inline std::filesystem::path resolve_output(const std::filesystem::path& path,
                                            OverwritePolicy policy) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) return path;
    switch (policy) {
        case OverwritePolicy::Force:
            return path;
        case OverwritePolicy::Refuse:
            throw IoError("output exists: " + path.string() + " (use --overwrite to replace)");
        case OverwritePolicy::Version: {
            for (int n = 1; n < 10000; ++n) {
                fs::path backup = path;
                backup += ".bak-" + std::to_string(n);
                if (!fs::exists(backup)) {
                    fs::rename(path, backup);
                    return path;
                }
            }
            throw IoError("too many backups for " + path.string());
        }
    }
    throw IoError("unreachable");
}

// ---------------------------------------------------------------------------
// Checkpoint container: JSON manifest + contiguous little-endian f64 arrays
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "HL1CKPT1";

struct Checkpoint {
    std::string version;
    std::string cfg_hash;
    nlohmann::json config;
    std::size_t step = 0;
    MlpSpec target_spec;
    std::uint64_t seed = 0;
    ParamSet hhw;
    AdamState adam;
};

namespace detail {

inline void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native != std::endian::little)
        throw IoError("checkpoint writer requires a little-endian host");
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint truncated while reading arrays");
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["version"] = ck.version;
    manifest["config_hash"] = ck.cfg_hash;
    manifest["config"] = ck.config;
    manifest["step"] = ck.step;
    manifest["target_spec"] = ck.target_spec.layer_sizes;
    manifest["rng"] = {{"seed", std::to_string(ck.seed)}, {"step", ck.step}};
    manifest["adam"] = {{"t", ck.adam.t},
                        {"lr", ck.adam.cfg.lr},
                        {"beta1", ck.adam.cfg.beta1},
                        {"beta2", ck.adam.cfg.beta2},
                        {"eps", ck.adam.cfg.eps}};
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& p : ck.hhw.params)
        arrays.push_back({{"name", p.name}, {"shape", p.shape}, {"len", p.value.size()}});
    for (std::size_t k = 0; k < ck.adam.m.size(); ++k)
        arrays.push_back({{"name", "adam.m." + ck.hhw.params[k].name},
                          {"shape", ck.hhw.params[k].shape},
                          {"len", ck.adam.m[k].size()}});
    for (std::size_t k = 0; k < ck.adam.v.size(); ++k)
        arrays.push_back({{"name", "adam.v." + ck.hhw.params[k].name},
                          {"shape", ck.hhw.params[k].shape},
                          {"len", ck.adam.v[k].size()}});
    manifest["arrays"] = arrays;

    const std::string json_text = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = json_text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
    for (const auto& p : ck.hhw.params) detail::write_doubles(out, p.value);
    for (const auto& mv : ck.adam.m) detail::write_doubles(out, mv);
    for (const auto& vv : ck.adam.v) detail::write_doubles(out, vv);
    if (!out) throw IoError("failed while writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("bad checkpoint magic in " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string json_text(len, '\0');
    in.read(json_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint truncated in " + path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("checkpoint manifest parse error at byte " + std::to_string(e.byte));
    }

    Checkpoint ck;
    ck.version = manifest.at("version").get<std::string>();
    ck.cfg_hash = manifest.at("config_hash").get<std::string>();
    ck.config = manifest.at("config");
    ck.step = manifest.at("step").get<std::size_t>();
    ck.target_spec = MlpSpec(manifest.at("target_spec").get<std::vector<std::size_t>>());
    ck.seed = std::stoull(manifest.at("rng").at("seed").get<std::string>());
    ck.adam.t = manifest.at("adam").at("t").get<std::size_t>();
    ck.adam.cfg.lr = manifest.at("adam").at("lr").get<double>();
    ck.adam.cfg.beta1 = manifest.at("adam").at("beta1").get<double>();
    ck.adam.cfg.beta2 = manifest.at("adam").at("beta2").get<double>();
    ck.adam.cfg.eps = manifest.at("adam").at("eps").get<double>();

    std::vector<std::pair<std::string, ParamTensor>> loaded;
    for (const auto& a : manifest.at("arrays")) {
        ParamTensor p;
        p.name = a.at("name").get<std::string>();
        p.shape = a.at("shape").get<Shape>();
        p.value.resize(a.at("len").get<std::size_t>());
        detail::read_doubles(in, p.value);
        loaded.emplace_back(p.name, std::move(p));
    }
    for (auto& [name, p] : loaded) {
        if (name.rfind("adam.m.", 0) == 0)
            ck.adam.m.push_back(std::move(p.value));
        else if (name.rfind("adam.v.", 0) == 0)
            ck.adam.v.push_back(std::move(p.value));
        else
            ck.hhw.params.push_back(std::move(p));
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Weights files (JSON)
// ---------------------------------------------------------------------------

inline nlohmann::json weights_to_json(const MlpWeights& w) {
    nlohmann::json j;
    j["layer_sizes"] = w.spec().layer_sizes;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (const auto& m : w.weights) j["weights"].push_back(m.values());
    for (const auto& b : w.biases) j["biases"].push_back(b.values());
    return j;
}

inline MlpWeights weights_from_json(const nlohmann::json& j) {
    MlpSpec spec(j.at("layer_sizes").get<std::vector<std::size_t>>());
    MlpWeights w;
    for (std::size_t l = 0; l < spec.num_weight_layers(); ++l) {
        w.weights.push_back(Tensor({spec.out_width(l), spec.in_width(l)},
                                   j.at("weights").at(l).get<std::vector<double>>()));
        w.biases.push_back(
            Tensor({spec.out_width(l)}, j.at("biases").at(l).get<std::vector<double>>()));
    }
    w.check_shapes(spec);
    return w;
}

inline void save_weights_json(const std::filesystem::path& path, const MlpWeights& w,
                              const nlohmann::json& extra = {}) {
    nlohmann::json j = weights_to_json(w);
    j["version"] = version_string();
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

inline MlpWeights load_weights_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weights file " + path.string());
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        return weights_from_json(j);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("weights file " + path.string() + ": parse error at byte " +
                          std::to_string(e.byte) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("weights file " + path.string() + ": " + e.what());
    }
}

}  // namespace hyperl1
