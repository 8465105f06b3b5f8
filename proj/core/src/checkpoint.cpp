#include "driftlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace driftlab {

namespace {

using nlohmann::json;

template <typename T>
const char* dtype_name() {
    if constexpr (sizeof(T) == 4) {
        return "f32";
    } else {
        return "f64";
    }
}

json config_to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},   {"heads", c.heads},     {"model_dim", c.model_dim},
                {"ff_dim", c.ff_dim},   {"max_len", c.max_len}, {"vocab_size", c.vocab_size}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    return c;
}

}  // namespace

template <typename T>
void save_checkpoint(const DenoiserModel<T>& model, const std::string& path,
                     const Vocab* vocab) {
    auto params = named_params(model.params);

    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, mat] : params) {
        manifest.push_back({{"name", name},
                            {"rows", mat->rows()},
                            {"cols", mat->cols()},
                            {"offset", offset}});
        offset += static_cast<std::uint64_t>(mat->size()) * sizeof(T);
    }

    json header;
    header["config"] = config_to_json(model.config);
    header["dtype"] = dtype_name<T>();
    header["arrays"] = manifest;
    if (vocab != nullptr) {
        header["vocab"] = json::parse(vocab->to_json());
    }
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open checkpoint for writing: " + path);
    }
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, mat] : params) {
        out.write(reinterpret_cast<const char*>(mat->data()),
                  static_cast<std::streamsize>(mat->size() * static_cast<Eigen::Index>(sizeof(T))));
    }
    if (!out) {
        throw Error("short write while saving checkpoint: " + path);
    }
}

template <typename T>
DenoiserModel<T> load_checkpoint(const std::string& path, std::optional<Vocab>* vocab_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open checkpoint: " + path);
    }

    char magic[sizeof(kCheckpointMagic)];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw CorruptCheckpoint("magic", "missing or wrong file signature");
    }
    std::uint32_t version = 0;
    if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
        version != kCheckpointVersion) {
        throw CorruptCheckpoint("version",
                                "expected " + std::to_string(kCheckpointVersion) + ", got " +
                                    std::to_string(version));
    }
    std::uint64_t header_len = 0;
    if (!in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len)) ||
        header_len == 0 || header_len > (1ull << 30)) {
        throw CorruptCheckpoint("header", "bad header length");
    }
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw CorruptCheckpoint("header", "truncated header");
    }

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw CorruptCheckpoint("header", e.what());
    }

    DenoiserModel<T> model;
    try {
        model.config = config_from_json(header.at("config"));
        model.config.validate();
    } catch (const json::exception& e) {
        throw CorruptCheckpoint("config", e.what());
    }
    if (header.at("dtype").get<std::string>() != dtype_name<T>()) {
        throw CorruptCheckpoint("dtype", "checkpoint holds " +
                                             header.at("dtype").get<std::string>() +
                                             ", requested " + dtype_name<T>());
    }

    // Materialize the parameter shapes from the config, then check the
    // manifest agrees before reading the payload.
    Rng throwaway(0);
    model.params = init_model<T>(model.config, throwaway).params;
    auto params = named_params(model.params);

    const json& manifest = header.at("arrays");
    if (!manifest.is_array() || manifest.size() != params.size()) {
        throw CorruptCheckpoint("manifest", "array count mismatch");
    }
    std::uint64_t expect_offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const json& entry = manifest[i];
        auto& [name, mat] = params[i];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<Eigen::Index>() != mat->rows() ||
            entry.at("cols").get<Eigen::Index>() != mat->cols() ||
            entry.at("offset").get<std::uint64_t>() != expect_offset) {
            throw CorruptCheckpoint("manifest", "entry " + std::to_string(i) +
                                                    " does not match " + name);
        }
        expect_offset += static_cast<std::uint64_t>(mat->size()) * sizeof(T);
    }

    for (auto& [name, mat] : params) {
        if (!in.read(reinterpret_cast<char*>(mat->data()),
                     static_cast<std::streamsize>(mat->size() *
                                                  static_cast<Eigen::Index>(sizeof(T))))) {
            throw CorruptCheckpoint("payload", "truncated while reading " + name);
        }
    }

    if (vocab_out != nullptr) {
        if (header.contains("vocab")) {
            try {
                *vocab_out = Vocab::from_json(header.at("vocab").dump());
            } catch (const std::exception& e) {
                throw CorruptCheckpoint("vocab", e.what());
            }
        } else {
            vocab_out->reset();
        }
    }
    return model;
}

template void save_checkpoint<float>(const DenoiserModel<float>&, const std::string&,
                                     const Vocab*);
template void save_checkpoint<double>(const DenoiserModel<double>&, const std::string&,
                                      const Vocab*);
template DenoiserModel<float> load_checkpoint<float>(const std::string&, std::optional<Vocab>*);
template DenoiserModel<double> load_checkpoint<double>(const std::string&,
                                                       std::optional<Vocab>*);

}  // namespace driftlab
