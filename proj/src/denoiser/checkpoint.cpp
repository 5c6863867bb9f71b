#include "forge/denoiser/checkpoint.hpp"
#include "forge/common/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace forge::denoiser {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "param archive assumes a little-endian host");

void to_json(json& j, const ModelConfig& c) {
    j = json{{"token_width", c.token_width}, {"hidden", c.hidden},           {"depth", c.depth},
             {"mlp_hidden", c.mlp_hidden},   {"max_positions", c.max_positions}, {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
    c.token_width = j.value("token_width", c.token_width);
    c.hidden = j.value("hidden", c.hidden);
    c.depth = j.value("depth", c.depth);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.seed = j.value("seed", c.seed);
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("truncated archive " + path.string());
    return v;
}

} // namespace

void write_param_archive(const fs::path& path, const std::vector<const Param*>& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ForgeError("cannot write " + path.string());
    out.write("FRGP", 4);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
        for (auto d : p->shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
}

void read_param_archive(const fs::path& path, ParamStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ForgeError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "FRGP", 4) != 0) throw ParseError("bad archive magic in " + path.string());
    if (get<std::uint32_t>(in, path) != 1) throw ParseError("unsupported archive version in " + path.string());
    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(in, path);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw ParseError("truncated archive " + path.string());
        const auto ndims = get<std::uint32_t>(in, path);
        std::vector<std::size_t> shape(ndims);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
        Param* p = store.find(name);
        if (!p) throw ValidationError("archive parameter not in model: " + name);
        if (p->shape != shape) throw ValidationError("archive shape mismatch for " + name);
        if (!in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)))) {
            throw ParseError("truncated archive " + path.string());
        }
    }
}

void save_checkpoint(const fs::path& dir, const ToyDiT& model, const std::string& scheme, const TrainConfig& train) {
    fs::create_directories(dir);
    json cfg = {{"scheme", scheme}, {"model", model.config()}, {"train", train}};
    if (model.uses_lora()) {
        cfg["lora"] = {{"rank", model.lora_config().rank}, {"alpha", model.lora_config().alpha}};
    } else {
        cfg["lora"] = nullptr;
    }
    write_json_file(dir / "config.json", cfg);
    std::vector<const Param*> base;
    std::vector<const Param*> adapters;
    for (const auto& p : model.params().all()) (p.adapter ? adapters : base).push_back(&p);
    write_param_archive(dir / "params.bin", base);
    if (!adapters.empty()) write_param_archive(dir / "adapters.bin", adapters);
}

ToyDiT load_checkpoint(const fs::path& dir, Checkpoint* meta) {
    const json cfg = read_json_file(dir / "config.json");
    Checkpoint ck;
    try {
        ck.scheme = cfg.at("scheme").get<std::string>();
        ck.model = cfg.at("model").get<ModelConfig>();
        ck.train = cfg.at("train").get<TrainConfig>();
        if (!cfg.at("lora").is_null()) {
            ck.lora = LoraConfig{cfg["lora"].at("rank").get<int>(), cfg["lora"].at("alpha").get<double>()};
        }
    } catch (const json::exception& e) {
        throw ParseError("checkpoint config: " + std::string(e.what()));
    }
    ToyDiT model(ck.model);
    read_param_archive(dir / "params.bin", model.params());
    if (ck.lora) {
        model.apply_lora(*ck.lora);
        read_param_archive(dir / "adapters.bin", model.params());
    }
    if (meta) *meta = ck;
    return model;
}

} // namespace forge::denoiser
