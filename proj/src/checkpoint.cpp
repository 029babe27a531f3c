#include "fd4mm/train.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fd4mm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'D', '4', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "float32";
        case torch::kFloat64: return "float64";
        default: throw std::invalid_argument("checkpoint: unsupported tensor dtype");
    }
}

torch::ScalarType dtype_from(const std::string& name) {
    if (name == "float32") return torch::kFloat32;
    if (name == "float64") return torch::kFloat64;
    throw std::runtime_error("checkpoint: unknown dtype '" + name + "'");
}

struct PayloadWriter {
    json table = json::array();
    std::vector<Tensor> tensors;
    uint64_t offset = 0;

    void add(const std::string& key, const Tensor& t) {
        const Tensor c = t.detach().cpu().contiguous();
        const uint64_t bytes = static_cast<uint64_t>(c.numel()) * c.element_size();
        table.push_back({{"key", key}, {"dtype", dtype_name(c.scalar_type())}, {"shape", c.sizes().vec()},
                         {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
        tensors.push_back(c);
    }
};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    if (!ckpt.optimizer.empty() && ckpt.optimizer.size() != ckpt.parameters.size()) {
        throw std::invalid_argument("checkpoint: optimizer state does not match parameters");
    }
    PayloadWriter payload;
    json adam_steps = json::array();
    for (size_t i = 0; i < ckpt.parameters.size(); ++i) {
        const auto& [name, value] = ckpt.parameters[i];
        payload.add("param/" + name, value);
        if (!ckpt.optimizer.empty()) {
            const AdamSlot& slot = ckpt.optimizer[i];
            adam_steps.push_back(slot.step);
            if (slot.step > 0) {
                payload.add("adam/" + name + "/exp_avg", slot.exp_avg);
                payload.add("adam/" + name + "/exp_avg_sq", slot.exp_avg_sq);
            }
        }
    }
    json header{{"model", ckpt.model},
                {"train", ckpt.train},
                {"step", ckpt.step},
                {"rng_state", ckpt.rng_state},
                {"has_optimizer", !ckpt.optimizer.empty()},
                {"adam_steps", adam_steps},
                {"tensors", payload.table}};
    const std::string text = header.dump();

    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    // Write to a sibling and rename so an interrupted save never leaves a torn file.
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
        }
        const uint32_t version = Checkpoint::kFormatVersion;
        const uint64_t header_len = text.size();
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&version), sizeof(version));
        out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const Tensor& t : payload.tensors) {
            out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
        }
        if (!out) {
            throw std::runtime_error("short write to checkpoint '" + path.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    }
    char magic[8];
    uint32_t version = 0;
    uint64_t header_len = 0;
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
    }
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != Checkpoint::kFormatVersion) {
        throw std::runtime_error("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(Checkpoint::kFormatVersion) + ")");
    }
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len > (1ull << 30)) {
        throw std::runtime_error("checkpoint header corrupt");
    }
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw std::runtime_error("checkpoint truncated in header");
    }
    const json header = json::parse(text);
    const auto payload_start = in.tellg();

    std::map<std::string, Tensor> tensors;
    for (const auto& entry : header.at("tensors")) {
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        Tensor t = torch::empty(shape, dtype_from(entry.at("dtype").get<std::string>()));
        const auto bytes = entry.at("bytes").get<uint64_t>();
        if (bytes != static_cast<uint64_t>(t.numel() * t.element_size())) {
            throw std::runtime_error("checkpoint tensor table corrupt");
        }
        in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
        in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
        if (!in) {
            throw std::runtime_error("checkpoint truncated in payload");
        }
        tensors.emplace(entry.at("key").get<std::string>(), t);
    }

    Checkpoint ckpt;
    ckpt.model = header.at("model").get<ModelConfig>();
    ckpt.train = header.at("train").get<TrainConfig>();
    ckpt.step = header.at("step").get<int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();

    // Parameter order follows the model definition, not the file.
    MagnificationNet reference(ckpt.model);
    for (const auto& item : reference->named_parameters()) {
        auto it = tensors.find("param/" + item.key());
        if (it == tensors.end()) {
            throw std::runtime_error("checkpoint missing parameter '" + item.key() + "'");
        }
        if (it->second.sizes() != item.value().sizes()) {
            throw ShapeError("checkpoint parameter '" + item.key() + "' has shape " + shape_string(it->second) +
                             ", model expects " + shape_string(item.value()));
        }
        ckpt.parameters.emplace_back(item.key(), it->second);
    }
    if (header.at("has_optimizer").get<bool>()) {
        const auto steps = header.at("adam_steps").get<std::vector<int64_t>>();
        if (steps.size() != ckpt.parameters.size()) {
            throw std::runtime_error("checkpoint optimizer state does not match parameters");
        }
        for (size_t i = 0; i < steps.size(); ++i) {
            AdamSlot slot;
            slot.step = steps[i];
            if (slot.step > 0) {
                const std::string& name = ckpt.parameters[i].first;
                slot.exp_avg = tensors.at("adam/" + name + "/exp_avg");
                slot.exp_avg_sq = tensors.at("adam/" + name + "/exp_avg_sq");
            }
            ckpt.optimizer.push_back(std::move(slot));
        }
    }
    return ckpt;
}

MagnificationNet build_model(const Checkpoint& ckpt) {
    MagnificationNet model(ckpt.model);
    torch::NoGradGuard no_grad;
    auto params = model->named_parameters();
    for (const auto& [name, value] : ckpt.parameters) {
        Tensor* target = params.find(name);
        if (target == nullptr) {
            throw std::runtime_error("model has no parameter '" + name + "'");
        }
        require_same_shape(*target, value, "checkpoint parameter");
        target->copy_(value);
    }
    return model;
}

}  // namespace fd4mm
