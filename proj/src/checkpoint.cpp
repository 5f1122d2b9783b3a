#include "coifnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "coifnet/errors.hpp"
#include "coifnet/run_config.hpp"

namespace coifnet {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_tensor(std::vector<unsigned char>& out, const Tensor& t) {
    const auto d = t.data();
    const auto* bytes = reinterpret_cast<const unsigned char*>(d.data());
    out.insert(out.end(), bytes, bytes + d.size() * sizeof(double));
}

json tensor_entry(const std::string& section, const std::string& name, const Tensor& t) {
    return json{{"section", section}, {"name", name}, {"shape", t.shape()}};
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
    fail(ErrorKind::data, "checkpoint " + path.string() + ": " + what);
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t h) {
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    json tensors = json::array();
    for (const auto& [name, t] : ck.params.tensors) tensors.push_back(tensor_entry("param", name, t));
    for (const auto& [name, t] : ck.adam.m) tensors.push_back(tensor_entry("adam_m", name, t));
    for (const auto& [name, t] : ck.adam.v) tensors.push_back(tensor_entry("adam_v", name, t));

    json header{{"model", to_json(ck.model)},
                {"train", to_json(ck.train)},
                {"split", to_json(ck.split)},
                {"epoch", ck.epoch},
                {"adam_step", ck.adam.step},
                {"shuffle_rng", ck.shuffle_rng},
                {"dropout_rng", ck.dropout_rng},
                {"run_config", ck.run_config},
                {"tensors", tensors}};
    if (ck.scaler) header["scaler"] = {{"mean", ck.scaler->mean}, {"scale", ck.scaler->scale}};
    else header["scaler"] = nullptr;
    const std::string text = header.dump();

    std::vector<unsigned char> buf(kMagic, kMagic + 4);
    buf.push_back(kVersion);
    put_u64(buf, text.size());
    buf.insert(buf.end(), text.begin(), text.end());
    for (const auto& [_, t] : ck.params.tensors) put_tensor(buf, t);
    for (const auto& [_, t] : ck.adam.m) put_tensor(buf, t);
    for (const auto& [_, t] : ck.adam.v) put_tensor(buf, t);
    put_u64(buf, fnv1a64(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::data, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::data, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open checkpoint " + path.string());
    const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    if (buf.size() < 4 + 1 + 8 + 8) corrupt(path, "truncated");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) corrupt(path, "bad magic");
    if (buf[4] != kVersion) corrupt(path, "unsupported version " + std::to_string(buf[4]));
    const std::size_t body = buf.size() - 8;
    if (get_u64(buf.data() + body) != fnv1a64(buf.data(), body)) corrupt(path, "checksum mismatch");
    const std::uint64_t header_len = get_u64(buf.data() + 5);
    if (header_len > body - 13) corrupt(path, "header length out of range");

    json header;
    try {
        header = json::parse(buf.begin() + 13, buf.begin() + 13 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        corrupt(path, std::string("invalid header (") + e.what() + ")");
    }

    Checkpoint ck;
    std::size_t offset = 13 + header_len;
    try {
        ck.model = model_config_from_json(header.at("model"));
        ck.train = train_config_from_json(header.at("train"));
        ck.split = split_spec_from_json(header.at("split"));
        ck.epoch = header.at("epoch").get<std::uint64_t>();
        ck.adam.step = header.at("adam_step").get<std::uint64_t>();
        ck.shuffle_rng = header.at("shuffle_rng").get<std::array<std::uint64_t, 4>>();
        ck.dropout_rng = header.at("dropout_rng").get<std::array<std::uint64_t, 4>>();
        ck.run_config = header.at("run_config");
        if (!header.at("scaler").is_null()) {
            Standardizer s;
            s.mean = header["scaler"].at("mean").get<std::vector<double>>();
            s.scale = header["scaler"].at("scale").get<std::vector<double>>();
            ck.scaler = std::move(s);
        }
        for (const auto& e : header.at("tensors")) {
            const auto section = e.at("section").get<std::string>();
            const auto name = e.at("name").get<std::string>();
            const auto shape = e.at("shape").get<Shape>();
            std::size_t n = 1;
            for (auto s : shape) n *= s;
            if (n > (body - offset) / sizeof(double)) corrupt(path, "payload truncated at " + section + "/" + name);
            std::vector<double> values(n);
            std::memcpy(values.data(), buf.data() + offset, n * sizeof(double));
            offset += n * sizeof(double);
            Tensor t(shape, std::move(values));
            if (section == "param") ck.params.tensors.emplace(name, std::move(t));
            else if (section == "adam_m") ck.adam.m.emplace(name, std::move(t));
            else if (section == "adam_v") ck.adam.v.emplace(name, std::move(t));
            else corrupt(path, "unknown section " + section);
        }
    } catch (const json::exception& e) {
        corrupt(path, std::string("malformed header (") + e.what() + ")");
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::data) throw;
        corrupt(path, e.what());
    }
    if (offset != body) corrupt(path, "trailing bytes after payload");

    const auto expected = parameter_shapes(ck.model);
    if (expected.size() != ck.params.tensors.size()) corrupt(path, "parameter set does not match the model config");
    for (const auto& [name, shape] : expected) {
        auto it = ck.params.tensors.find(name);
        if (it == ck.params.tensors.end() || it->second.shape() != shape)
            corrupt(path, "parameter " + name + " does not match the model config");
    }
    return ck;
}

}  // namespace coifnet
