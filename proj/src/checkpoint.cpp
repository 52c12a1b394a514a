#include "harfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace harfuse {

namespace {

using nlohmann::json;

std::uint64_t bswap64(std::uint64_t x) {
    x = ((x & 0x00000000FFFFFFFFull) << 32) | (x >> 32);
    x = ((x & 0x0000FFFF0000FFFFull) << 16) | ((x >> 16) & 0x0000FFFF0000FFFFull);
    x = ((x & 0x00FF00FF00FF00FFull) << 8) | ((x >> 8) & 0x00FF00FF00FF00FFull);
    return x;
}

std::uint64_t to_le_bits(Scalar v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = bswap64(bits);
    return bits;
}

Scalar from_le_bits(std::uint64_t bits) {
    if constexpr (std::endian::native == std::endian::big) bits = bswap64(bits);
    return std::bit_cast<Scalar>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const NamedTensors& entries) {
    const std::filesystem::path bin_path = manifest_path.string() + ".bin";

    json params = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : entries) {
        json shape = json::array();
        for (Index d : t.shape) shape.push_back(d);
        params.push_back({{"name", name},
                          {"shape", shape},
                          {"offset", offset},
                          {"count", t.size()}});
        offset += static_cast<std::uint64_t>(t.size()) * sizeof(Scalar);
    }
    json manifest = {{"format", "harfuse-checkpoint"},
                     {"version", 1},
                     {"dtype", "float64"},
                     {"byte_order", "little"},
                     {"data", bin_path.filename().string()},
                     {"params", params}};

    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("checkpoint: cannot write " + bin_path.string());
    for (const auto& [name, t] : entries) {
        for (Index i = 0; i < t.size(); ++i) {
            const std::uint64_t bits = to_le_bits(t.data[i]);
            bin.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
    }
    bin.close();
    if (!bin) throw DataError("checkpoint: failed writing " + bin_path.string());

    std::ofstream mf(manifest_path, std::ios::trunc);
    if (!mf) throw DataError("checkpoint: cannot write " + manifest_path.string());
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf) throw DataError("checkpoint: failed writing " + manifest_path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("checkpoint: cannot open " + manifest_path.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw DataError("checkpoint: malformed manifest " + manifest_path.string() + ": " +
                        e.what());
    }
    try {
        if (manifest.at("dtype").get<std::string>() != "float64" ||
            manifest.at("byte_order").get<std::string>() != "little")
            throw DataError("checkpoint: unsupported encoding in " + manifest_path.string());

        const std::filesystem::path bin_path =
            manifest_path.parent_path() / manifest.at("data").get<std::string>();
        std::ifstream bin(bin_path, std::ios::binary);
        if (!bin) throw DataError("checkpoint: cannot open " + bin_path.string());
        bin.seekg(0, std::ios::end);
        const std::uint64_t bin_size = static_cast<std::uint64_t>(bin.tellg());

        NamedTensors out;
        for (const json& p : manifest.at("params")) {
            Shape shape;
            for (const json& d : p.at("shape")) shape.push_back(d.get<Index>());
            const auto count = p.at("count").get<Index>();
            const auto offset = p.at("offset").get<std::uint64_t>();
            if (count != numel(shape))
                throw DataError("checkpoint: count/shape mismatch for parameter " +
                                p.at("name").get<std::string>());
            if (offset + static_cast<std::uint64_t>(count) * sizeof(Scalar) > bin_size)
                throw DataError("checkpoint: " + bin_path.string() +
                                " is shorter than the manifest requires");
            bin.seekg(static_cast<std::streamoff>(offset));
            Array data(count);
            for (Index i = 0; i < count; ++i) {
                std::uint64_t bits = 0;
                bin.read(reinterpret_cast<char*>(&bits), sizeof(bits));
                data[i] = from_le_bits(bits);
            }
            if (!bin)
                throw DataError("checkpoint: failed reading " + bin_path.string());
            out.emplace_back(p.at("name").get<std::string>(),
                             Tensor(std::move(shape), std::move(data)));
        }
        return out;
    } catch (const json::exception& e) {
        throw DataError("checkpoint: malformed manifest " + manifest_path.string() + ": " +
                        e.what());
    }
}

}  // namespace harfuse
