#include "rldf/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "rldf/error.hpp"

namespace rldf {

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'L', 'D', 'F', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    }
    out.write(bytes.data(), bytes.size());
}

void put_u32(std::ostream& out, std::uint64_t v) { put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v)); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le<std::uint64_t>(out, v); }
void put_f64(std::ostream& out, double v) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

template <typename U>
U get_le(std::istream& in) {
    std::array<unsigned char, sizeof(U)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw FormatError("checkpoint: unexpected end of file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

}  // namespace

void write_checkpoint(std::ostream& out, const ModelConfig& cfg, const ParamStore& params) {
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kCheckpointVersion);
    put_u32(out, cfg.vocab_size);
    put_u32(out, cfg.embed_dim);
    put_u32(out, cfg.n_layers);
    put_u32(out, cfg.n_heads);
    put_u32(out, cfg.ff_dim);
    put_u32(out, cfg.max_len);
    put_u32(out, static_cast<std::uint32_t>(cfg.mask_id));
    put_u64(out, cfg.seed);
    put_f64(out, cfg.init_std);
    put_u64(out, params.version);
    put_u32(out, params.tensors().size());
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        const auto& t = params.tensors()[i];
        put_u32(out, t.name.size());
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, t.shape.size());
        for (auto dim : t.shape) put_u64(out, dim);
        for (double v : params.tensor(i)) put_f64(out, v);
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw FormatError("checkpoint: bad magic");
    const auto version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
    }
    Checkpoint ck;
    ck.config.vocab_size = get_u32(in);
    ck.config.embed_dim = get_u32(in);
    ck.config.n_layers = get_u32(in);
    ck.config.n_heads = get_u32(in);
    ck.config.ff_dim = get_u32(in);
    ck.config.max_len = get_u32(in);
    ck.config.mask_id = static_cast<TokenId>(get_u32(in));
    ck.config.seed = get_u64(in);
    ck.config.init_std = get_f64(in);
    try {
        ck.config.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    const auto param_version = get_u64(in);
    const auto n_tensors = get_u32(in);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = get_u32(in);
        if (name_len > 4096) throw FormatError("checkpoint: tensor name too long");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("checkpoint: unexpected end of file");
        const auto rank = get_u32(in);
        if (rank > 8) throw FormatError("checkpoint: tensor rank too large");
        std::vector<std::size_t> shape(rank);
        for (auto& dim : shape) dim = get_u64(in);
        ck.params.add(name, shape);
        for (double& v : ck.params.tensor(i)) v = get_f64(in);
    }
    ck.params.version = param_version;

    const Model model(ck.config);
    if (!ck.params.same_layout(model.zero_params())) {
        throw FormatError("checkpoint: tensor layout does not match model config");
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamStore& params) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidArgument("cannot write checkpoint: " + tmp.string());
        write_checkpoint(out, cfg, params);
        out.flush();
        if (!out) throw FormatError("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open checkpoint: " + path.string());
    return read_checkpoint(in);
}

}  // namespace rldf
