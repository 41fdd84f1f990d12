#include "itgpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace itgpt {

namespace {

constexpr char kMagic[8] = {'I', 'T', 'G', 'P', 'T', 'C', 'K', '1'};

template <typename T>
void write_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(buf, buf + sizeof(T));
    }
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    template <typename T>
    T read_le() {
        if (at_ + sizeof(T) > data_.size()) throw data_error(path_ + ": truncated checkpoint");
        char buf[sizeof(T)];
        std::memcpy(buf, data_.data() + at_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(buf, buf + sizeof(T));
        }
        at_ += sizeof(T);
        T v;
        std::memcpy(&v, buf, sizeof(T));
        return v;
    }

    std::string read_block() {
        auto n = read_le<uint64_t>();
        if (at_ + n > data_.size()) throw data_error(path_ + ": truncated checkpoint block");
        std::string s = data_.substr(at_, n);
        at_ += n;
        return s;
    }

private:
    std::string data_;
    std::string path_;
    size_t at_ = 0;
};

void write_block(std::string& out, const std::string& block) {
    write_le<uint64_t>(out, block.size());
    out += block;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    write_block(out, kv_to_text(ckpt.config.to_kv()));
    write_block(out, ckpt.schema.to_text());
    write_block(out, ckpt.manifest_hash);
    write_le<uint64_t>(out, ckpt.params.size());
    for (const auto& [p, tensor] : ckpt.params) {
        write_block(out, p);
        write_le<uint32_t>(out, static_cast<uint32_t>(tensor.rank()));
        for (int e : tensor.shape()) write_le<uint32_t>(out, static_cast<uint32_t>(e));
        for (size_t i = 0; i < tensor.numel(); ++i) write_le<double>(out, tensor.data()[i]);
    }
    write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader in(read_file(path), path);
    char magic[sizeof(kMagic)];
    for (char& c : magic) c = in.read_le<char>();
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw data_error(path + ": not an ITGPT checkpoint");
    }
    Checkpoint ckpt;
    ckpt.config = TrainConfig::from_kv(parse_kv_text(in.read_block(), path + " config"), path);
    ckpt.schema = DatasetSchema::from_text(in.read_block(), path + " schema");
    ckpt.manifest_hash = in.read_block();
    auto n_params = in.read_le<uint64_t>();
    for (uint64_t i = 0; i < n_params; ++i) {
        std::string key = in.read_block();
        auto rank = in.read_le<uint32_t>();
        if (rank > 2) throw data_error(path + ": parameter " + key + " has rank " + std::to_string(rank));
        std::vector<int> shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(in.read_le<uint32_t>()));
        Tensor t(shape);
        for (size_t j = 0; j < t.numel(); ++j) t.data()[j] = in.read_le<double>();
        ckpt.params.emplace(std::move(key), std::move(t));
    }
    return ckpt;
}

}  // namespace itgpt
