#include "geb/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "geb/errors.hpp"

namespace geb::model {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'E', 'B', 'C', 'K', 'P', 'T', '\0'};

class Writer {
   public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    const std::vector<char>& data() const { return buf_; }

   private:
    std::vector<char> buf_;
};

class Reader {
   public:
    Reader(std::vector<char> buf, std::string origin) : buf_(std::move(buf)), origin_(std::move(origin)) {}

    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw IoError("truncated checkpoint: " + origin_);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void expect_magic() {
        need(kMagic.size());
        if (std::memcmp(buf_.data(), kMagic.data(), kMagic.size()) != 0) {
            throw IoError("not a checkpoint file: " + origin_);
        }
        pos_ += kMagic.size();
    }
    bool done() const { return pos_ == buf_.size(); }

   private:
    std::vector<char> buf_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

const nd::TensorF* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    w.str(ckpt.config.to_text());
    w.str(ckpt.metadata);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.u64(d);
        for (float f : t.data()) w.f32(f);
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw IoError("short write to checkpoint: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(buf), path.string());
    r.expect_magic();
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    }
    Checkpoint ckpt;
    ckpt.config = util::KvDoc::parse(r.str());
    ckpt.metadata = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        nd::Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        const std::size_t n = nd::shape_numel(shape);
        r.need(n * 4);
        std::vector<float> data(n);
        for (auto& f : data) f = r.f32();
        ckpt.tensors.emplace_back(std::move(name), nd::TensorF(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw IoError("trailing bytes in checkpoint: " + path.string());
    return ckpt;
}

void append_params(Checkpoint& ckpt, const ModelParams<float>& params, const std::string& prefix) {
    params.for_each([&](const std::string& name, const nd::TensorF& t) { ckpt.tensors.emplace_back(prefix + name, t); });
}

ModelParams<float> extract_params(const Checkpoint& ckpt, const ModelConfig& cfg, const std::string& prefix) {
    ModelParams<float> params = zero_params<float>(cfg);
    params.for_each([&](const std::string& name, nd::TensorF& t) {
        const nd::TensorF* found = ckpt.find(prefix + name);
        if (found == nullptr) throw IoError("checkpoint is missing tensor " + prefix + name);
        if (found->shape() != t.shape()) {
            throw IoError("checkpoint tensor " + prefix + name + " has shape " + nd::shape_str(found->shape()) +
                          ", config expects " + nd::shape_str(t.shape()));
        }
        t = *found;
    });
    return params;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams<float>& params) {
    Checkpoint ckpt;
    ckpt.config = cfg.to_kv();
    append_params(ckpt, params);
    write_checkpoint(path, ckpt);
}

std::pair<ModelConfig, ModelParams<float>> load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    ModelConfig cfg = ModelConfig::from_kv(ckpt.config);
    return {cfg, extract_params(ckpt, cfg)};
}

}  // namespace geb::model
