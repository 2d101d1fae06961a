#include "cvloc/param_store.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'W', 'T'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ParseError(std::string("CVWT: truncated reading ") + what);
    return v;
}

}  // namespace

void ParamStore::insert(const std::string& name, Tensor t) {
    auto [it, ok] = entries_.emplace(name, std::move(t));
    if (!ok) throw Error("ParamStore: duplicate entry name '" + name + "'");
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("ParamStore: no entry '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("ParamStore: no entry '" + name + "'");
    return it->second;
}

bool ParamStore::contains(const std::string& name) const {
    return entries_.count(name) > 0;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::set_requires_grad(bool v) {
    for (auto& [name, t] : entries_) t.set_requires_grad(v);
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    out.rng_seed = rng_seed;
    out.meta = meta;
    for (const auto& [name, t] : entries_) out.insert(name, t.clone());
    return out;
}

bool ParamStore::data_equal(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
        if (a->first != b->first) return false;
        if (a->second.shape() != b->second.shape()) return false;
        auto da = a->second.data();
        auto db = b->second.data();
        if (std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) != 0) return false;
    }
    return true;
}

void ParamStore::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, rng_seed);
    write_pod(os, static_cast<uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& [name, t] : entries_) {
        write_pod(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_pod(os, static_cast<uint32_t>(t.dim(i)));
        auto d = t.data();
        os.write(reinterpret_cast<const char*>(d.data()),
                 static_cast<std::streamsize>(d.size() * sizeof(float)));
    }
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingAssetError("cannot open '" + path.string() + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path.string() + "' is not a CVWT file");
    const uint16_t version = read_pod<uint16_t>(is, "version");
    if (version != kVersion)
        throw ParseError("CVWT version " + std::to_string(version) + " unsupported");

    ParamStore ps;
    ps.rng_seed = read_pod<uint64_t>(is, "rng seed");
    const uint32_t meta_len = read_pod<uint32_t>(is, "meta length");
    ps.meta.resize(meta_len);
    is.read(ps.meta.data(), meta_len);
    if (!is) throw ParseError("CVWT: truncated meta block");

    const uint32_t count = read_pod<uint32_t>(is, "entry count");
    for (uint32_t e = 0; e < count; ++e) {
        const uint16_t name_len = read_pod<uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw ParseError("CVWT: truncated entry name");
        const uint8_t rank = read_pod<uint8_t>(is, "rank");
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(read_pod<uint32_t>(is, "dim"));
            numel *= shape[i];
        }
        std::vector<float> data(static_cast<size_t>(numel));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!is) throw ParseError("CVWT: truncated data for '" + name + "'");
        ps.insert(name, Tensor::from(shape, std::move(data)));
    }
    return ps;
}

std::array<uint8_t, 32> file_sha256(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingAssetError("cannot open '" + path.string() + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
        throw NumericError("sha256 init failed");
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, static_cast<size_t>(is.gcount()));
    }
    std::array<uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, out.data(), &len);
    EVP_MD_CTX_free(ctx);
    return out;
}

}  // namespace cvloc
