#include "episignal/report.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace episignal::report {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("sha256: update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("sha256: final failed");
        static const char* digits = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 15];
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("sha256: cannot open " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), std::streamsize(buf.size()));
        h.update(buf.data(), std::size_t(in.gcount()));
    }
    return h.hex();
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

StageCache::StageCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path StageCache::path_for(const std::string& stage, const std::string& key) const {
    return dir_ / stage / (key + ".bin");
}

std::optional<std::string> StageCache::get(const std::string& stage, const std::string& key) const {
    std::ifstream in(path_for(stage, key), std::ios::binary);
    if (!in) {
        ++misses;
        return std::nullopt;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    ++hits;
    return buf.str();
}

void StageCache::put(const std::string& stage, const std::string& key, const std::string& payload) const {
    atomic_write(path_for(stage, key), payload);
}

}  // namespace episignal::report
