#include "qfe/cli/manifest.hpp"

#include <array>
#include <ctime>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>

#include <openssl/evp.h>

namespace qfe::cli {

namespace {

std::string hex(const unsigned char* p, unsigned n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (unsigned k = 0; k < n; ++k) {
        out += digits[p[k] >> 4];
        out += digits[p[k] & 15];
    }
    return out;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    return hex(digest.data(), len);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    return sha256_hex(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json manifest_json(const RunManifest& m, const std::filesystem::path& dir) {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : m.files) {
        const auto p = dir / f;
        files.push_back({{"path", f}, {"bytes", std::filesystem::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    return {{"config_hash", m.config_hash},
            {"version", m.version},
            {"subcommand", m.subcommand},
            {"started", m.started},
            {"finished", m.finished},
            {"exit_code", m.exit_code},
            {"files", files}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
    std::ofstream out(dir / "manifest.json");
    out << manifest_json(m, dir).dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("cannot write manifest under " + dir.string());
    }
}

}  // namespace qfe::cli
