#include "timegate/fsutil.hpp"

#include <fstream>
#include <random>

#include "timegate/error.hpp"

namespace timegate {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return out;
}

void write_text_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + p.string());
}

void copy_tree(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    fs::copy(from, to,
             fs::copy_options::recursive | fs::copy_options::copy_symlinks |
                 fs::copy_options::overwrite_existing);
}

bool looks_binary(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return false;
    char buf[4096];
    in.read(buf, sizeof(buf));
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i)
        if (buf[i] == '\0') return true;
    return false;
}

fs::path make_temp_dir(const std::string& prefix) {
    static std::mt19937_64 rng{std::random_device{}()};
    for (int attempt = 0; attempt < 64; ++attempt) {
        fs::path p = fs::temp_directory_path() / (prefix + std::to_string(rng()));
        std::error_code ec;
        if (fs::create_directories(p, ec) && !ec) return p;
    }
    throw IoError("cannot create temp dir with prefix " + prefix);
}

} // namespace timegate
