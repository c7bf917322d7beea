#include "fasw/checkpoint.hpp"

#include <cstdint>
#include <cstring>

#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'S', 'W', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<char>& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

void put_str(std::vector<char>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    Reader(const std::vector<char>& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    void take(void* dst, std::size_t n) {
        require(pos_ + n <= bytes_.size(), ErrorKind::schema, "truncated archive: " + origin_);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        take(&v, 4);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        require(n <= bytes_.size(), ErrorKind::schema, "corrupt string length in " + origin_);
        std::string s(n, '\0');
        take(s.data(), n);
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<char>& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t ArchiveData::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : arrays) n += t.size();
    return n;
}

void save_archive(const std::filesystem::path& path, const ArchiveData& data) {
    std::vector<char> out(kMagic, kMagic + 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(data.meta.size()));
    for (const auto& [k, v] : data.meta) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(data.arrays.size()));
    for (const auto& [name, t] : data.arrays) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) {
            char b[4];
            std::memcpy(b, &d, 4);
            out.insert(out.end(), b, b + 4);
        }
        const char* p = reinterpret_cast<const char*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(double));
    }
    io::write_bytes(path, out);
}

ArchiveData load_archive(const std::filesystem::path& path) {
    const std::vector<char> bytes = io::read_bytes(path);
    Reader r(bytes, path.string());
    char magic[8];
    r.take(magic, 8);
    require(std::memcmp(magic, kMagic, 8) == 0, ErrorKind::schema, "not a fasw archive: " + path.string());
    const std::uint32_t version = r.u32();
    require(version == kVersion, ErrorKind::schema,
            "unsupported archive version " + std::to_string(version) + " in " + path.string());
    ArchiveData data;
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        data.meta[k] = r.str();
    }
    const std::uint32_t n_arrays = r.u32();
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        require(rank <= 8, ErrorKind::schema, "corrupt rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) r.take(&d, 4);
        std::vector<double> values(shape_size(shape));
        r.take(values.data(), values.size() * sizeof(double));
        data.arrays.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    require(r.done(), ErrorKind::schema, "trailing bytes in " + path.string());
    return data;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    int line_no = 0;
    for (const std::string& raw : io::split(text, '\n')) {
        ++line_no;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = io::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::config,
                "config line " + std::to_string(line_no) + " is not key = value");
        kv[io::trim(line.substr(0, eq))] = io::trim(line.substr(eq + 1));
    }
    return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

}  // namespace fasw
