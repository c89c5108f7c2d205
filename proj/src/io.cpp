#include "effuse/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace effuse {

static_assert(std::endian::native == std::endian::little,
              "tensor dump I/O assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'E', 'F', 'T', '1'};
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    out.write(kMagic, 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (std::int64_t e : t.shape()) {
        const std::uint32_t extent = static_cast<std::uint32_t>(e);
        out.write(reinterpret_cast<const char*>(&extent), 4);
    }
    const auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    if (!out) {
        throw DataError("short write to " + path.string());
    }
}

Tensor load_tensor(const std::filesystem::path& path, bool requires_grad) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("bad tensor magic in " + path.string());
    }
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 4);
    if (!in || rank > 8) {
        throw DataError("bad tensor rank in " + path.string());
    }
    std::vector<std::int64_t> shape(rank);
    std::int64_t count = 1;
    for (auto& e : shape) {
        std::uint32_t extent = 0;
        in.read(reinterpret_cast<char*>(&extent), 4);
        if (!in || extent == 0) {
            throw DataError("bad tensor extent in " + path.string());
        }
        e = extent;
        count *= e;
    }
    std::vector<double> data(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) {
        throw DataError("truncated tensor payload in " + path.string());
    }
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        throw DataError("short write to " + path.string());
    }
}

}  // namespace effuse
