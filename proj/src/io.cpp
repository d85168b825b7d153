#include "cubesounder/io.hpp"

#include <fstream>
#include <stdexcept>
#include <system_error>

namespace cubesounder::io {

void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        body(os);
        os.flush();
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw std::runtime_error("cannot rename into " + path.string());
    }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    write_atomic(path, [&](std::ostream& os) { os << content; });
}

}  // namespace cubesounder::io
