#ifndef KAWASAKI_IO_HPP
#define KAWASAKI_IO_HPP

// Whole-file text IO; paths ending in ".gz" go through zlib.

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace kawasaki {

inline bool is_gzip_path(const std::string& path) {
    return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    if (is_gzip_path(path)) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
        std::size_t off = 0;
        while (off < text.size()) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(text.size() - off, 1u << 20));
            if (gzwrite(f, text.data() + off, chunk) != static_cast<int>(chunk)) {
                gzclose(f);
                throw std::runtime_error("write failed on '" + path + "'");
            }
            off += chunk;
        }
        gzclose(f);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed on '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    if (is_gzip_path(path)) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw std::runtime_error("cannot open '" + path + "'");
        std::string out;
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, n);
        gzclose(f);
        if (n < 0) throw std::runtime_error("corrupt gzip stream in '" + path + "'");
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace kawasaki

#endif
