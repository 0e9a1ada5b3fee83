#pragma once

// Deterministic text artifacts. Doubles are printed with std::to_chars
// (shortest round-trip form), so identical values give identical bytes and
// re-parsing reproduces the exact binary64 value. CSV uses '.' decimals, a
// header row, '\n' separators, and a terminating newline.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "fplab/common.hpp"

namespace fplab {

inline std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_size(std::size_t v) { return std::to_string(v); }

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) {
        check_arg(width_ > 0, "Csv: empty header");
        append_row(header);
    }

    void row(const std::vector<std::string>& cells) {
        check_arg(cells.size() == width_, "Csv: row width mismatch");
        append_row(cells);
    }

    const std::string& str() const { return text_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        check_run(out.good(), "Csv: cannot open " + path);
        out << text_;
        check_run(out.good(), "Csv: write failed for " + path);
    }

private:
    void append_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t width_;
    std::string text_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    check_run(out.good(), "write_text_file: cannot open " + path);
    out << content;
    check_run(out.good(), "write_text_file: write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_run(in.good(), "read_text_file: cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace fplab
