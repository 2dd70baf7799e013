#pragma once

#include "emotrig/errors.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef EMOTRIG_DEFAULT_DATA_DIR
#define EMOTRIG_DEFAULT_DATA_DIR "data"
#endif

namespace emotrig::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Directory holding the directive registry and the affect lexicon.
/// EMOTRIG_DATA_DIR overrides the compiled-in location.
inline std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("EMOTRIG_DATA_DIR"); env && *env) return env;
    return EMOTRIG_DEFAULT_DATA_DIR;
}

} // namespace emotrig::io
