// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/pointcloud_io.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mlpcm {

void save_xyz(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    char buf[120];
    for (std::int64_t i = 0; i < cloud.size(); ++i) {
        const float* p = cloud.point(i);
        // %.9g is exact for float32 and locale-independent with snprintf on '.' locales;
        // write through std::to_chars to be safe about the decimal separator
        char* cur = buf;
        for (int a = 0; a < 3; ++a) {
            auto res = std::to_chars(cur, buf + sizeof(buf), p[a], std::chars_format::general, 9);
            cur = res.ptr;
            *cur++ = (a == 2) ? '\n' : ' ';
        }
        out.write(buf, cur - buf);
    }
    if (!out) throw IoError("failed writing: " + path);
}

PointCloud load_xyz(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    PointCloud cloud;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const char* cur = line.c_str();
        const char* end = cur + line.size();
        for (int a = 0; a < 3; ++a) {
            while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
            float v;
            auto res = std::from_chars(cur, end, v);
            if (res.ec != std::errc())
                throw IoError(path + ":" + std::to_string(lineno) + ": malformed coordinate");
            cloud.points.push_back(v);
            cur = res.ptr;
        }
    }
    if (cloud.points.empty()) throw IoError(path + ": no points");
    return cloud;
}

void save_pcf(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write("PCF1", 4);
    auto n = static_cast<std::uint32_t>(cloud.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(cloud.points.data()),
              static_cast<std::streamsize>(cloud.points.size() * sizeof(float)));
    if (!out) throw IoError("failed writing: " + path);
}

PointCloud load_pcf(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PCF1", 4) != 0) throw IoError(path + ": bad magic, not a PCF1 file");
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in || n == 0) throw IoError(path + ": bad point count");
    PointCloud cloud;
    cloud.points.resize(static_cast<size_t>(n) * 3);
    in.read(reinterpret_cast<char*>(cloud.points.data()),
            static_cast<std::streamsize>(cloud.points.size() * sizeof(float)));
    if (!in) throw IoError(path + ": truncated payload");
    return cloud;
}

namespace {
bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

void save_point_cloud(const std::string& path, const PointCloud& cloud) {
    if (has_suffix(path, ".xyz"))
        save_xyz(path, cloud);
    else
        save_pcf(path, cloud);
}

PointCloud load_point_cloud(const std::string& path) {
    return has_suffix(path, ".xyz") ? load_xyz(path) : load_pcf(path);
}

}  // namespace mlpcm
