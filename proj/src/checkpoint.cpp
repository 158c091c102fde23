// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mlpcm {

namespace {

constexpr const char* kMagic = "MLPCMCKPT1";

struct HeaderEntry {
    std::string name;
    std::vector<int> shape;
    std::int64_t offset = 0;
};

std::string shape_field(const std::vector<int>& shape) {
    std::string s;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

std::vector<int> parse_shape_field(const std::string& field, const std::string& name) {
    std::vector<int> shape;
    std::string cur;
    for (char ch : field + "x") {
        if (ch == 'x') {
            if (cur.empty()) throw IoError("checkpoint: bad shape field for " + name);
            shape.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return shape;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
    std::ostringstream header;
    header << kMagic << "\n";
    std::int64_t offset = 0;
    for (const auto& p : store.items()) {
        header << p.name << " " << shape_field(p.tensor.shape()) << " f32 " << offset << "\n";
        offset += p.tensor.numel() * static_cast<std::int64_t>(sizeof(float));
    }
    header << "---\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& p : store.items()) {
        auto d = p.tensor.data();
        out.write(reinterpret_cast<const char*>(d.data()),
                  static_cast<std::streamsize>(d.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

namespace {

std::vector<HeaderEntry> read_header(std::istream& in, const std::string& path,
                                     std::int64_t& payload_start) {
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw IoError("not a checkpoint file (bad magic): " + path);
    std::vector<HeaderEntry> entries;
    while (std::getline(in, line)) {
        if (line == "---") break;
        std::istringstream ls(line);
        HeaderEntry e;
        std::string shape_f, dtype;
        if (!(ls >> e.name >> shape_f >> dtype >> e.offset))
            throw IoError("checkpoint: malformed header line '" + line + "' in " + path);
        if (dtype != "f32") throw IoError("checkpoint: unsupported dtype " + dtype + " in " + path);
        e.shape = parse_shape_field(shape_f, e.name);
        entries.push_back(std::move(e));
    }
    payload_start = in.tellg();
    return entries;
}

}  // namespace

void load_checkpoint(const std::string& path, ParamStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::int64_t payload_start = 0;
    auto entries = read_header(in, path, payload_start);

    for (auto& p : store.items()) {
        const HeaderEntry* found = nullptr;
        for (const auto& e : entries)
            if (e.name == p.name) {
                found = &e;
                break;
            }
        if (!found) throw IoError("checkpoint " + path + " is missing tensor " + p.name);
        if (found->shape != p.tensor.shape())
            throw ShapeError("checkpoint tensor " + p.name + " has shape " + shape_str(found->shape) +
                             ", expected " + shape_str(p.tensor.shape()));
        in.seekg(payload_start + found->offset);
        auto d = p.tensor.mutable_data();
        in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!in) throw IoError("checkpoint " + path + ": truncated payload at " + p.name);
    }
}

ParamStore read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::int64_t payload_start = 0;
    auto entries = read_header(in, path, payload_start);
    ParamStore store;
    for (const auto& e : entries) {
        Tensor t = Tensor::zeros(e.shape);
        in.seekg(payload_start + e.offset);
        auto d = t.mutable_data();
        in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!in) throw IoError("checkpoint " + path + ": truncated payload at " + e.name);
        store.add(e.name, t);
    }
    store.set_requires_grad(false);
    return store;
}

bool checkpoint_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace mlpcm
