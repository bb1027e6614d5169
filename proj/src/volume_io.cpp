#include "mvladdm/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvladdm {

namespace {

struct RawTensor {
    int height = 0, width = 0, channels = 0, frames = 0;
    std::vector<float> data;  // [t][y][x][c]

    float at(int x, int y, int c, int t) const {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
    }
};

float float_from_le(const unsigned char bytes[4]) {
    std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                         (static_cast<std::uint32_t>(bytes[1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[3]) << 24);
    return std::bit_cast<float>(bits);
}

void float_to_le(float v, unsigned char bytes[4]) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    bytes[0] = static_cast<unsigned char>(bits & 0xff);
    bytes[1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    bytes[2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    bytes[3] = static_cast<unsigned char>((bits >> 24) & 0xff);
}

RawTensor read_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header)) throw ParseError("'" + path + "': missing header line", 1);
    std::istringstream hs(header);
    RawTensor raw;
    if (!(hs >> raw.height >> raw.width >> raw.channels >> raw.frames))
        throw ParseError("'" + path + "': header must be 'H W C T'", 1);
    std::string extra;
    if (hs >> extra) throw ParseError("'" + path + "': trailing tokens in header", 1);
    if (raw.height < 1 || raw.width < 1 || raw.channels < 1 || raw.frames < 1)
        throw ParseError("'" + path + "': header dimensions must be positive", 1);
    std::size_t count = static_cast<std::size_t>(raw.height) * raw.width * raw.channels * raw.frames;
    raw.data.resize(count);
    std::vector<unsigned char> bytes(count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw ParseError("'" + path + "': truncated data section", 2);
    for (std::size_t i = 0; i < count; ++i) raw.data[i] = float_from_le(&bytes[i * 4]);
    return raw;
}

void write_raw(const RawTensor& raw, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << raw.height << ' ' << raw.width << ' ' << raw.channels << ' ' << raw.frames << '\n';
    std::vector<unsigned char> bytes(raw.data.size() * 4);
    for (std::size_t i = 0; i < raw.data.size(); ++i) float_to_le(raw.data[i], &bytes[i * 4]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoFailure("write to '" + path + "' failed");
}

}  // namespace

Volume read_volume(const std::string& path) {
    RawTensor raw = read_raw(path);
    if (raw.channels != 1) throw ParseError("'" + path + "': volumes require C=1", 1);
    Volume v;
    v.height = raw.height;
    v.width = raw.width;
    v.frames = raw.frames;
    v.data.resize(raw.data.size());
    for (std::size_t i = 0; i < raw.data.size(); ++i) v.data[i] = raw.data[i];
    return v;
}

std::vector<FlowField> read_flows(const std::string& path) {
    RawTensor raw = read_raw(path);
    if (raw.channels != 2) throw ParseError("'" + path + "': flow fields require C=2", 1);
    std::vector<FlowField> flows(raw.frames);
    for (int t = 0; t < raw.frames; ++t) {
        FlowField& f = flows[t];
        f.dx.height = f.dy.height = raw.height;
        f.dx.width = f.dy.width = raw.width;
        f.dx.data.resize(static_cast<std::size_t>(raw.height) * raw.width);
        f.dy.data.resize(f.dx.data.size());
        for (int y = 0; y < raw.height; ++y)
            for (int x = 0; x < raw.width; ++x) {
                f.dx.at(x, y) = raw.at(x, y, 0, t);
                f.dy.at(x, y) = raw.at(x, y, 1, t);
            }
    }
    return flows;
}

std::vector<DescriptorMap> read_maps(const std::string& path) {
    RawTensor raw = read_raw(path);
    std::vector<DescriptorMap> maps(raw.frames);
    for (int t = 0; t < raw.frames; ++t) {
        DescriptorMap& m = maps[t];
        m.height = raw.height;
        m.width = raw.width;
        m.channels = raw.channels;
        m.data.resize(static_cast<std::size_t>(raw.height) * raw.width * raw.channels);
        for (int y = 0; y < raw.height; ++y)
            for (int x = 0; x < raw.width; ++x)
                for (int c = 0; c < raw.channels; ++c) m.at(x, y, c) = raw.at(x, y, c, t);
    }
    return maps;
}

void write_volume(const Volume& v, const std::string& path) {
    RawTensor raw;
    raw.height = v.height;
    raw.width = v.width;
    raw.channels = 1;
    raw.frames = v.frames;
    raw.data.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) raw.data[i] = static_cast<float>(v.data[i]);
    write_raw(raw, path);
}

void write_flows(const std::vector<FlowField>& flows, const std::string& path) {
    if (flows.empty()) throw IoFailure("write_flows: no frames");
    RawTensor raw;
    raw.height = flows[0].dx.height;
    raw.width = flows[0].dx.width;
    raw.channels = 2;
    raw.frames = static_cast<int>(flows.size());
    raw.data.resize(static_cast<std::size_t>(raw.height) * raw.width * 2 * raw.frames);
    for (int t = 0; t < raw.frames; ++t)
        for (int y = 0; y < raw.height; ++y)
            for (int x = 0; x < raw.width; ++x) {
                std::size_t base =
                    ((static_cast<std::size_t>(t) * raw.height + y) * raw.width + x) * 2;
                raw.data[base] = static_cast<float>(flows[t].dx.at(x, y));
                raw.data[base + 1] = static_cast<float>(flows[t].dy.at(x, y));
            }
    write_raw(raw, path);
}

void write_maps(const std::vector<DescriptorMap>& maps, const std::string& path) {
    if (maps.empty()) throw IoFailure("write_maps: no frames");
    RawTensor raw;
    raw.height = maps[0].height;
    raw.width = maps[0].width;
    raw.channels = maps[0].channels;
    raw.frames = static_cast<int>(maps.size());
    raw.data.resize(static_cast<std::size_t>(raw.height) * raw.width * raw.channels * raw.frames);
    std::size_t i = 0;
    for (const DescriptorMap& m : maps)
        for (int y = 0; y < raw.height; ++y)
            for (int x = 0; x < raw.width; ++x)
                for (int c = 0; c < raw.channels; ++c) raw.data[i++] = static_cast<float>(m.at(x, y, c));
    write_raw(raw, path);
}

}  // namespace mvladdm
