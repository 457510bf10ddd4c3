#include "pointmatch/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pointmatch/error.hpp"

namespace pointmatch {

static_assert(std::endian::native == std::endian::little, "payload IO assumes a little-endian host");

namespace {

namespace fs = std::filesystem;

std::size_t element_size(ElementType t) {
    switch (t) {
    case ElementType::Short:
    case ElementType::UShort: return 2;
    case ElementType::Float: break;
    }
    return 4;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<double> parse_numbers(const std::string &value, const std::string &key) {
    std::istringstream in(value);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception &) {
            throw CorruptHeader("non-numeric value for " + key + ": '" + value + "'");
        }
    }
    return out;
}

bool parse_bool(const std::string &value) {
    std::string v = value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    return v == "true" || v == "1";
}

std::vector<char> read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<float> decode_payload(std::span<const char> bytes, ElementType type, std::size_t count, double offset,
                                  const fs::path &path) {
    const std::size_t want = count * element_size(type);
    if (bytes.size() != want) {
        throw PayloadSizeMismatch("'" + path.string() + "': payload has " + std::to_string(bytes.size()) +
                                  " bytes, header requires " + std::to_string(want));
    }
    std::vector<float> out(count);
    const auto convert = [&](auto tag) {
        using T = decltype(tag);
        for (std::size_t n = 0; n < count; ++n) {
            T v;
            std::memcpy(&v, bytes.data() + n * sizeof(T), sizeof(T));
            out[n] = static_cast<float>(static_cast<double>(v) + offset);
        }
    };
    switch (type) {
    case ElementType::Short: convert(int16_t{}); break;
    case ElementType::UShort: convert(uint16_t{}); break;
    case ElementType::Float:
        if (offset == 0.0) {
            std::memcpy(out.data(), bytes.data(), want);
        } else {
            convert(float{});
        }
        break;
    }
    return out;
}

std::vector<char> encode_payload(std::span<const float> values, ElementType type) {
    std::vector<char> bytes(values.size() * element_size(type));
    const auto convert = [&](auto tag) {
        using T = decltype(tag);
        for (std::size_t n = 0; n < values.size(); ++n) {
            const double r = std::clamp(std::round(static_cast<double>(values[n])),
                                        static_cast<double>(std::numeric_limits<T>::min()),
                                        static_cast<double>(std::numeric_limits<T>::max()));
            const T v = static_cast<T>(r);
            std::memcpy(bytes.data() + n * sizeof(T), &v, sizeof(T));
        }
    };
    switch (type) {
    case ElementType::Short: convert(int16_t{}); break;
    case ElementType::UShort: convert(uint16_t{}); break;
    case ElementType::Float: std::memcpy(bytes.data(), values.data(), bytes.size()); break;
    }
    return bytes;
}

ElementType parse_met_type(const std::string &v) {
    if (v == "MET_SHORT") return ElementType::Short;
    if (v == "MET_USHORT") return ElementType::UShort;
    if (v == "MET_FLOAT") return ElementType::Float;
    throw UnsupportedFormat("unsupported ElementType '" + v + "'");
}

std::string met_type_name(ElementType t) {
    switch (t) {
    case ElementType::Short: return "MET_SHORT";
    case ElementType::UShort: return "MET_USHORT";
    case ElementType::Float: break;
    }
    return "MET_FLOAT";
}

ElementType parse_dtype(const std::string &v) {
    if (v == "int16") return ElementType::Short;
    if (v == "uint16") return ElementType::UShort;
    if (v == "float32") return ElementType::Float;
    throw UnsupportedFormat("unsupported dtype '" + v + "'");
}

std::string dtype_name(ElementType t) {
    switch (t) {
    case ElementType::Short: return "int16";
    case ElementType::UShort: return "uint16";
    case ElementType::Float: break;
    }
    return "float32";
}

Dims checked_dims(const std::vector<double> &v, const fs::path &path) {
    if (v.size() != 3) throw CorruptHeader("'" + path.string() + "': expected 3 dimensions");
    Dims d{};
    for (int a = 0; a < 3; ++a) {
        if (!(v[a] >= 1.0) || v[a] != std::floor(v[a]))
            throw CorruptHeader("'" + path.string() + "': dimensions must be positive integers");
        d[a] = static_cast<int64_t>(v[a]);
    }
    return d;
}

Spacing checked_spacing(const std::vector<double> &v, const fs::path &path) {
    if (v.size() != 3) throw CorruptHeader("'" + path.string() + "': expected 3 spacing values");
    Spacing s{};
    for (int a = 0; a < 3; ++a) {
        if (!(v[a] > 0.0) || !std::isfinite(v[a])) throw CorruptHeader("'" + path.string() + "': spacing must be > 0");
        s[a] = v[a];
    }
    return s;
}

WorldPoint checked_origin(const std::vector<double> &v, const fs::path &path) {
    if (v.size() != 3) throw CorruptHeader("'" + path.string() + "': expected 3 origin values");
    return {v[0], v[1], v[2]};
}

Volume load_metaimage(const fs::path &path, double offset) {
    const std::vector<char> bytes = read_file(path);
    std::map<std::string, std::string> fields;
    std::size_t pos = 0;
    std::optional<std::string> data_file;
    while (pos < bytes.size()) {
        auto end = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
        const std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos), end);
        pos = static_cast<std::size_t>(end - bytes.begin()) + (end == bytes.end() ? 0 : 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (trim(line).empty()) continue;
            throw CorruptHeader("'" + path.string() + "': malformed header line '" + line + "'");
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key == "ElementDataFile") {
            data_file = value;
            break;
        }
        fields[key] = value;
    }
    if (!data_file) throw CorruptHeader("'" + path.string() + "': missing ElementDataFile");

    const auto get = [&](const std::string &key) -> std::optional<std::string> {
        auto it = fields.find(key);
        if (it == fields.end()) return std::nullopt;
        return it->second;
    };

    if (auto nd = get("NDims"); !nd || trim(*nd) != "3") {
        if (!nd) throw CorruptHeader("'" + path.string() + "': missing NDims");
        throw UnsupportedFormat("'" + path.string() + "': only NDims = 3 is supported");
    }
    if (auto c = get("CompressedData"); c && parse_bool(*c))
        throw UnsupportedFormat("'" + path.string() + "': compressed payloads are not supported");
    for (const char *key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
        if (auto v = get(key); v && parse_bool(*v))
            throw UnsupportedFormat("'" + path.string() + "': big-endian payloads are not supported");
    }
    if (auto ch = get("ElementNumberOfChannels"); ch && trim(*ch) != "1")
        throw UnsupportedFormat("'" + path.string() + "': multi-channel images are not supported");
    for (const char *key : {"TransformMatrix", "Rotation", "Orientation"}) {
        if (auto v = get(key)) {
            const auto m = parse_numbers(*v, key);
            if (m.size() != 9) throw CorruptHeader("'" + path.string() + "': " + key + " needs 9 values");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (std::abs(m[r * 3 + c] - (r == c ? 1.0 : 0.0)) > 1e-6)
                        throw UnsupportedFormat("'" + path.string() + "': non-identity direction cosines");
        }
    }

    auto dim_str = get("DimSize");
    if (!dim_str) throw CorruptHeader("'" + path.string() + "': missing DimSize");
    auto spacing_str = get("ElementSpacing");
    if (!spacing_str) spacing_str = get("ElementSize");
    if (!spacing_str) throw CorruptHeader("'" + path.string() + "': missing ElementSpacing");
    auto origin_str = get("Offset");
    if (!origin_str) origin_str = get("Origin");
    if (!origin_str) origin_str = get("Position");
    auto type_str = get("ElementType");
    if (!type_str) throw CorruptHeader("'" + path.string() + "': missing ElementType");

    const Dims dims = checked_dims(parse_numbers(*dim_str, "DimSize"), path);
    const Spacing spacing = checked_spacing(parse_numbers(*spacing_str, "ElementSpacing"), path);
    const WorldPoint origin = origin_str ? checked_origin(parse_numbers(*origin_str, "Offset"), path) : WorldPoint{};
    const ElementType type = parse_met_type(*type_str);
    const Modality modality = get("Modality") ? parse_modality(*get("Modality")) : Modality::Other;
    const auto count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);

    std::vector<float> values;
    if (*data_file == "LOCAL") {
        values = decode_payload(std::span<const char>(bytes).subspan(pos), type, count, offset, path);
    } else {
        const fs::path raw = path.parent_path() / *data_file;
        const std::vector<char> payload = read_file(raw);
        values = decode_payload(payload, type, count, offset, raw);
    }
    return Volume(dims, spacing, origin, std::move(values), modality, offset);
}

Volume load_sidecar(const fs::path &json_path, double offset) {
    std::ifstream in(json_path);
    if (!in) throw Error("cannot open '" + json_path.string() + "'");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception &e) {
        throw CorruptHeader("'" + json_path.string() + "': " + e.what());
    }
    const auto numbers = [&](const char *key) -> std::vector<double> {
        if (!meta.contains(key) || !meta[key].is_array())
            throw CorruptHeader("'" + json_path.string() + "': missing '" + key + "'");
        std::vector<double> out;
        for (const auto &v : meta[key]) {
            if (!v.is_number()) throw CorruptHeader("'" + json_path.string() + "': '" + key + "' must be numeric");
            out.push_back(v.get<double>());
        }
        return out;
    };
    const Dims dims = checked_dims(numbers("dims"), json_path);
    const Spacing spacing = checked_spacing(numbers("spacing"), json_path);
    const WorldPoint origin = meta.contains("origin") ? checked_origin(numbers("origin"), json_path) : WorldPoint{};
    const ElementType type = parse_dtype(meta.value("dtype", std::string("float32")));
    const Modality modality = parse_modality(meta.value("modality", std::string("OTHER")));
    fs::path raw = json_path;
    raw.replace_extension(".raw");
    const std::vector<char> payload = read_file(raw);
    auto values = decode_payload(payload, type, static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), offset, raw);
    return Volume(dims, spacing, origin, std::move(values), modality, offset);
}

void write_all(const fs::path &path, const std::string &header, const std::vector<char> &payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string format_triple(double a, double b, double c) {
    std::ostringstream s;
    s.precision(17);
    s << a << ' ' << b << ' ' << c;
    return s.str();
}

} // namespace

Volume load_volume(const fs::path &path, double intensity_offset) {
    const std::string ext = path.extension().string();
    if (ext == ".mha" || ext == ".mhd") return load_metaimage(path, intensity_offset);
    if (ext == ".json") return load_sidecar(path, intensity_offset);
    if (ext == ".raw") {
        fs::path meta = path;
        meta.replace_extension(".json");
        return load_sidecar(meta, intensity_offset);
    }
    throw UnsupportedFormat("unsupported volume format '" + path.string() + "'");
}

void write_volume(const Volume &volume, const fs::path &path, ElementType type) {
    const std::string ext = path.extension().string();
    const auto &d = volume.dims();
    const auto &s = volume.spacing();
    const auto &o = volume.origin();
    const std::vector<char> payload = encode_payload(volume.intensities(), type);

    if (ext == ".mha" || ext == ".mhd") {
        fs::path raw = path;
        raw.replace_extension(".raw");
        std::ostringstream h;
        h << "ObjectType = Image\n"
          << "NDims = 3\n"
          << "BinaryData = True\n"
          << "BinaryDataByteOrderMSB = False\n"
          << "CompressedData = False\n"
          << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
          << "Offset = " << format_triple(o.x, o.y, o.z) << "\n"
          << "CenterOfRotation = 0 0 0\n"
          << "AnatomicalOrientation = RAI\n"
          << "ElementSpacing = " << format_triple(s[0], s[1], s[2]) << "\n"
          << "DimSize = " << d[0] << ' ' << d[1] << ' ' << d[2] << "\n";
        if (volume.modality() != Modality::Other) h << "Modality = MET_MOD_" << to_string(volume.modality()) << "\n";
        h << "ElementType = " << met_type_name(type) << "\n";
        if (ext == ".mha") {
            h << "ElementDataFile = LOCAL\n";
            write_all(path, h.str(), payload);
        } else {
            h << "ElementDataFile = " << raw.filename().string() << "\n";
            write_all(path, h.str(), {});
            write_all(raw, {}, payload);
        }
        return;
    }
    if (ext == ".json") {
        fs::path raw = path;
        raw.replace_extension(".raw");
        nlohmann::json meta = {
            {"dims", {d[0], d[1], d[2]}},
            {"spacing", {s[0], s[1], s[2]}},
            {"origin", {o.x, o.y, o.z}},
            {"dtype", dtype_name(type)},
            {"modality", std::string(to_string(volume.modality()))},
        };
        write_all(path, meta.dump(2) + "\n", {});
        write_all(raw, {}, payload);
        return;
    }
    throw UnsupportedFormat("unsupported output format '" + path.string() + "'");
}

} // namespace pointmatch
