#include "gridfield/dataset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridfield/ingest.hpp"
#include "gridfield/png_io.hpp"

namespace gridfield {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string pad4(int n) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << n;
    return os.str();
}

class Reader {
public:
    explicit Reader(png::Bytes bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <typename T>
    T get() {
        if (remaining() < sizeof(T)) throw FormatError(name_ + ": truncated record");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

private:
    png::Bytes bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    const png::Bytes& bytes() const { return bytes_; }

private:
    png::Bytes bytes_;
};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Camera read_pose(const fs::path& path) {
    const json j = read_json(path);
    try {
        Camera cam;
        const auto m = j.at("world_to_camera").get<std::vector<double>>();
        if (m.size() != 16) throw FormatError(path.string() + ": world_to_camera must have 16 entries");
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m[r * 4 + c];
        }
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.near = j.at("near").get<double>();
        return cam;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json pose_json(const Camera& cam) {
    std::vector<double> m(16);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m[r * 4 + c] = cam.world_to_camera(r, c);
    }
    return {{"world_to_camera", m}, {"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"near", cam.near}};
}

void add(ValidationReport& report, int view, int local, std::string code, std::string message) {
    report.push_back({view, local, std::move(code), std::move(message)});
}

}  // namespace

ValidationReport validate_dataset(const Dataset& ds) {
    ValidationReport report;
    const int width = ds.meta.width;
    const int height = ds.meta.height;
    if (ds.meta.dim < 1) add(report, -1, -1, "meta.dim", "embedding dimension must be >= 1");
    if (ds.views.empty()) add(report, -1, -1, "views.empty", "dataset has no views");
    if (ds.masks.size() != ds.views.size()) {
        add(report, -1, -1, "masks.views", "per-view mask list count differs from view count");
    }

    for (int t = 0; t < ds.view_count(); ++t) {
        const auto& v = ds.views[t];
        if (v.rgb.width != width || v.rgb.height != height) {
            add(report, t, -1, "view.size", "image size differs from dataset size");
        }
        if (!v.rgb.data.allFinite() || (v.rgb.data.array() < 0.0f).any() || (v.rgb.data.array() > 1.0f).any()) {
            add(report, t, -1, "view.pixels", "pixel values must be finite and within [0,1]");
        }
        const Camera& c = v.camera;
        if (!(c.fx > 0.0 && c.fy > 0.0)) add(report, t, -1, "camera.focal", "fx and fy must be positive");
        if (!(c.near > 0.0)) add(report, t, -1, "camera.near", "near must be positive");
        if (!c.world_to_camera.allFinite()) {
            add(report, t, -1, "camera.finite", "world_to_camera must be finite");
        } else {
            const Mat3 r = c.rotation();
            if (((r * r.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
                add(report, t, -1, "camera.rotation", "rotation block is not orthonormal");
            } else if (std::abs(r.determinant() - 1.0) > 1e-6) {
                add(report, t, -1, "camera.rotation", "rotation determinant is not +1");
            }
            if ((c.world_to_camera.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
                add(report, t, -1, "camera.rigid", "last row of world_to_camera must be (0,0,0,1)");
            }
        }
    }

    for (std::size_t t = 0; t < ds.masks.size(); ++t) {
        const int view = static_cast<int>(t);
        for (const auto& m : ds.masks[t]) {
            if (m.view != view || view >= ds.view_count()) {
                add(report, m.view, m.local, "mask.view", "mask view index is not a valid view");
            }
            if (m.bitmap.rows() != height || m.bitmap.cols() != width) {
                add(report, view, m.local, "mask.size", "mask bitmap size differs from image size");
            }
            const long area = count_area(m.bitmap);
            if (area != m.area) add(report, view, m.local, "mask.area", "recorded area differs from bitmap count");
            if (area < 1) add(report, view, m.local, "mask.empty", "mask has zero area");
            if (m.embedding.size() != ds.meta.dim) {
                add(report, view, m.local, "embedding.dim",
                    "embedding length " + std::to_string(m.embedding.size()) + " differs from D=" +
                        std::to_string(ds.meta.dim));
            } else if (!m.embedding.allFinite() || !(m.embedding.norm() > 0.0f)) {
                add(report, view, m.local, "embedding.norm", "embedding must be finite with positive norm");
            }
            if (m.histogram) {
                const auto& bins = m.histogram->bins;
                if ((bins.array() < 0.0f).any() || !bins.allFinite()) {
                    add(report, view, m.local, "histogram.bins", "histogram bins must be finite and non-negative");
                } else if (std::abs(bins.cast<double>().sum() - 1.0) > 1e-6) {
                    add(report, view, m.local, "histogram.sum", "histogram does not sum to 1");
                }
            }
        }
        for (std::size_t j = 1; j < ds.masks[t].size(); ++j) {
            if (ds.masks[t][j - 1].local >= ds.masks[t][j].local) {
                add(report, view, ds.masks[t][j].local, "mask.order", "masks must be sorted by unique local index");
            }
        }
    }

    for (const auto& [key, list] : ds.matches.pairs) {
        const auto [a, b] = key;
        if (a < 0 || b < 0 || a >= ds.view_count() || b >= ds.view_count() || a >= b) {
            add(report, a, -1, "matches.views", "match pair references invalid views");
            continue;
        }
        auto inside = [&](const Eigen::Vector2f& p) {
            return p.x() >= 0.0f && p.y() >= 0.0f && p.x() < static_cast<float>(width) &&
                   p.y() < static_cast<float>(height);
        };
        std::set<std::tuple<float, float, float, float>> seen;
        for (const auto& m : list) {
            if (!inside(m.a) || !inside(m.b)) {
                add(report, a, -1, "matches.bounds",
                    "match between views " + std::to_string(a) + " and " + std::to_string(b) + " is out of bounds");
            }
            if (!seen.insert({m.a.x(), m.a.y(), m.b.x(), m.b.y()}).second) {
                add(report, a, -1, "matches.duplicate",
                    "duplicate match between views " + std::to_string(a) + " and " + std::to_string(b));
            }
        }
    }

    for (std::size_t i = 0; i < ds.canonical.size(); ++i) {
        if (ds.canonical[i].size() != ds.meta.dim) {
            add(report, -1, static_cast<int>(i), "canonical.dim", "canonical embedding length differs from D");
        }
    }
    return report;
}

Dataset read_dataset(const fs::path& dir) {
    Dataset ds;
    const json meta = read_json(dir / "meta.json");
    int count = 0;
    try {
        ds.meta.dim = meta.at("D").get<int>();
        ds.meta.width = meta.at("width").get<int>();
        ds.meta.height = meta.at("height").get<int>();
        ds.meta.source = meta.value("source", std::string());
        count = meta.at("T").get<int>();
    } catch (const json::exception& e) {
        throw FormatError("meta.json: " + std::string(e.what()));
    }
    if (count < 0 || ds.meta.dim < 0) throw FormatError("meta.json: negative counts");

    ds.views.resize(static_cast<std::size_t>(count));
    ds.masks.resize(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) {
        const fs::path base = dir / "views";
        ds.views[t].rgb = png::decode_rgb(png::read_file(base / (pad4(t) + ".png")));
        ds.views[t].camera = read_pose(base / (pad4(t) + ".pose.json"));

        const fs::path mask_dir = dir / "masks" / pad4(t);
        std::vector<int> locals;
        if (fs::exists(mask_dir)) {
            for (const auto& entry : fs::directory_iterator(mask_dir)) {
                if (entry.path().extension() != ".png") continue;
                try {
                    locals.push_back(std::stoi(entry.path().stem().string()));
                } catch (const std::exception&) {
                    throw FormatError("unexpected mask file " + entry.path().string());
                }
            }
        }
        std::sort(locals.begin(), locals.end());
        for (int j : locals) {
            MaskRecord m;
            m.view = t;
            m.local = j;
            m.bitmap = png::decode_mask(png::read_file(mask_dir / (pad4(j) + ".png")));
            m.area = count_area(m.bitmap);
            ds.masks[t].push_back(std::move(m));
        }
    }

    auto lookup = [&](std::uint32_t view, std::uint32_t local, const std::string& file) -> MaskRecord& {
        if (view >= ds.masks.size()) throw FormatError(file + ": record for unknown view " + std::to_string(view));
        for (auto& m : ds.masks[view]) {
            if (m.local == static_cast<int>(local)) return m;
        }
        throw FormatError(file + ": record for unknown mask (" + std::to_string(view) + ", " + std::to_string(local) +
                          ")");
    };

    {
        Reader r(png::read_file(dir / "embeddings.bin"), "embeddings.bin");
        std::pair<std::uint32_t, std::uint32_t> last{0, 0};
        bool first = true;
        while (!r.done()) {
            const auto view = r.get<std::uint32_t>();
            const auto local = r.get<std::uint32_t>();
            if (!first && std::pair(view, local) <= last) throw FormatError("embeddings.bin: records not sorted");
            first = false;
            last = {view, local};
            MaskRecord& m = lookup(view, local, "embeddings.bin");
            m.embedding.resize(ds.meta.dim);
            for (int k = 0; k < ds.meta.dim; ++k) m.embedding(k) = r.get<float>();
        }
        for (const auto& list : ds.masks) {
            for (const auto& m : list) {
                if (m.embedding.size() == 0 && ds.meta.dim > 0) {
                    throw FormatError("embeddings.bin: missing record for mask (" + std::to_string(m.view) + ", " +
                                      std::to_string(m.local) + ")");
                }
            }
        }
    }

    if (fs::exists(dir / "histograms.bin")) {
        Reader r(png::read_file(dir / "histograms.bin"), "histograms.bin");
        while (!r.done()) {
            const auto view = r.get<std::uint32_t>();
            const auto local = r.get<std::uint32_t>();
            ColorHistogram h;
            for (int k = 0; k < ColorHistogram::kBins; ++k) h.bins(k) = r.get<float>();
            lookup(view, local, "histograms.bin").histogram = h;
        }
    }
    ensure_histograms(ds);

    if (fs::exists(dir / "matches.bin")) {
        Reader r(png::read_file(dir / "matches.bin"), "matches.bin");
        while (!r.done()) {
            const auto a = r.get<std::uint32_t>();
            const auto b = r.get<std::uint32_t>();
            KeypointMatch m;
            m.a.x() = r.get<float>();
            m.a.y() = r.get<float>();
            m.b.x() = r.get<float>();
            m.b.y() = r.get<float>();
            const int va = static_cast<int>(a);
            const int vb = static_cast<int>(b);
            auto& list = ds.matches.pairs[{std::min(va, vb), std::max(va, vb)}];
            list.push_back(va <= vb ? m : m.swapped());
        }
    }

    if (fs::exists(dir / "canonical.bin")) {
        Reader r(png::read_file(dir / "canonical.bin"), "canonical.bin");
        if (ds.meta.dim == 0 || r.remaining() % (sizeof(float) * ds.meta.dim) != 0) {
            throw FormatError("canonical.bin: size is not a multiple of D floats");
        }
        while (!r.done()) {
            Eigen::VectorXf v(ds.meta.dim);
            for (int k = 0; k < ds.meta.dim; ++k) v(k) = r.get<float>();
            ds.canonical.push_back(std::move(v));
        }
    }
    return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir / "views");
    fs::create_directories(dir / "masks");
    write_json(dir / "meta.json", {{"D", ds.meta.dim},
                                   {"width", ds.meta.width},
                                   {"height", ds.meta.height},
                                   {"T", ds.view_count()},
                                   {"source", ds.meta.source}});
    for (int t = 0; t < ds.view_count(); ++t) {
        png::write_file(dir / "views" / (pad4(t) + ".png"), png::encode_rgb(ds.views[t].rgb));
        write_json(dir / "views" / (pad4(t) + ".pose.json"), pose_json(ds.views[t].camera));
        const fs::path mask_dir = dir / "masks" / pad4(t);
        fs::create_directories(mask_dir);
        for (const auto& m : ds.masks[t]) png::write_file(mask_dir / (pad4(m.local) + ".png"), png::encode_mask(m.bitmap));
    }

    Writer emb;
    Writer hist;
    bool all_hist = true;
    for (const auto& list : ds.masks) {
        for (const auto& m : list) {
            emb.put(static_cast<std::uint32_t>(m.view));
            emb.put(static_cast<std::uint32_t>(m.local));
            for (Eigen::Index k = 0; k < m.embedding.size(); ++k) emb.put(m.embedding(k));
            if (!m.histogram) {
                all_hist = false;
                continue;
            }
            hist.put(static_cast<std::uint32_t>(m.view));
            hist.put(static_cast<std::uint32_t>(m.local));
            for (int k = 0; k < ColorHistogram::kBins; ++k) hist.put(m.histogram->bins(k));
        }
    }
    png::write_file(dir / "embeddings.bin", emb.bytes());
    if (all_hist) png::write_file(dir / "histograms.bin", hist.bytes());

    if (ds.matches.total() > 0) {
        Writer w;
        for (const auto& [key, list] : ds.matches.pairs) {
            for (const auto& m : list) {
                w.put(static_cast<std::uint32_t>(key.first));
                w.put(static_cast<std::uint32_t>(key.second));
                w.put(m.a.x());
                w.put(m.a.y());
                w.put(m.b.x());
                w.put(m.b.y());
            }
        }
        png::write_file(dir / "matches.bin", w.bytes());
    }

    if (!ds.canonical.empty()) {
        Writer w;
        for (const auto& v : ds.canonical) {
            for (Eigen::Index k = 0; k < v.size(); ++k) w.put(v(k));
        }
        png::write_file(dir / "canonical.bin", w.bytes());
    }
}

GaussianCloud read_gaussians(const fs::path& path) {
    Reader r(png::read_file(path), path.filename().string());
    constexpr std::size_t record = 14 * sizeof(float);
    if (r.remaining() % record != 0) throw FormatError(path.string() + ": size is not a multiple of the record size");
    GaussianCloud cloud;
    cloud.resize(static_cast<Eigen::Index>(r.remaining() / record));
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) cloud.positions(i, k) = r.get<float>();
        for (int k = 0; k < 3; ++k) cloud.scales(i, k) = r.get<float>();
        for (int k = 0; k < 4; ++k) cloud.rotations(i, k) = r.get<float>();
        cloud.opacities(i) = r.get<float>();
        for (int k = 0; k < 3; ++k) cloud.features(i, k) = r.get<float>();
    }
    return cloud;
}

void write_gaussians(const fs::path& path, const GaussianCloud& cloud) {
    Writer w;
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) w.put(static_cast<float>(cloud.positions(i, k)));
        for (int k = 0; k < 3; ++k) w.put(static_cast<float>(cloud.scales(i, k)));
        for (int k = 0; k < 4; ++k) w.put(static_cast<float>(cloud.rotations(i, k)));
        w.put(static_cast<float>(cloud.opacities(i)));
        for (int k = 0; k < 3; ++k) w.put(static_cast<float>(cloud.features(i, k)));
    }
    png::write_file(path, w.bytes());
}

Eigen::VectorXf read_embedding(const fs::path& path) {
    Reader r(png::read_file(path), path.filename().string());
    if (r.remaining() == 0 || r.remaining() % sizeof(float) != 0) {
        throw FormatError(path.string() + ": expected a non-empty sequence of float32 values");
    }
    Eigen::VectorXf v(static_cast<Eigen::Index>(r.remaining() / sizeof(float)));
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = r.get<float>();
    return v;
}

void write_embedding(const fs::path& path, const Eigen::VectorXf& v) {
    Writer w;
    for (Eigen::Index k = 0; k < v.size(); ++k) w.put(v(k));
    png::write_file(path, w.bytes());
}

}  // namespace gridfield
