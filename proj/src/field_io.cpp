#include "gridfield/field_io.hpp"

#include <fstream>

#include <json.hpp>

#include "gridfield/dataset_io.hpp"

namespace gridfield {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path sidecar_path(const fs::path& field_path) { return fs::path(field_path.string() + ".json"); }

void write_field(const fs::path& field_path, const GaussianCloud& cloud, const FieldSidecar& sidecar) {
    write_gaussians(field_path, cloud);
    const json j = {
        {"dataset", sidecar.dataset_dir.empty() ? std::string() : fs::absolute(sidecar.dataset_dir).lexically_normal().string()},
        {"train", {{"lambda", sidecar.train.lambda}, {"iterations", sidecar.train.iterations},
                   {"step_size", sidecar.train.step_size}, {"seed", sidecar.train.seed}}},
        {"render", {{"tile", sidecar.render.tile}, {"alpha_cutoff", sidecar.render.alpha_cutoff},
                    {"dilation", sidecar.render.dilation}, {"transmittance_floor", sidecar.render.transmittance_floor},
                    {"max_alpha", sidecar.render.max_alpha}}},
        {"loss_history", sidecar.loss_history},
    };
    std::ofstream out(sidecar_path(field_path));
    if (!out) throw FormatError("cannot write " + sidecar_path(field_path).string());
    out << j.dump(2) << '\n';
}

FieldSidecar read_sidecar(const fs::path& field_path) {
    FieldSidecar s;
    const fs::path path = sidecar_path(field_path);
    if (!fs::exists(path)) return s;
    std::ifstream in(path);
    try {
        const json j = json::parse(in);
        s.dataset_dir = j.value("dataset", std::string());
        if (j.contains("train")) {
            const auto& t = j.at("train");
            s.train.lambda = t.at("lambda").get<double>();
            s.train.iterations = t.at("iterations").get<int>();
            s.train.step_size = t.at("step_size").get<double>();
            s.train.seed = t.at("seed").get<std::uint64_t>();
        }
        if (j.contains("render")) {
            const auto& r = j.at("render");
            s.render.tile = r.at("tile").get<int>();
            s.render.alpha_cutoff = r.at("alpha_cutoff").get<double>();
            s.render.dilation = r.at("dilation").get<double>();
            s.render.transmittance_floor = r.at("transmittance_floor").get<double>();
            s.render.max_alpha = r.value("max_alpha", s.render.max_alpha);
        }
        s.loss_history = j.value("loss_history", std::vector<double>{});
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return s;
}

std::shared_ptr<FeatureField> make_field(const GaussianCloud& cloud, const MappingResult& mapping, const Dataset& ds,
                                         const RenderConfig& render) {
    auto field = std::make_shared<FeatureField>();
    field->cloud = cloud;
    field->lattice = mapping.lattice;
    bool has_entries = false;
    for (const auto& c : field->lattice.cells) has_entries = has_entries || !c.entries.empty();
    if (!has_entries) {
        MappingResult copy = mapping;
        attach_embeddings(copy, ds);
        field->lattice = std::move(copy.lattice);
    }
    for (const auto& v : ds.views) field->cameras.push_back(v.camera);
    field->width = ds.meta.width;
    field->height = ds.meta.height;
    field->render = render;
    for (const auto& c : ds.canonical) {
        const float n = c.norm();
        if (n > 0.0f) field->canonical.push_back(c / n);
    }
    return field;
}

std::shared_ptr<FeatureField> load_field(const fs::path& field_path, const fs::path& mapping_path,
                                         const std::optional<fs::path>& dataset_override, Dataset* dataset_out) {
    const GaussianCloud cloud = read_gaussians(field_path);
    const FieldSidecar sidecar = read_sidecar(field_path);
    LoadedMapping loaded = read_mapping(mapping_path);
    const fs::path dataset_dir = dataset_override ? *dataset_override : loaded.dataset_dir;
    Dataset ds = read_dataset(dataset_dir);
    attach_embeddings(loaded.mapping, ds);
    auto field = make_field(cloud, loaded.mapping, ds, sidecar.render);
    if (dataset_out) *dataset_out = std::move(ds);
    return field;
}

}  // namespace gridfield
