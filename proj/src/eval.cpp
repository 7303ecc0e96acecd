#include "gridfield/eval.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "gridfield/dataset_io.hpp"
#include "gridfield/field_io.hpp"
#include "gridfield/mapping.hpp"
#include "gridfield/train.hpp"

namespace gridfield {

namespace fs = std::filesystem;
using nlohmann::json;

MaskMetrics mask_metrics(const Bitmap& pred, const Bitmap& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw DomainError("mask_metrics: dimension mismatch");
    }
    const auto p = pred != 0;
    const auto t = truth != 0;
    const double inter = static_cast<double>((p && t).count());
    const double uni = static_cast<double>((p || t).count());
    const double agree = static_cast<double>((p == t).count());
    MaskMetrics m;
    m.iou = uni == 0.0 ? 1.0 : inter / uni;
    m.accuracy = pred.size() == 0 ? 1.0 : agree / static_cast<double>(pred.size());
    return m;
}

PixelBox bounding_box(const Bitmap& mask) {
    PixelBox box{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 0, 0};
    for (int y = 0; y < mask.rows(); ++y) {
        for (int x = 0; x < mask.cols(); ++x) {
            if (!mask(y, x)) continue;
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x + 1);
            box.y1 = std::max(box.y1, y + 1);
        }
    }
    if (box.empty()) box = {};
    return box;
}

bool localization_hit(const QueryResult& result, const PixelBox& truth_box) {
    if (result.distances.empty() || result.distances.front().size() == 0) return false;
    // First minimum in row-major order (Eigen's minCoeff scans column-major).
    const DistanceMap& d = result.distances.front();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < d.size(); ++i) {
        if (d.data()[i] < d.data()[best]) best = i;
    }
    return truth_box.contains(static_cast<int>(best % d.cols()), static_cast<int>(best / d.cols()));
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DomainError("adjusted_rand_index: labelings differ in length");
    const double n = static_cast<double>(a.size());
    if (a.size() < 2) return 1.0;
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra;
    std::map<int, double> rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    auto c2 = [](double k) { return k * (k - 1.0) / 2.0; };
    double index = 0.0;
    for (const auto& [k, v] : joint) index += c2(v);
    double sa = 0.0;
    double sb = 0.0;
    for (const auto& [k, v] : ra) sa += c2(v);
    for (const auto& [k, v] : rb) sb += c2(v);
    const double expected = sa * sb / c2(n);
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;  // both labelings trivial and identical in structure
    return (index - expected) / (max_index - expected);
}

std::optional<Bitmap> GroundTruth::object_mask(int view, int object) const {
    if (view < 0 || view >= static_cast<int>(labels.size())) return std::nullopt;
    const auto& l = labels[view];
    if (l.size() == 0) return std::nullopt;
    Bitmap m = (l == static_cast<std::uint8_t>(object + 1)).cast<std::uint8_t>();
    if (count_area(m) == 0) return std::nullopt;
    return m;
}

EvalReport evaluate_queries(QueryEngine& engine, const std::vector<EvalQuery>& queries, const GroundTruth& truth,
                            const QueryConfig& config) {
    EvalReport report;
    for (const auto& q : queries) {
        const auto truth_mask = truth.object_mask(q.view, q.object);
        if (!truth_mask) {
            report.skipped.push_back(q.name);
            continue;
        }
        QueryInput input;
        const float n = q.embedding.norm();
        input.embedding = q.embedding / n;
        input.view = q.view;
        input.config = config;
        const auto start = std::chrono::steady_clock::now();
        const QueryResult result = engine.query(input);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const MaskMetrics m = mask_metrics(result.mask, *truth_mask);
        report.queries.push_back({q.name, q.view, m.iou, m.accuracy, localization_hit(result, bounding_box(*truth_mask)),
                                  seconds});
    }
    if (!report.queries.empty()) {
        const double n = static_cast<double>(report.queries.size());
        for (const auto& q : report.queries) {
            report.miou += q.iou / n;
            report.macc += q.accuracy / n;
            report.mtime += q.seconds / n;
            report.localization += (q.hit ? 1.0 : 0.0) / n;
        }
    }
    return report;
}

EvalReport run_suite(const Dataset& raw, const GaussianCloud& initial, const std::vector<EvalQuery>& queries,
                     const GroundTruth& truth, const Ablation& ablation, const SuiteConfig& config) {
    Dataset ds = raw;
    denoise_dataset(ds, config.denoise);
    ensure_histograms(ds, config.train.threads);

    MatchParams match = config.match;
    match.use_keypoints = ablation.keypoints;
    if (!ablation.color) match.alpha = 0.0;
    const MappingResult mapping = cross_view_grid_mapping(ds, match);
    const auto baked = bake_feature_maps(ds, mapping);

    std::vector<TrainView> views;
    for (int t = 0; t < ds.view_count(); ++t) {
        if (count_area(baked[t].coverage) == 0) continue;
        views.push_back({ds.views[t].camera, baked[t].target, baked[t].coverage});
    }
    const TrainResult trained = train_features(initial, views, config.train, config.render);

    QueryEngine engine(make_field(trained.cloud, mapping, ds, config.render));
    QueryConfig qc = config.query;
    if (qc.canonical.empty()) qc.canonical = engine.field().canonical;
    EvalReport report = evaluate_queries(engine, queries, truth, qc);
    report.ablation = ablation;
    return report;
}

json report_to_json(const EvalReport& report) {
    json queries = json::array();
    for (const auto& q : report.queries) {
        queries.push_back({{"name", q.name}, {"view", q.view}, {"iou", q.iou}, {"accuracy", q.accuracy},
                           {"hit", q.hit}, {"seconds", q.seconds}});
    }
    return {{"queries", queries},
            {"skipped", report.skipped},
            {"mIoU", report.miou},
            {"mAcc", report.macc},
            {"mTime", report.mtime},
            {"localization", report.localization},
            {"ablation", {{"keypoints", report.ablation.keypoints}, {"color", report.ablation.color}}}};
}

std::vector<EvalQuery> read_queries(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<EvalQuery> out;
    try {
        const json j = json::parse(in);
        for (const auto& q : j) {
            EvalQuery e;
            e.name = q.at("name").get<std::string>();
            e.view = q.at("view").get<int>();
            e.object = q.at("object").get<int>();
            e.embedding = read_embedding(path.parent_path() / q.at("embedding").get<std::string>());
            out.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return out;
}

void write_queries(const fs::path& path, const std::vector<EvalQuery>& queries) {
    const fs::path dir = path.parent_path();
    fs::create_directories(dir / "queries");
    json j = json::array();
    for (const auto& q : queries) {
        const std::string rel = "queries/" + q.name + ".bin";
        write_embedding(dir / rel, q.embedding);
        j.push_back({{"name", q.name}, {"embedding", rel}, {"view", q.view}, {"object", q.object}});
    }
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

namespace {

std::string label_name(int t) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << t << ".png";
    return os.str();
}

}  // namespace

GroundTruth read_truth(const fs::path& dir, int views) {
    GroundTruth truth;
    truth.labels.resize(static_cast<std::size_t>(views));
    for (int t = 0; t < views; ++t) {
        const fs::path p = dir / "labels" / label_name(t);
        if (fs::exists(p)) truth.labels[t] = png::decode_gray(png::read_file(p));
    }
    return truth;
}

void write_truth(const fs::path& dir, const GroundTruth& truth) {
    fs::create_directories(dir / "labels");
    for (std::size_t t = 0; t < truth.labels.size(); ++t) {
        png::write_file(dir / "labels" / label_name(static_cast<int>(t)), png::encode_gray(truth.labels[t]));
    }
}

}  // namespace gridfield
