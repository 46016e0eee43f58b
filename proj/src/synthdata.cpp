#include "gcm/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gcm/graph.hpp"
#include "gcm/heads.hpp"
#include "gcm/rng.hpp"
#include "gcm/textio.hpp"

namespace gcm {

namespace {

constexpr uint64_t kVideoTag = 0x564944ULL;   // interval placement stream
constexpr uint64_t kFeatureTag = 0xFEA7ULL;   // feature noise stream

std::string video_name(const std::string& split, int index) {
    std::string num = format_int(index);
    while (num.size() < 4) num.insert(num.begin(), '0');
    return split.substr(0, 2) + num;
}

} // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.classes < 2) throw ConfigError("synth: classes must be >= 2");
    if (cfg.feature_dim < 4 || cfg.feature_dim < cfg.classes + 1) {
        throw ConfigError("synth: feature_dim must be >= max(4, classes + 1)");
    }
    if (cfg.noise < 0.0) throw ConfigError("synth: noise must be >= 0");
    if (cfg.videos < 1) throw ConfigError("synth: need at least one video");
    if (cfg.proposals_per_video < 1) throw ConfigError("synth: need at least one proposal per video");
    if (cfg.duration_min <= 0.0 || cfg.duration_max < cfg.duration_min) {
        throw ConfigError("synth: bad duration range");
    }
    if (cfg.instance_len_min <= 0.0 || cfg.instance_len_max < cfg.instance_len_min) {
        throw ConfigError("synth: bad instance length range");
    }
    if (cfg.instance_len_max > cfg.duration_min) {
        throw ConfigError("synth: instances longer than the shortest video are infeasible");
    }
    if (cfg.jitter < 0.0 || cfg.jitter > 0.45) {
        throw ConfigError("synth: jitter must lie in [0, 0.45]");
    }
    if (cfg.background_fraction < 0.0 || cfg.background_fraction > 1.0) {
        throw ConfigError("synth: background_fraction must lie in [0, 1]");
    }
    if (cfg.stream != 0 && cfg.stream != 1) {
        throw ConfigError("synth: stream must be 0 (rgb) or 1 (flow)");
    }
}

std::vector<std::vector<double>> class_prototypes(const SynthConfig& cfg) {
    int d = cfg.feature_dim;
    // the flow stream permutes the coordinate axes so both streams share
    // geometry but not features
    std::vector<int> axes(static_cast<size_t>(d));
    std::iota(axes.begin(), axes.end(), 0);
    if (cfg.stream == 1) {
        Rng rng(seed_mix({cfg.seed, fnv1a("stream-basis")}));
        for (int i = d - 1; i > 0; --i) {
            int j = rng.uniform_int(i + 1);
            std::swap(axes[static_cast<size_t>(i)], axes[static_cast<size_t>(j)]);
        }
    }
    double angle = cfg.prototype_angle_deg * 3.14159265358979323846 / 180.0;
    std::vector<std::vector<double>> protos(static_cast<size_t>(cfg.classes) + 1,
                                            std::vector<double>(static_cast<size_t>(d), 0.0));
    protos[0][static_cast<size_t>(axes[0])] = 1.0; // background
    for (int c = 1; c <= cfg.classes; ++c) {
        protos[static_cast<size_t>(c)][static_cast<size_t>(axes[0])] = std::cos(angle);
        protos[static_cast<size_t>(c)][static_cast<size_t>(axes[static_cast<size_t>(c)])] =
            std::sin(angle);
    }
    return protos;
}

namespace {

std::vector<double> blended_feature(const std::vector<std::vector<double>>& protos,
                                    int label, double overlap, double noise, Rng& rng) {
    int d = static_cast<int>(protos[0].size());
    std::vector<double> x(static_cast<size_t>(d));
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const std::vector<double>& cls = protos[static_cast<size_t>(label)];
    const std::vector<double>& bg = protos[0];
    for (int k = 0; k < d; ++k) {
        double base = label >= 1 ? overlap * cls[static_cast<size_t>(k)] +
                                       (1.0 - overlap) * bg[static_cast<size_t>(k)]
                                 : bg[static_cast<size_t>(k)];
        x[static_cast<size_t>(k)] = base + noise * inv_sqrt_d * rng.normal();
    }
    return x;
}

} // namespace

Dataset generate(const SynthConfig& cfg) {
    validate(cfg);
    auto protos = class_prototypes(cfg);

    Dataset ds;
    ds.split = cfg.split;
    ds.feature_dim = cfg.feature_dim;
    ds.classes = cfg.classes;
    ds.videos.resize(static_cast<size_t>(cfg.videos));

    for (int v = 0; v < cfg.videos; ++v) {
        VideoRecord& rec = ds.videos[static_cast<size_t>(v)];
        rec.id = video_name(cfg.split, v);
        Rng rng(seed_mix({cfg.seed, kVideoTag, fnv1a(cfg.split), static_cast<uint64_t>(v)}));
        Rng frng(seed_mix({cfg.seed, kFeatureTag, fnv1a(cfg.split), static_cast<uint64_t>(v),
                           static_cast<uint64_t>(cfg.stream)}));

        double duration = rng.uniform(cfg.duration_min, cfg.duration_max);
        int want = std::min(rng.poisson(cfg.instances_mean), cfg.proposals_per_video);

        // non-overlapping ground-truth instances
        for (int k = 0; k < want; ++k) {
            double len = rng.uniform(cfg.instance_len_min, cfg.instance_len_max);
            bool placed = false;
            for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
                double start = rng.uniform(0.0, duration - len);
                Interval cand{start, start + len};
                bool clear = true;
                for (const auto& gt : rec.gts) {
                    if (!intervals_disjoint(cand, gt.interval)) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    rec.gts.push_back({rec.id, cand, 1 + rng.uniform_int(cfg.classes)});
                    placed = true;
                }
            }
        }
        std::sort(rec.gts.begin(), rec.gts.end(),
                  [](const GroundTruthInstance& a, const GroundTruthInstance& b) {
                      return a.interval.start < b.interval.start;
                  });

        int n_gt = static_cast<int>(rec.gts.size());
        int proposals = std::max(cfg.proposals_per_video, n_gt);
        for (int k = 0; k < proposals; ++k) {
            int src = -1; // -1 = background proposal
            if (k < n_gt) {
                src = k; // every instance gets at least one proposal
            } else if (n_gt > 0 && rng.uniform() >= cfg.background_fraction) {
                src = rng.uniform_int(n_gt);
            }

            ActionUnit u;
            u.id = k;
            u.video_id = rec.id;
            int label = 0;
            double overlap = 0.0;
            double overlap_ext = 0.0;
            if (src >= 0) {
                const Interval& gi = rec.gts[static_cast<size_t>(src)].interval;
                double len = gi.end - gi.start;
                Interval jit{0.0, 0.0};
                for (int attempt = 0; attempt < 10; ++attempt) {
                    double a = rng.uniform(-cfg.jitter, cfg.jitter);
                    double b = rng.uniform(-cfg.jitter, cfg.jitter);
                    jit.start = std::max(0.0, gi.start + a * len);
                    jit.end = std::min(duration, gi.end + b * len);
                    if (jit.end > jit.start) break;
                    jit = gi;
                }
                if (jit.end <= jit.start) jit = gi;
                u.interval = jit;
                label = rec.gts[static_cast<size_t>(src)].label;
                overlap = tiou(u.interval, gi);
                overlap_ext = tiou(extend_interval(u.interval), gi);
            } else {
                bool placed = false;
                Interval cand{0.0, 1.0};
                for (int attempt = 0; attempt < 10; ++attempt) {
                    double len = rng.uniform(cfg.instance_len_min, cfg.instance_len_max);
                    len = std::min(len, duration);
                    double start = rng.uniform(0.0, duration - len);
                    cand = {start, start + len};
                    bool clear = true;
                    for (const auto& gt : rec.gts) {
                        if (!intervals_disjoint(cand, gt.interval)) {
                            clear = false;
                            break;
                        }
                    }
                    if (clear) {
                        placed = true;
                        break;
                    }
                }
                (void)placed; // last candidate is acceptable even if overlapping
                u.interval = cand;
            }
            u.score = overlap;
            u.feature = blended_feature(protos, label, overlap, cfg.noise, frng);
            u.extended_feature = blended_feature(protos, label, overlap_ext, cfg.noise, frng);
            rec.units.push_back(std::move(u));
            rec.unit_labels.push_back(label);
        }
    }
    return ds;
}

std::vector<GroundTruthInstance> Dataset::all_gts() const {
    std::vector<GroundTruthInstance> out;
    for (const auto& v : videos) {
        out.insert(out.end(), v.gts.begin(), v.gts.end());
    }
    return out;
}

int Dataset::unit_count() const {
    int n = 0;
    for (const auto& v : videos) n += static_cast<int>(v.units.size());
    return n;
}

namespace {

void write_features(std::string& line, const std::vector<double>& f) {
    if (f.empty()) {
        line += '-';
        return;
    }
    for (size_t i = 0; i < f.size(); ++i) {
        if (i > 0) line += ',';
        line += format_double(f[i]);
    }
}

std::vector<double> parse_features(std::string_view field, int expected_dim,
                                   const std::string& where) {
    if (field == "-") return {};
    auto parts = split_view(field, ',');
    if (static_cast<int>(parts.size()) != expected_dim) {
        throw DataError(where + ": feature has " + format_int(static_cast<int64_t>(parts.size())) +
                        " entries, header says dim=" + format_int(expected_dim));
    }
    std::vector<double> out;
    out.reserve(parts.size());
    for (auto p : parts) out.push_back(parse_double(p, where));
    return out;
}

} // namespace

void save(const Dataset& ds, const std::string& prefix) {
    {
        std::ofstream os(prefix + ".units", std::ios::binary);
        if (!os) throw DataError("cannot open '" + prefix + ".units' for writing");
        os << "# gcm-units v1 split=" << ds.split << " dim=" << ds.feature_dim << "\n";
        for (const auto& v : ds.videos) {
            for (size_t i = 0; i < v.units.size(); ++i) {
                const ActionUnit& u = v.units[i];
                std::string line = "u ";
                line += v.id;
                line += ' ';
                line += format_double(u.interval.start);
                line += ' ';
                line += format_double(u.interval.end);
                line += ' ';
                line += format_double(u.score);
                line += ' ';
                line += format_int(i < v.unit_labels.size() ? v.unit_labels[i] : -1);
                line += ' ';
                write_features(line, u.feature);
                line += ' ';
                write_features(line, u.extended_feature);
                os << line << '\n';
            }
        }
    }
    {
        std::ofstream os(prefix + ".gts", std::ios::binary);
        if (!os) throw DataError("cannot open '" + prefix + ".gts' for writing");
        os << "# gcm-gts v1 split=" << ds.split << " classes=" << ds.classes << "\n";
        for (const auto& v : ds.videos) {
            for (const auto& g : v.gts) {
                os << "g " << v.id << ' ' << format_double(g.interval.start) << ' '
                   << format_double(g.interval.end) << ' ' << g.label << '\n';
            }
        }
    }
}

namespace {

struct Header {
    std::string split;
    int dim = 0;
    int classes = 0;
};

Header parse_header(const std::string& line, const std::string& kind, const std::string& path) {
    auto fields = split_view(line, ' ');
    if (fields.size() < 2 || fields[0] != "#" || fields[1] != kind) {
        throw DataError(path + ":1: expected '# " + kind + " ...' header");
    }
    Header h;
    bool versioned = false;
    for (size_t i = 2; i < fields.size(); ++i) {
        std::string_view f = fields[i];
        if (f == "v1") {
            versioned = true;
        } else if (f.substr(0, 6) == "split=") {
            h.split = std::string(f.substr(6));
        } else if (f.substr(0, 4) == "dim=") {
            h.dim = static_cast<int>(parse_int(f.substr(4), path + " header"));
        } else if (f.substr(0, 8) == "classes=") {
            h.classes = static_cast<int>(parse_int(f.substr(8), path + " header"));
        } else if (!f.empty() && f[0] == 'v') {
            throw DataError(path + ":1: unsupported format version '" + std::string(f) + "'");
        }
    }
    if (!versioned) throw DataError(path + ":1: missing format version");
    return h;
}

} // namespace

Dataset load(const std::string& prefix) {
    Dataset ds;
    auto video_of = [&ds](const std::string& id) -> VideoRecord& {
        for (auto& v : ds.videos) {
            if (v.id == id) return v;
        }
        ds.videos.push_back({});
        ds.videos.back().id = id;
        return ds.videos.back();
    };

    std::string upath = prefix + ".units";
    {
        std::ifstream is(upath, std::ios::binary);
        if (!is) throw DataError("cannot open '" + upath + "'");
        std::string line;
        if (!std::getline(is, line)) throw DataError(upath + ":1: empty file");
        Header h = parse_header(line, "gcm-units", upath);
        if (h.dim <= 0) throw DataError(upath + ":1: header missing dim");
        ds.split = h.split;
        ds.feature_dim = h.dim;
        int lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            std::string_view sv = trim_view(line);
            if (sv.empty() || sv[0] == '#') continue;
            std::string where = upath + ":" + format_int(lineno);
            auto f = split_view(sv, ' ');
            if (f.size() != 8 || f[0] != "u") {
                throw DataError(where + ": expected 8 fields 'u video start end score label feat extfeat'");
            }
            VideoRecord& rec = video_of(std::string(f[1]));
            ActionUnit u;
            u.id = static_cast<int>(rec.units.size());
            u.video_id = rec.id;
            u.interval.start = parse_double(f[2], where);
            u.interval.end = parse_double(f[3], where);
            u.score = parse_double(f[4], where);
            int label = static_cast<int>(parse_int(f[5], where));
            u.feature = parse_features(f[6], h.dim, where);
            u.extended_feature = parse_features(f[7], h.dim, where);
            if (u.feature.empty()) throw DataError(where + ": unit has no feature");
            UnitError ue = validate_unit(u, h.dim);
            if (ue != UnitError::ok) {
                throw DataError(where + ": " + unit_error_message(ue));
            }
            rec.units.push_back(std::move(u));
            rec.unit_labels.push_back(label);
        }
    }

    std::string gpath = prefix + ".gts";
    {
        std::ifstream is(gpath, std::ios::binary);
        if (!is) throw DataError("cannot open '" + gpath + "'");
        std::string line;
        if (!std::getline(is, line)) throw DataError(gpath + ":1: empty file");
        Header h = parse_header(line, "gcm-gts", gpath);
        if (h.split != ds.split) {
            throw DataError(gpath + ":1: split tag does not match the units file");
        }
        ds.classes = h.classes;
        int lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            std::string_view sv = trim_view(line);
            if (sv.empty() || sv[0] == '#') continue;
            std::string where = gpath + ":" + format_int(lineno);
            auto f = split_view(sv, ' ');
            if (f.size() != 5 || f[0] != "g") {
                throw DataError(where + ": expected 5 fields 'g video start end label'");
            }
            GroundTruthInstance g;
            g.video_id = std::string(f[1]);
            g.interval.start = parse_double(f[2], where);
            g.interval.end = parse_double(f[3], where);
            g.label = static_cast<int>(parse_int(f[4], where));
            if (!interval_valid(g.interval)) {
                throw DataError(where + ": malformed ground-truth interval");
            }
            if (g.label < 1 || (ds.classes > 0 && g.label > ds.classes)) {
                throw DataError(where + ": ground-truth label out of range");
            }
            video_of(g.video_id).gts.push_back(std::move(g));
        }
    }
    return ds;
}

} // namespace gcm
