#include "mixsup/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "mixsup/error.hpp"
#include "mixsup/image_io.hpp"
#include "mixsup/kernels.hpp"
#include "mixsup/model.hpp"
#include "mixsup/parallel.hpp"
#include "mixsup/rng.hpp"

namespace mixsup {

namespace fs = std::filesystem;

namespace {

std::string shape_str(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

bool points_in_bounds(const PointLabel& pts, int h, int w) {
    for (const auto* list : {&pts.fg_points, &pts.bg_points}) {
        for (const auto& p : *list) {
            if (p.row < 0 || p.row >= h || p.col < 0 || p.col >= w) return false;
        }
    }
    return true;
}

}  // namespace

void LabeledSample::validate() const {
    const int h = image.height();
    const int w = image.width();
    const std::string who = name.empty() ? std::string("sample") : "'" + name + "'";
    switch (kind) {
        case SupervisionKind::Pixel:
        case SupervisionKind::Polygon: {
            const auto* m = std::get_if<DenseMask>(&payload);
            if (!m) throw Error(Errc::InvalidConfig, who + ": dense kind without a mask payload");
            if (m->height() != h || m->width() != w) {
                throw Error(Errc::SizeMismatch, who + ": mask " + shape_str(m->height(), m->width()) +
                                                    " vs image " + shape_str(h, w));
            }
            break;
        }
        case SupervisionKind::Box: {
            const auto* b = std::get_if<BoxLabel>(&payload);
            if (!b) throw Error(Errc::InvalidConfig, who + ": box kind without a box payload");
            if (!b->fits(h, w)) throw Error(Errc::OutOfBounds, who + ": box exceeds image " + shape_str(h, w));
            break;
        }
        case SupervisionKind::Scribble: {
            const auto* s = std::get_if<ScribbleLabel>(&payload);
            if (!s) throw Error(Errc::InvalidConfig, who + ": scribble kind without a scribble payload");
            if (s->height() != h || s->width() != w) {
                throw Error(Errc::SizeMismatch, who + ": scribble " + shape_str(s->height(), s->width()) +
                                                    " vs image " + shape_str(h, w));
            }
            break;
        }
        case SupervisionKind::Point: {
            const auto* p = std::get_if<PointLabel>(&payload);
            if (!p) throw Error(Errc::InvalidConfig, who + ": point kind without a point payload");
            if (!points_in_bounds(*p, h, w)) throw Error(Errc::OutOfBounds, who + ": point outside image");
            break;
        }
    }
}

std::string_view annotation_dir(SupervisionKind kind) {
    switch (kind) {
        case SupervisionKind::Pixel:
        case SupervisionKind::Polygon: return "masks";
        case SupervisionKind::Box: return "boxes";
        case SupervisionKind::Scribble: return "scribbles";
        case SupervisionKind::Point: return "points";
    }
    return "masks";
}

Dataset load_folder_dataset(const fs::path& root, SupervisionKind kind) {
    const fs::path image_dir = root / "images";
    if (!fs::is_directory(image_dir)) {
        throw Error(Errc::IoError, "'" + image_dir.string() + "' is not a directory");
    }
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end());
    if (images.empty()) throw Error(Errc::EmptyDataset, "no images under '" + image_dir.string() + "'");

    const fs::path ann_dir = root / annotation_dir(kind);
    const bool json_payload = kind == SupervisionKind::Box || kind == SupervisionKind::Point;
    std::vector<fs::path> annotations;
    for (const auto& img : images) {
        const fs::path ann = ann_dir / (img.stem().string() + (json_payload ? ".json" : ".png"));
        if (!fs::exists(ann)) {
            throw Error(Errc::MissingAnnotation, "no annotation '" + ann.string() + "' for image '" + img.string() + "'");
        }
        annotations.push_back(ann);
    }

    Dataset ds{root.filename().string(), kind, std::vector<LabeledSample>(images.size())};
    if (ds.name.empty()) ds.name = root.parent_path().filename().string();
    parallel_for_index(images.size(), [&](std::size_t i) {
        LabeledSample s;
        s.image = io::read_image(images[i]);
        s.kind = kind;
        s.source_dataset = ds.name;
        s.name = images[i].stem().string();
        switch (kind) {
            case SupervisionKind::Pixel:
            case SupervisionKind::Polygon: s.payload = io::read_mask(annotations[i]); break;
            case SupervisionKind::Box: s.payload = io::read_box(annotations[i]); break;
            case SupervisionKind::Scribble: s.payload = io::read_scribble(annotations[i]); break;
            case SupervisionKind::Point: s.payload = io::read_points(annotations[i]); break;
        }
        s.validate();
        ds.samples[i] = std::move(s);
    });
    return ds;
}

namespace {

struct Harmonic {
    int order;
    double amplitude;
    double phase;
};

struct Wave {
    double fy, fx, phase, amplitude;
};

DenseMask draw_blob(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double short_side = std::min(h, w);
    const double ra = (0.08 + 0.32 * u(rng)) * short_side;
    const double rb = (0.08 + 0.32 * u(rng)) * short_side;
    const double angle = u(rng) * std::numbers::pi;
    const double cy = (0.3 + 0.4 * u(rng)) * h;
    const double cx = (0.3 + 0.4 * u(rng)) * w;
    std::vector<Harmonic> harmonics;
    for (int k = 2; k <= 4; ++k) harmonics.push_back({k, 0.05 * u(rng), 2.0 * std::numbers::pi * u(rng)});

    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    DenseMask mask(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double dy = r + 0.5 - cy;
            const double dx = c + 0.5 - cx;
            const double pu = (dx * ca + dy * sa) / ra;
            const double pv = (-dx * sa + dy * ca) / rb;
            const double rho = std::hypot(pu, pv);
            const double phi = std::atan2(pv, pu);
            double limit = 1.0;
            for (const auto& hm : harmonics) limit += hm.amplitude * std::cos(hm.order * phi + hm.phase);
            mask(r, c) = rho < limit ? 1 : 0;
        }
    }
    return mask;
}

ImageTensor paint_image(const DenseMask& mask, std::mt19937_64& rng) {
    const int h = mask.height();
    const int w = mask.width();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double base[3] = {0.35 + 0.2 * u(rng), 0.22 + 0.15 * u(rng), 0.18 + 0.12 * u(rng)};
    const double gain = 0.8 + 0.4 * u(rng);
    const double offset[3] = {0.24 * gain, 0.12 * gain, 0.08 * gain};

    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k) {
        const double freq = 1.0 + 3.0 * u(rng);
        const double dir = 2.0 * std::numbers::pi * u(rng);
        waves.push_back({freq * std::sin(dir) / h, freq * std::cos(dir) / w, 2.0 * std::numbers::pi * u(rng),
                         0.03 + 0.04 * u(rng)});
    }
    ImageTensor img(h, w, 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double texture = 0.0;
            for (const auto& wv : waves) {
                texture += wv.amplitude * std::sin(2.0 * std::numbers::pi * (wv.fy * r + wv.fx * c) + wv.phase);
            }
            const double noise = 0.04 * (u(rng) - 0.5);
            for (int ch = 0; ch < 3; ++ch) {
                double v = base[ch] + texture + noise + (mask(r, c) ? offset[ch] : 0.0);
                img(r, c, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return img;
}

}  // namespace

Dataset synth_blob_dataset(int n, int height, int width, std::uint64_t seed, std::string name) {
    constexpr int kDiv = ModelConfig::kInputSizeDivisor;
    if (height <= 0 || width <= 0 || height % kDiv != 0 || width % kDiv != 0) {
        throw Error(Errc::BadSize, "synthetic size " + shape_str(height, width) + " is not divisible by 16");
    }
    if (n <= 0) throw Error(Errc::EmptyDataset, "synthetic dataset needs n > 0");
    Dataset ds{name, SupervisionKind::Pixel, std::vector<LabeledSample>(static_cast<std::size_t>(n))};
    const double area = static_cast<double>(height) * width;
    parallel_for_index(ds.samples.size(), [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, {i}));
        DenseMask mask;
        for (;;) {
            mask = largest_component8(draw_blob(height, width, rng));
            // 8-connected with a diagonal-only bridge would fail 4-connectivity.
            if (count_components4(mask) != 1) continue;
            const double frac = static_cast<double>(count_foreground(mask)) / area;
            if (frac >= 0.005 && frac <= 0.6) break;
        }
        LabeledSample s;
        s.image = paint_image(mask, rng);
        s.kind = SupervisionKind::Pixel;
        s.payload = std::move(mask);
        s.source_dataset = name;
        s.name = name + "_" + std::to_string(i);
        ds.samples[i] = std::move(s);
    });
    return ds;
}

Dataset derive_weak_dataset(const Dataset& dense, SupervisionKind kind, std::uint64_t seed) {
    Dataset out{dense.name, kind, dense.samples};
    parallel_for_index(out.samples.size(), [&](std::size_t i) {
        auto& s = out.samples[i];
        if (s.kind != SupervisionKind::Pixel) {
            throw Error(Errc::InvalidConfig, "derive_weak_dataset: sample '" + s.name + "' is not pixel-kind");
        }
        const DenseMask mask = std::get<DenseMask>(s.payload);
        const auto sample_seed = derive_seed(seed, {i, static_cast<std::uint64_t>(kind)});
        switch (kind) {
            case SupervisionKind::Pixel: break;
            case SupervisionKind::Polygon: s.payload = mask_to_polygon(mask, kDefaultPolygonVertices); break;
            case SupervisionKind::Box: s.payload = mask_to_box(mask); break;
            case SupervisionKind::Scribble: s.payload = mask_to_scribble(mask, sample_seed); break;
            case SupervisionKind::Point:
                s.payload = mask_to_points(mask, kDefaultPointCount, kDefaultPointCount, sample_seed);
                break;
        }
        s.kind = kind;
    });
    return out;
}

Dataset slice(const Dataset& source, std::size_t first, std::size_t count, std::string name) {
    if (first + count > source.samples.size()) {
        throw Error(Errc::OutOfBounds, "slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                                           ") exceeds dataset of " + std::to_string(source.samples.size()));
    }
    Dataset out{std::move(name), source.kind, {}};
    out.samples.assign(source.samples.begin() + static_cast<std::ptrdiff_t>(first),
                       source.samples.begin() + static_cast<std::ptrdiff_t>(first + count));
    for (auto& s : out.samples) s.source_dataset = out.name;
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
    if (image.height() == height && image.width() == width) return image;
    ImageTensor out(height, width, image.channels());
    kernels::parallel::bilinear_resize(image.channels(), image.height(), image.width(), image.values(), height,
                                       width, out.values());
    return out;
}

namespace {

int nearest_source(int dst, int from, int to) {
    return std::min(from - 1, static_cast<int>(std::floor((dst + 0.5) * from / static_cast<double>(to))));
}

template <class T>
Grid<T> resize_nearest_grid(const Grid<T>& in, int height, int width) {
    if (in.height() == height && in.width() == width) return in;
    Grid<T> out(height, width, in.channels());
    for (int ch = 0; ch < in.channels(); ++ch) {
        for (int r = 0; r < height; ++r) {
            const int sr = nearest_source(r, in.height(), height);
            for (int c = 0; c < width; ++c) out(r, c, ch) = in(sr, nearest_source(c, in.width(), width), ch);
        }
    }
    return out;
}

// Destination index range [lo, hi] whose nearest source is `src`; hi < lo
// when the source line is skipped on downscale.
std::pair<int, int> footprint(int src, int from, int to) {
    const double s = static_cast<double>(to) / from;
    const int lo = static_cast<int>(std::ceil(src * s - 0.5));
    const int hi = static_cast<int>(std::ceil((src + 1) * s - 0.5)) - 1;
    return {std::clamp(lo, 0, to - 1), std::clamp(hi, -1, to - 1)};
}

}  // namespace

DenseMask resize_nearest(const DenseMask& mask, int height, int width) {
    return resize_nearest_grid(mask, height, width);
}

ScribbleLabel resize_nearest(const ScribbleLabel& scribble, int height, int width) {
    return {resize_nearest_grid(scribble.grid, height, width)};
}

BoxLabel resize_box(const BoxLabel& box, int from_h, int from_w, int to_h, int to_w) {
    const int r0 = footprint(box.row_min, from_h, to_h).first;
    const int c0 = footprint(box.col_min, from_w, to_w).first;
    const int r1 = footprint(box.row_max, from_h, to_h).second;
    const int c1 = footprint(box.col_max, from_w, to_w).second;
    return {r0, c0, std::max(r0, r1), std::max(c0, c1)};
}

PointLabel resize_points(const PointLabel& points, int from_h, int from_w, int to_h, int to_w) {
    auto map_one = [&](const PixelCoord& p) {
        auto centre = [](std::pair<int, int> range) {
            return range.second < range.first ? range.first : (range.first + range.second) / 2;
        };
        return PixelCoord{centre(footprint(p.row, from_h, to_h)), centre(footprint(p.col, from_w, to_w))};
    };
    auto map_all = [&](const std::vector<PixelCoord>& in) {
        std::vector<PixelCoord> out;
        for (const auto& p : in) {
            const auto q = map_one(p);
            if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
        }
        return out;
    };
    auto fg = map_all(points.fg_points);
    auto bg = map_all(points.bg_points);
    std::vector<PixelCoord> clash;
    for (const auto& p : fg) {
        if (std::find(bg.begin(), bg.end(), p) != bg.end()) clash.push_back(p);
    }
    auto drop = [&clash](std::vector<PixelCoord>& v) {
        std::erase_if(v, [&](const PixelCoord& p) { return std::find(clash.begin(), clash.end(), p) != clash.end(); });
    };
    drop(fg);
    drop(bg);
    return {std::move(fg), std::move(bg)};
}

LabeledSample resize_sample(const LabeledSample& sample, int height, int width) {
    LabeledSample out;
    out.kind = sample.kind;
    out.source_dataset = sample.source_dataset;
    out.name = sample.name;
    const int h = sample.image.height();
    const int w = sample.image.width();
    out.image = resize_bilinear(sample.image, height, width);
    std::visit(
        [&](const auto& payload) {
            using T = std::decay_t<decltype(payload)>;
            if constexpr (std::is_same_v<T, DenseMask>) out.payload = resize_nearest(payload, height, width);
            else if constexpr (std::is_same_v<T, ScribbleLabel>) out.payload = resize_nearest(payload, height, width);
            else if constexpr (std::is_same_v<T, BoxLabel>) out.payload = resize_box(payload, h, w, height, width);
            else out.payload = resize_points(payload, h, w, height, width);
        },
        sample.payload);
    return out;
}

LabeledSample random_resize(const LabeledSample& sample, std::span<const int> size_set, std::mt19937_64& rng) {
    if (size_set.empty()) throw Error(Errc::InvalidConfig, "size set is empty");
    for (int s : size_set) {
        if (s <= 0 || s % ModelConfig::kInputSizeDivisor != 0) {
            throw Error(Errc::BadSize, "resize target " + std::to_string(s) + " is not divisible by 16");
        }
    }
    const auto pick = static_cast<std::size_t>(rng() % size_set.size());
    const int size = size_set[pick];
    return resize_sample(sample, size, size);
}

MixedSampler::MixedSampler(std::span<const Dataset> datasets, int batch_size, std::uint64_t seed, SamplingMode mode)
    : batch_size_(batch_size), mode_(mode), kind_rng_(derive_seed(seed, {0x6b696e64ULL})) {
    if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
    for (auto kind : kAllKinds) {
        Pool pool{kind, {}, {}, 0, std::mt19937_64(derive_seed(seed, {static_cast<std::uint64_t>(kind)}))};
        for (const auto& ds : datasets) {
            if (ds.kind != kind) continue;
            for (const auto& s : ds.samples) pool.samples.push_back(&s);
        }
        if (pool.samples.empty()) continue;
        pool.order.resize(pool.samples.size());
        pool.cursor = pool.samples.size();  // forces a shuffle on first draw
        kinds_.push_back(kind);
        pools_.push_back(std::move(pool));
    }
    if (pools_.empty()) throw Error(Errc::EmptyDataset, "mixed sampler needs at least one nonempty dataset");
}

const LabeledSample* MixedSampler::draw(Pool& pool) {
    if (pool.cursor == pool.order.size()) {
        for (std::size_t i = 0; i < pool.order.size(); ++i) pool.order[i] = i;
        std::shuffle(pool.order.begin(), pool.order.end(), pool.rng);
        pool.cursor = 0;
    }
    return pool.samples[pool.order[pool.cursor++]];
}

Batch MixedSampler::next() {
    std::size_t which = 0;
    if (mode_ == SamplingMode::RoundRobin) {
        which = step_ % pools_.size();
    } else {
        std::size_t total = 0;
        for (const auto& p : pools_) total += p.samples.size();
        auto ticket = static_cast<std::size_t>(kind_rng_() % total);
        while (ticket >= pools_[which].samples.size()) ticket -= pools_[which++].samples.size();
    }
    ++step_;
    Batch batch{pools_[which].kind, {}};
    batch.samples.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) batch.samples.push_back(draw(pools_[which]));
    return batch;
}

void MixedSampler::skip(std::size_t batches) {
    for (std::size_t i = 0; i < batches; ++i) (void)next();
}

}  // namespace mixsup
