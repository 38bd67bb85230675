// SPDX-License-Identifier: Apache-2.0
#include "symgrade/data.hpp"

#include "symgrade/errors.hpp"
#include "symgrade/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace symgrade {

namespace fs = std::filesystem;

Batch make_batch(std::span<const ImageSample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) return Batch{Tensor({0, 1, 0, 0}), {}, {}};
    const std::size_t h = samples[indices[0]].height, w = samples[indices[0]].width;
    std::vector<double> data;
    data.reserve(indices.size() * h * w);
    Batch batch;
    for (std::size_t idx : indices) {
        const ImageSample& s = samples[idx];
        if (s.height != h || s.width != w) {
            throw ShapeError("batch mixes image sizes " + std::to_string(h) + "x" + std::to_string(w) +
                             " and " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                             " (sample " + s.id + ")");
        }
        data.insert(data.end(), s.pixels.begin(), s.pixels.end());
        batch.labels.push_back(s.grade);
        batch.ids.push_back(s.id);
    }
    batch.images = Tensor({indices.size(), 1, h, w}, std::move(data));
    return batch;
}

Batch make_batch(std::span<const ImageSample> samples) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return make_batch(samples, idx);
}

Batch flip_horizontal(const Batch& batch) {
    Batch out = batch;
    const auto& shape = batch.images.shape();
    if (shape.size() != 4) throw ShapeError("flip_horizontal: expected [N x 1 x H x W]");
    const std::size_t rows = shape[0] * shape[1] * shape[2], w = shape[3];
    auto dst = out.images.data();
    for (std::size_t r = 0; r < rows; ++r) std::reverse(dst.begin() + r * w, dst.begin() + (r + 1) * w);
    return out;
}

ImageSample flip_horizontal(const ImageSample& sample) {
    ImageSample out = sample;
    for (std::size_t y = 0; y < out.height; ++y) {
        auto row = out.pixels.begin() + static_cast<std::ptrdiff_t>(y * out.width);
        std::reverse(row, row + static_cast<std::ptrdiff_t>(out.width));
    }
    return out;
}

// --- PGM ---

namespace {

std::size_t read_header_int(std::istream& in, const fs::path& path) {
    int c = in.get();
    while (in && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (in && c != '\n') c = in.get();
        }
        c = in.get();
    }
    if (!in || !std::isdigit(c)) throw FormatError(path.string() + ": malformed PGM header");
    std::size_t value = 0;
    while (in && std::isdigit(c)) {
        value = value * 10 + static_cast<std::size_t>(c - '0');
        if (value > (1u << 24)) throw FormatError(path.string() + ": PGM dimension too large");
        c = in.get();
    }
    if (!in || !std::isspace(c)) throw FormatError(path.string() + ": malformed PGM header");
    return value;
}

bool has_pgm_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm";
}

} // namespace

GrayImage read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError(path.string() + ": not a binary PGM (P5)");
    GrayImage img;
    img.width = read_header_int(in, path);
    img.height = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    if (img.width == 0 || img.height == 0) throw FormatError(path.string() + ": zero-size image");
    if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PGM (maxval 255) is supported");
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw FormatError(path.string() + ": truncated pixel data");
    }
    return img;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

GrayImage to_gray8(const ImageSample& sample) {
    GrayImage img{sample.width, sample.height, {}};
    img.pixels.reserve(sample.pixels.size());
    for (double v : sample.pixels) {
        img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    return img;
}

std::vector<ImageSample> load_image_folder(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a directory: " + root.string());
    std::vector<fs::path> grade_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() != 1 || name[0] < '0' || name[0] >= '0' + kNumGrades) {
            throw FormatError("unexpected directory '" + name + "' in " + root.string() +
                              " (grade folders must be named 0-" + std::to_string(kNumGrades - 1) + ")");
        }
        grade_dirs.push_back(entry.path());
    }
    std::sort(grade_dirs.begin(), grade_dirs.end());

    std::vector<ImageSample> samples;
    std::set<std::string> seen;
    for (const auto& dir : grade_dirs) {
        const GradeLabel grade(dir.filename().string()[0] - '0');
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            if (!has_pgm_extension(file)) throw FormatError("unsupported image file " + file.string());
            const GrayImage img = read_pgm(file);
            ImageSample s;
            s.id = file.stem().string();
            if (!seen.insert(s.id).second) throw FormatError("duplicate sample id " + s.id + " at " + file.string());
            s.height = img.height;
            s.width = img.width;
            s.grade = grade;
            s.pixels.reserve(img.pixels.size());
            for (auto v : img.pixels) s.pixels.push_back(static_cast<double>(v) / 255.0);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

ImageSample resize(const ImageSample& sample, std::size_t h, std::size_t w) {
    if (sample.height == 0 || sample.width == 0) throw ContractError("resize: zero-size source image " + sample.id);
    if (h == 0 || w == 0) throw ContractError("resize: target size must be positive");
    if (h == sample.height && w == sample.width) return sample;
    ImageSample out = sample;
    out.height = h;
    out.width = w;
    out.pixels.assign(h * w, 0.0);
    const auto coord = [](std::size_t i, std::size_t dst, std::size_t src) {
        if (dst == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
    };
    for (std::size_t y = 0; y < h; ++y) {
        const double sy = coord(y, h, sample.height);
        const auto y0 = static_cast<std::size_t>(std::floor(sy));
        const std::size_t y1 = std::min(y0 + 1, sample.height - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = coord(x, w, sample.width);
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const std::size_t x1 = std::min(x0 + 1, sample.width - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = sample.at(y0, x0) * (1.0 - fx) + sample.at(y0, x1) * fx;
            const double bottom = sample.at(y1, x0) * (1.0 - fx) + sample.at(y1, x1) * fx;
            out.pixels[y * w + x] = std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0);
        }
    }
    return out;
}

// --- splitting ---

void SplitSpec::validate() const {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0)) {
        throw ConfigError("split fractions must be positive");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
}

std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions) {
    std::vector<std::size_t> counts(fractions.size());
    std::vector<double> remainders(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = static_cast<double>(n) * fractions[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainders[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(fractions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % order.size()]];
    return counts;
}

Split stratified_split(const std::vector<ImageSample>& samples, const SplitSpec& spec) {
    spec.validate();
    const std::array<double, 3> fractions = {spec.train_frac, spec.val_frac, spec.test_frac};
    std::vector<std::vector<std::size_t>> groups(spec.stratified ? kNumGrades : 1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        groups[spec.stratified ? static_cast<std::size_t>(samples[i].grade.value()) : 0].push_back(i);
    }
    Split out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& idx = groups[g];
        if (idx.empty()) continue;
        Rng rng(derive_seed(spec.seed, SeedStream::split, g));
        rng.shuffle(idx);
        if (idx.size() < 3) {
            if (spec.stratified) out.undersized_grades.push_back(static_cast<int>(g));
            for (std::size_t i : idx) out.train.push_back(samples[i]);
            continue;
        }
        const auto counts = apportion(idx.size(), fractions);
        std::size_t pos = 0;
        for (std::size_t part = 0; part < 3; ++part) {
            auto& dst = part == 0 ? out.train : part == 1 ? out.val : out.test;
            for (std::size_t c = 0; c < counts[part]; ++c) dst.push_back(samples[idx[pos++]]);
        }
    }
    return out;
}

// --- normalization ---

NormStats compute_norm_stats(std::span<const ImageSample> train) {
    std::size_t count = 0;
    double total = 0.0;
    for (const auto& s : train) {
        for (double v : s.pixels) total += v;
        count += s.pixels.size();
    }
    if (count == 0) throw ContractError("compute_norm_stats: empty training set");
    const double mean = total / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& s : train)
        for (double v : s.pixels) sq += (v - mean) * (v - mean);
    const double stdev = std::sqrt(sq / static_cast<double>(count));
    return {mean, std::max(stdev, kMinStd)};
}

Batch normalize(const Batch& batch, const NormStats& stats) {
    Batch out = batch;
    for (double& v : out.images.data()) v = (v - stats.mean) / stats.std;
    return out;
}

ImageSample normalize(const ImageSample& sample, const NormStats& stats) {
    ImageSample out = sample;
    for (double& v : out.pixels) v = (v - stats.mean) / stats.std;
    return out;
}

// --- synthetic data ---

void SyntheticSpec::validate() const {
    if (n < static_cast<std::size_t>(kNumGrades)) throw ConfigError("synthetic n must be at least 5");
    if (height == 0 || width == 0 || width % 2 != 0) throw ConfigError("synthetic width must be positive and even");
    if (!(asymmetry >= 0.0 && asymmetry <= 1.0)) throw ConfigError("asymmetry must lie in [0,1]");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be a non-negative std");
}

BandRange band_width_range(int grade) {
    static constexpr std::array<BandRange, kNumGrades> kRanges = {{
        {0.40, 0.48}, {0.30, 0.36}, {0.20, 0.26}, {0.12, 0.16}, {0.04, 0.08}}};
    return kRanges[static_cast<std::size_t>(GradeLabel(grade).value())];
}

std::vector<ImageSample> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, SeedStream::synthetic));
    const std::size_t h = spec.height, w = spec.width, half = w / 2;
    const int digits = static_cast<int>(std::to_string(spec.n - 1).size());
    std::vector<ImageSample> out;
    out.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        ImageSample s;
        std::string num = std::to_string(i);
        s.id = "s" + std::string(static_cast<std::size_t>(std::max(0, digits - static_cast<int>(num.size()))), '0') + num;
        s.height = h;
        s.width = w;
        s.grade = GradeLabel(static_cast<int>(rng.below(kNumGrades)));
        const BandRange range = band_width_range(s.grade.value());
        const double band_half = 0.5 * rng.uniform(range.lo, range.hi) * static_cast<double>(w);

        // Distance from the vertical midline is computed in half-pixels so
        // mirrored columns see bit-identical inputs.
        std::vector<double> profile(half);
        for (std::size_t x = 0; x < half; ++x) {
            const double d = 0.5 * static_cast<double>(w - 1 - 2 * x);
            const double coverage = std::clamp(band_half - (d - 0.5), 0.0, 1.0);
            profile[x] = kBackgroundLevel - (kBackgroundLevel - kBandLevel) * coverage;
        }
        s.pixels.assign(h * w, 0.0);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < half; ++x) {
                s.pixels[y * w + x] = profile[x];
                s.pixels[y * w + (w - 1 - x)] = profile[x];
            }

        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < half; ++x) {
                const double e = spec.noise * rng.normal();
                s.pixels[y * w + x] += e;
                s.pixels[y * w + (w - 1 - x)] += e;
            }

        if (rng.uniform() < spec.asymmetry) {
            const bool left = rng.below(2) == 0;
            const double fw = static_cast<double>(w), fh = static_cast<double>(h);
            double cx = rng.uniform(0.08, 0.18) * fw;
            if (!left) cx = fw - cx;
            const double cy = rng.uniform(0.25, 0.75) * fh;
            const double sigma = 0.06 * fw;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx;
                    const double dy = static_cast<double>(y) + 0.5 - cy;
                    s.pixels[y * w + x] -= 0.45 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                }
        }
        for (double& v : s.pixels) v = std::clamp(v, 0.0, 1.0);
        out.push_back(std::move(s));
    }
    return out;
}

void write_image_folder(const std::vector<ImageSample>& samples, const fs::path& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    for (int g = 0; g < kNumGrades; ++g) {
        fs::create_directories(root / std::to_string(g), ec);
        if (ec) throw IoError("cannot create grade folder in " + root.string() + ": " + ec.message());
    }
    std::ofstream manifest(root / "manifest.csv", std::ios::binary);
    if (!manifest) throw IoError("cannot write " + (root / "manifest.csv").string());
    manifest << "id,grade,file\n";
    for (const auto& s : samples) {
        const fs::path rel = fs::path(std::to_string(s.grade.value())) / (s.id + ".pgm");
        write_pgm(to_gray8(s), root / rel);
        manifest << s.id << ',' << s.grade.value() << ',' << rel.generic_string() << '\n';
    }
    if (!manifest) throw IoError("write failed for manifest in " + root.string());
}

} // namespace symgrade
