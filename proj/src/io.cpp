#include "noisemix/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "noisemix/errors.hpp"

namespace noisemix {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
    return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw io_error("write to '" + path.string() + "' failed");
}

void write_doubles(std::ostream& out, std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void read_doubles(std::istream& in, std::span<double> v, const std::filesystem::path& path) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(v.size_bytes()))
        throw io_error("'" + path.string() + "' is truncated");
}

std::string rect_fields(const CutRect& r) {
    return format_double(r.center_x) + '\t' + format_double(r.center_y) + '\t' + format_double(r.width) + '\t' +
           format_double(r.height) + '\t' + std::to_string(r.col_begin) + '\t' + std::to_string(r.col_end) + '\t' +
           std::to_string(r.row_begin) + '\t' + std::to_string(r.row_end);
}

}  // namespace

void write_samples(const std::filesystem::path& path, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("write_samples: no samples");
    const auto& first = samples.front();
    for (const auto& s : samples)
        if (!s.image.same_shape(first.image) || s.label.probs.size() != first.label.probs.size())
            throw std::invalid_argument("write_samples: samples differ in shape");
    auto out = open_out(path, true);
    out << kSampleMagic << ' ' << first.image.width << ' ' << first.image.height << ' '
        << first.label.num_classes() << ' ' << samples.size() << '\n';
    for (const auto& s : samples) {
        write_doubles(out, s.image.values);
        write_doubles(out, s.label.probs);
    }
    finish(out, path);
}

SampleFile read_samples(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    SampleFile f;
    long long count = -1;
    hs >> magic >> f.width >> f.height >> f.num_classes >> count;
    if (!hs || magic != kSampleMagic || f.width < 1 || f.height < 1 || f.num_classes < 1 || count < 0)
        throw io_error("'" + path.string() + "' is not a sample file");
    f.samples.reserve(static_cast<std::size_t>(count));
    for (long long n = 0; n < count; ++n) {
        Sample s{ImageGrid(f.width, f.height), SoftLabel{std::vector<double>(static_cast<std::size_t>(f.num_classes))}};
        read_doubles(in, s.image.values, path);
        read_doubles(in, s.label.probs, path);
        f.samples.push_back(std::move(s));
    }
    return f;
}

std::string provenance_header() {
    return "index\tmethod\tclass_a\tclass_b\talpha\tlambda_sampled\tlambda_real\trect_cx\trect_cy\trect_w\trect_h\t"
           "col_begin\tcol_end\trow_begin\trow_end\tseed\tsampler\tsteps\tguidance_scale";
}

std::string provenance_line(std::size_t index, const Provenance& p) {
    return std::to_string(index) + '\t' + p.method + '\t' + std::to_string(p.class_a) + '\t' +
           (p.class_b ? std::to_string(*p.class_b) : std::string("-")) + '\t' + format_double(p.alpha) + '\t' +
           format_double(p.lambda_sampled) + '\t' + format_double(p.lambda_real) + '\t' + rect_fields(p.rect) + '\t' +
           std::to_string(p.seed) + '\t' + std::string(to_string(p.sampler)) + '\t' + std::to_string(p.steps) + '\t' +
           format_double(p.guidance_scale);
}

void write_provenance(const std::filesystem::path& path, std::span<const GenRecord> records) {
    auto out = open_out(path, false);
    out << provenance_header() << '\n';
    for (std::size_t i = 0; i < records.size(); ++i) out << provenance_line(i, records[i].provenance) << '\n';
    finish(out, path);
}

Provenance parse_provenance_line(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 19) throw io_error("malformed provenance line");
    Provenance p;
    try {
        p.method = f[1];
        p.class_a = std::stoi(f[2]);
        if (f[3] != "-") p.class_b = std::stoi(f[3]);
        p.alpha = std::stod(f[4]);
        p.lambda_sampled = std::stod(f[5]);
        p.lambda_real = std::stod(f[6]);
        p.rect.center_x = std::stod(f[7]);
        p.rect.center_y = std::stod(f[8]);
        p.rect.width = std::stod(f[9]);
        p.rect.height = std::stod(f[10]);
        p.rect.col_begin = std::stoi(f[11]);
        p.rect.col_end = std::stoi(f[12]);
        p.rect.row_begin = std::stoi(f[13]);
        p.rect.row_end = std::stoi(f[14]);
        p.seed = std::stoull(f[15]);
        p.sampler = parse_sampler_kind(f[16]);
        p.steps = std::stoi(f[17]);
        p.guidance_scale = std::stod(f[18]);
    } catch (const std::logic_error&) {
        throw io_error("malformed provenance field");
    }
    return p;
}

std::vector<Provenance> read_provenance(const std::filesystem::path& path) {
    auto in = open_in(path, false);
    std::string line;
    if (!std::getline(in, line) || line != provenance_header())
        throw io_error("'" + path.string() + "' is not a provenance sidecar");
    std::vector<Provenance> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(parse_provenance_line(line));
        } catch (const io_error& e) {
            throw io_error("'" + path.string() + "': " + e.what());
        }
    }
    return out;
}

MontageLayout montage_layout(std::size_t records, int tile_width, int tile_height) {
    const int n = static_cast<int>(records);
    return {2 * tile_width + 1, n * tile_height + (n - 1)};
}

void export_grid(std::span<const GenRecord> records, const std::filesystem::path& path) {
    if (records.empty()) throw std::invalid_argument("export_grid: no records");
    const int W = records.front().image.width;
    const int H = records.front().image.height;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        if (r.image.width != W || r.image.height != H)
            throw std::invalid_argument("export_grid: records differ in shape");
        for (double v : r.image.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    const MontageLayout layout = montage_layout(records.size(), W, H);
    std::vector<unsigned char> px(static_cast<std::size_t>(layout.width) * layout.height, kSeparatorGray);

    for (std::size_t n = 0; n < records.size(); ++n) {
        const auto& r = records[n];
        const int y0 = static_cast<int>(n) * (H + 1);
        for (int y = 0; y < H; ++y) {
            unsigned char* row = px.data() + static_cast<std::size_t>(y0 + y) * layout.width;
            for (int x = 0; x < W; ++x) {
                const double g = std::round((r.image.at(x, y) - lo) * scale);
                row[x] = static_cast<unsigned char>(std::clamp(g, 0.0, 255.0));
                const bool keep = !r.mask || r.mask->mask[static_cast<std::size_t>(y) * W + x] != 0;
                row[W + 1 + x] = keep ? 255 : 0;
            }
        }
    }

    auto out = open_out(path, true);
    out << "P5\n";
    out << "# noisemix montage: " << records.size() << " rows, tile " << W << "x" << H
        << ", columns image|separator|mask\n";
    out << "# map: gray = round((value - lo) * " << format_double(scale) << "), lo=" << format_double(lo)
        << " hi=" << format_double(hi) << "\n";
    for (std::size_t n = 0; n < records.size(); ++n) out << "# " << provenance_line(n, records[n].provenance) << "\n";
    out << layout.width << ' ' << layout.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    finish(out, path);
}

PgmImage read_pgm(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    PgmImage img;
    std::string line;
    std::getline(in, line);
    if (line != "P5") throw io_error("'" + path.string() + "' is not a binary PGM");
    std::vector<long> header;
    while (header.size() < 3 && std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            img.comments.push_back(line.substr(std::min<std::size_t>(2, line.size())));
            continue;
        }
        std::istringstream ls(line);
        long v;
        while (ls >> v) header.push_back(v);
    }
    if (header.size() != 3) throw io_error("'" + path.string() + "': malformed PGM header");
    img.width = static_cast<int>(header[0]);
    img.height = static_cast<int>(header[1]);
    img.maxval = static_cast<int>(header[2]);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw io_error("'" + path.string() + "' is truncated");
    return img;
}

void write_model(const std::filesystem::path& path, const MlpClassifier& model, std::uint64_t seed) {
    auto out = open_out(path, true);
    out << kModelMagic << ' ' << model.input_size() << ' ' << model.hidden_size() << ' ' << model.num_classes()
        << ' ' << seed << '\n';
    write_doubles(out, model.params());
    finish(out, path);
}

MlpClassifier read_model(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int input = 0, hidden = 0, classes = 0;
    std::uint64_t seed = 0;
    hs >> magic >> input >> hidden >> classes >> seed;
    if (!hs || magic != kModelMagic) throw io_error("'" + path.string() + "' is not a model file");
    MlpClassifier m(input, hidden, classes);
    read_doubles(in, m.params(), path);
    return m;
}

void write_history(const std::filesystem::path& path, std::span<const EpochStats> history) {
    auto out = open_out(path, false);
    out << "epoch\ttrain_loss\tval_accuracy\n";
    for (const auto& e : history)
        out << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.val_accuracy) << '\n';
    finish(out, path);
}

void ensure_writable_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    const auto probe = dir / ".write_probe";
    {
        std::ofstream out(probe);
        if (!out) throw io_error("output directory '" + dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

}  // namespace noisemix
