#include "leaky/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "leaky/csv.hpp"
#include "leaky/png_io.hpp"
#include "leaky/rng.hpp"
#include "leaky/serialize.hpp"

namespace leaky::corpus {

namespace fs = std::filesystem;

int char_to_token(char ch) {
    if (ch >= 'a' && ch <= 'z') return ch - 'a';
    if (ch == ' ') return kSpaceToken;
    if (ch == '|') return kClauseToken;
    fail(ErrorKind::validation,
         std::string("caption character outside charset: '") + ch + "'");
}

char token_to_char(int token) {
    if (token >= 0 && token < 26) return static_cast<char>('a' + token);
    if (token == kSpaceToken) return ' ';
    if (token == kClauseToken) return '|';
    fail(ErrorKind::validation, "token id outside charset: " + fmt_int(token));
}

std::vector<int> tokenize(const std::string& caption) {
    std::vector<int> out;
    out.reserve(caption.size());
    for (char ch : caption) out.push_back(char_to_token(ch));
    return out;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) out += token_to_char(t);
    return out;
}

// ---------------------------------------------------------------------------
// Template
// ---------------------------------------------------------------------------

CaptionTemplate CaptionTemplate::standard() {
    CaptionTemplate t;
    t.slots = {
        {"color", {"red", "blue", "green", "yellow", "purple", "orange"}},
        {"shape", {"circle", "square", "triangle", "cross"}},
        {"size", {"small", "medium", "large"}},
        {"position", {"center", "north", "south", "east", "west"}},
        {"background", {"slate", "ivory", "charcoal", "teal", "moss"}},
        {"texture", {"plain", "striped", "dotted"}},
        {"border", {"rimmed", "bare"}},
        {"tilt", {"upright", "tilted"}},
    };
    return t;
}

void CaptionTemplate::validate() const {
    require(!slots.empty(), ErrorKind::config, "caption template has no slots");
    std::set<std::string> seen_names;
    for (const auto& slot : slots) {
        require(!slot.name.empty(), ErrorKind::config, "caption template: empty slot name");
        require(!slot.values.empty(), ErrorKind::config,
                "caption template: slot '" + slot.name + "' has no values");
        require(seen_names.insert(slot.name).second, ErrorKind::config,
                "caption template: duplicate slot '" + slot.name + "'");
        std::set<std::string> seen_values;
        for (const auto& v : slot.values) {
            require(!v.empty(), ErrorKind::config,
                    "caption template: empty value in slot '" + slot.name + "'");
            require(seen_values.insert(v).second, ErrorKind::config,
                    "caption template: duplicate value '" + v + "'");
            for (char ch : slot.name + v)
                (void)char_to_token(ch);  // values must stay inside the charset
        }
    }
}

long long CaptionTemplate::combo_count() const {
    long long n = 1;
    for (const auto& slot : slots) {
        n *= static_cast<long long>(slot.values.size());
        require(n > 0 && n < (1ll << 62), ErrorKind::config, "combo space overflow");
    }
    return n;
}

std::vector<int> CaptionTemplate::decode_combo(long long index) const {
    std::vector<int> values(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const long long base = static_cast<long long>(slots[i].values.size());
        values[i] = static_cast<int>(index % base);
        index /= base;
    }
    return values;
}

long long CaptionTemplate::encode_combo(const std::vector<int>& values) const {
    require(values.size() == slots.size(), ErrorKind::validation,
            "combo arity mismatch");
    long long index = 0;
    for (std::size_t i = slots.size(); i-- > 0;) {
        const long long base = static_cast<long long>(slots[i].values.size());
        require(values[i] >= 0 && values[i] < base, ErrorKind::validation,
                "combo value out of range");
        index = index * base + values[i];
    }
    return index;
}

std::string CaptionTemplate::render(const std::vector<int>& values,
                                    int active_slots) const {
    require(values.size() == slots.size(), ErrorKind::validation,
            "render: value arity mismatch");
    std::size_t n = slots.size();
    if (active_slots > 0 && static_cast<std::size_t>(active_slots) < n)
        n = static_cast<std::size_t>(active_slots);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += " | ";
        out += slots[i].name + " " + slots[i].values[values[i]];
    }
    return out;
}

std::vector<int> CaptionTemplate::parse(const std::string& caption) const {
    std::vector<int> values(slots.size(), -1);
    std::istringstream ss(caption);
    std::string clause;
    while (std::getline(ss, clause, '|')) {
        std::istringstream cs(clause);
        std::string name, value;
        cs >> name >> value;
        require(!name.empty() && !value.empty(), ErrorKind::validation,
                "caption clause not of the form 'name value': " + clause);
        bool found = false;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i].name != name) continue;
            auto it = std::find(slots[i].values.begin(), slots[i].values.end(), value);
            require(it != slots[i].values.end(), ErrorKind::validation,
                    "unknown value '" + value + "' for slot '" + name + "'");
            values[i] = static_cast<int>(it - slots[i].values.begin());
            found = true;
            break;
        }
        require(found, ErrorKind::validation, "unknown slot '" + name + "'");
    }
    return values;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

struct Rgb {
    double r, g, b;
};

const std::map<std::string, Rgb>& palette() {
    static const std::map<std::string, Rgb> p = {
        {"red", {0.85, 0.12, 0.10}},      {"blue", {0.15, 0.25, 0.85}},
        {"green", {0.10, 0.65, 0.20}},    {"yellow", {0.92, 0.85, 0.12}},
        {"purple", {0.55, 0.15, 0.75}},   {"orange", {0.95, 0.55, 0.10}},
        {"slate", {0.35, 0.40, 0.45}},    {"ivory", {0.93, 0.91, 0.85}},
        {"charcoal", {0.16, 0.16, 0.18}}, {"teal", {0.10, 0.45, 0.50}},
        {"moss", {0.35, 0.45, 0.25}},
    };
    return p;
}

struct RenderSpec {
    Rgb fg, bg;
    int shape = 0;     // circle, square, triangle, cross
    double radius = 0; // in normalized units
    double cx = 0.5, cy = 0.5;
    int texture = 0;   // plain, striped, dotted
    bool border = false;
    double angle = 0;  // tilt rotation
};

int slot_index(const CaptionTemplate& tmpl, const std::string& name) {
    for (std::size_t i = 0; i < tmpl.slots.size(); ++i)
        if (tmpl.slots[i].name == name) return static_cast<int>(i);
    return -1;
}

RenderSpec build_render_spec(const CaptionTemplate& tmpl,
                             const std::vector<int>& values) {
    RenderSpec spec;
    auto value_of = [&](const std::string& name, const std::string& fallback) {
        const int i = slot_index(tmpl, name);
        if (i < 0) return fallback;
        return tmpl.slots[i].values[values[i]];
    };
    const std::string color = value_of("color", "red");
    const std::string background = value_of("background", "slate");
    spec.fg = palette().count(color) ? palette().at(color) : Rgb{0.8, 0.2, 0.2};
    spec.bg = palette().count(background) ? palette().at(background) : Rgb{0.4, 0.4, 0.4};

    const std::string shape = value_of("shape", "circle");
    spec.shape = shape == "square" ? 1 : shape == "triangle" ? 2 : shape == "cross" ? 3 : 0;

    const std::string size = value_of("size", "medium");
    spec.radius = size == "small" ? 0.14 : size == "large" ? 0.27 : 0.20;

    const std::string pos = value_of("position", "center");
    spec.cx = pos == "east" ? 0.72 : pos == "west" ? 0.28 : 0.5;
    spec.cy = pos == "north" ? 0.28 : pos == "south" ? 0.72 : 0.5;

    const std::string texture = value_of("texture", "plain");
    spec.texture = texture == "striped" ? 1 : texture == "dotted" ? 2 : 0;

    spec.border = value_of("border", "bare") == "rimmed";
    spec.angle = value_of("tilt", "upright") == "tilted" ? 0.7853981633974483 : 0.0;
    return spec;
}

bool inside_shape(const RenderSpec& s, double dx, double dy, double scale) {
    const double r = s.radius * scale;
    switch (s.shape) {
        case 1:  // square
            return std::max(std::abs(dx), std::abs(dy)) <= r * 0.88;
        case 2: {  // triangle: apex up, inradius-based half-plane test
            const double rr = r * 1.12;
            if (dy > rr * 0.5) return false;
            // sides of an equilateral triangle with centroid at origin
            const double k = 1.7320508075688772;  // sqrt(3)
            return (k * dx - dy <= rr) && (-k * dx - dy <= rr);
        }
        case 3:  // cross
            return (std::abs(dx) <= 0.36 * r && std::abs(dy) <= r) ||
                   (std::abs(dy) <= 0.36 * r && std::abs(dx) <= r);
        default:  // circle
            return dx * dx + dy * dy <= r * r;
    }
}

Rgb shade_at(const RenderSpec& s, double u, double v) {
    // Rotate into the shape frame.
    const double ca = std::cos(s.angle), sa = std::sin(s.angle);
    const double ox = u - s.cx, oy = v - s.cy;
    const double dx = ca * ox + sa * oy;
    const double dy = -sa * ox + ca * oy;

    if (!inside_shape(s, dx, dy, 1.0)) return s.bg;
    if (s.border && !inside_shape(s, dx, dy, 0.80)) {
        const double lum = 0.299 * s.fg.r + 0.587 * s.fg.g + 0.114 * s.fg.b;
        return lum > 0.5 ? Rgb{0.06, 0.06, 0.06} : Rgb{0.94, 0.94, 0.94};
    }
    Rgb c = s.fg;
    if (s.texture == 1) {  // stripes across the rotated x axis
        if (std::sin(dx / (0.06 * std::max(s.radius, 1e-6)) ) > 0.0) {
            c.r *= 0.55; c.g *= 0.55; c.b *= 0.55;
        }
    } else if (s.texture == 2) {  // dot lattice
        const double cell = 0.55 * s.radius;
        const double px = dx / cell - std::floor(dx / cell) - 0.5;
        const double py = dy / cell - std::floor(dy / cell) - 0.5;
        if (px * px + py * py < 0.30 * 0.30) {
            c.r = 0.25 * c.r + 0.75 * s.bg.r;
            c.g = 0.25 * c.g + 0.75 * s.bg.g;
            c.b = 0.25 * c.b + 0.75 * s.bg.b;
        }
    }
    return c;
}

}  // namespace

Image render_image(const CaptionTemplate& tmpl, const std::vector<int>& values,
                   int height, int width) {
    const RenderSpec spec = build_render_spec(tmpl, values);
    Image img(height, width, 3);
    // 2x2 supersampling smooths shape boundaries.
    const double offsets[2] = {0.25, 0.75};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double r = 0, g = 0, b = 0;
            for (double oy : offsets)
                for (double ox : offsets) {
                    const Rgb c = shade_at(spec, (x + ox) / width, (y + oy) / height);
                    r += c.r; g += c.g; b += c.b;
                }
            img.at(0, y, x) = r / 4.0;
            img.at(1, y, x) = g / 4.0;
            img.at(2, y, x) = b / 4.0;
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

std::vector<long long> shuffled_combos(const CaptionTemplate& tmpl,
                                       std::uint64_t seed, long long needed) {
    const long long total = tmpl.combo_count();
    // Shuffle the full combo index space when it is small enough, otherwise
    // draw by rejection. Either way the order is a pure function of seed.
    Rng rng(derive_seed(seed, "corpus.combos"));
    std::vector<long long> order;
    if (total <= 2'000'000) {
        order.resize(static_cast<std::size_t>(total));
        for (long long i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
        rng.shuffle(order);
    } else {
        std::set<long long> seen;
        while (static_cast<long long>(order.size()) < std::min(needed, total)) {
            const long long idx = static_cast<long long>(rng.uniform_index(
                static_cast<std::uint64_t>(total)));
            if (seen.insert(idx).second) order.push_back(idx);
        }
    }
    return order;
}

PairRecord make_record(const CaptionTemplate& tmpl, const GenOptions& opts,
                       std::uint64_t seed, long long combo, long long ordinal) {
    PairRecord rec;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "%s%06lld", opts.id_prefix.c_str(), ordinal);
    rec.id = idbuf;
    rec.slot_values = tmpl.decode_combo(combo);
    int active = opts.caption_slots;
    if (active < 0) {
        // per-record caption detail, uniform over 1..slot_count
        Rng slot_rng(derive_seed(seed, "corpus.slots", static_cast<std::uint64_t>(ordinal)));
        active = 1 + static_cast<int>(slot_rng.uniform_index(tmpl.slots.size()));
    }
    rec.caption = tmpl.render(rec.slot_values, active);
    rec.caption_tokens = tokenize(rec.caption);
    rec.image = render_image(tmpl, rec.slot_values, opts.height, opts.width);
    if (opts.noise_sigma > 0) {
        Rng noise(derive_seed(seed, "corpus.noise", static_cast<std::uint64_t>(ordinal)));
        for (double& v : rec.image.data) v += opts.noise_sigma * noise.normal();
    }
    quantize8(rec.image);
    rec.split = opts.split;
    rec.member = opts.member;
    return rec;
}

}  // namespace

Manifest generate_synthetic(int n, const CaptionTemplate& tmpl, std::uint64_t seed,
                            const GenOptions& opts) {
    require(n >= 1, ErrorKind::config, "generate_synthetic: n must be >= 1");
    tmpl.validate();
    int slot_count_with_two = 0;
    for (const auto& slot : tmpl.slots)
        if (slot.values.size() >= 2) ++slot_count_with_two;
    require(slot_count_with_two >= 2, ErrorKind::config,
            "generate_synthetic: template needs >= 2 slots with >= 2 values");

    const long long total = tmpl.combo_count();
    const auto order = shuffled_combos(tmpl, seed, opts.combo_offset + n);
    Manifest m;
    m.caption_template = tmpl;
    m.records.reserve(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        const long long pick = (opts.combo_offset + i) % total;
        const long long combo = order[static_cast<std::size_t>(pick % static_cast<long long>(order.size()))];
        m.records.push_back(make_record(tmpl, opts, seed, combo, opts.combo_offset + i));
    }
    m.validate();
    return m;
}

Manifest generate_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
    const CaptionTemplate tmpl = CaptionTemplate::standard();
    const long long needed = cfg.train_size + cfg.test_size + cfg.aux_size +
                             cfg.nonmember_size;
    require(needed <= tmpl.combo_count(), ErrorKind::config,
            "corpus larger than the distinct combo space");
    const auto order = shuffled_combos(tmpl, seed, needed);

    Manifest m;
    m.caption_template = tmpl;
    m.records.reserve(static_cast<std::size_t>(needed));
    long long ordinal = 0;
    auto emit = [&](int count, const std::string& split, bool member,
                    const std::string& prefix) {
        GenOptions opts;
        opts.height = cfg.height;
        opts.width = cfg.width;
        opts.noise_sigma = cfg.noise_sigma;
        opts.caption_slots = cfg.caption_slots;
        opts.split = split;
        opts.member = member;
        opts.id_prefix = prefix;
        for (int i = 0; i < count; ++i, ++ordinal)
            m.records.push_back(make_record(tmpl, opts, seed,
                                            order[static_cast<std::size_t>(ordinal)],
                                            ordinal));
    };
    emit(cfg.train_size, "train", true, "tr");
    emit(cfg.test_size, "test", true, "te");
    emit(cfg.aux_size, "aux", false, "ax");
    emit(cfg.nonmember_size, "nonmember", false, "nm");
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::vector<std::size_t> Manifest::split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

const PairRecord& Manifest::by_id(const std::string& id) const {
    for (const auto& rec : records)
        if (rec.id == id) return rec;
    fail(ErrorKind::validation, "manifest: unknown id " + id);
}

void Manifest::validate() const {
    std::set<std::string> ids;
    for (const auto& rec : records) {
        require(ids.insert(rec.id).second, ErrorKind::validation,
                "manifest: duplicate id \"" + rec.id + "\"");
        require(in_unit_range(rec.image), ErrorKind::validation,
                "manifest: pixels outside [0,1] in " + rec.id);
        if (rec.split == "nonmember")
            require(!rec.member, ErrorKind::validation,
                    "manifest: nonmember split with member flag in " + rec.id);
        if (rec.split == "train" || rec.split == "test")
            require(rec.member, ErrorKind::validation,
                    "manifest: member split without member flag in " + rec.id);
    }
}

void save_manifest(const Manifest& manifest, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    std::ostringstream lines;
    for (const auto& rec : manifest.records) {
        const std::string rel = "images/" + rec.id + ".png";
        write_png((fs::path(dir) / rel).string(), rec.image);
        std::string slots;
        for (std::size_t i = 0; i < rec.slot_values.size(); ++i) {
            if (i) slots += ",";
            slots += manifest.caption_template.slots[i].name + ":" +
                     manifest.caption_template.slots[i].values[rec.slot_values[i]];
        }
        lines << "id=" << rec.id << "\timage=" << rel << "\tcaption=" << rec.caption
              << "\tslots=" << slots << "\tsplit=" << rec.split
              << "\tmember=" << (rec.member ? 1 : 0) << "\n";
    }
    write_file((fs::path(dir) / "manifest.tsv").string(), lines.str());
}

Manifest load_manifest(const std::string& path, bool permissive) {
    const fs::path manifest_path(path);
    const fs::path dir = manifest_path.parent_path();
    const std::string text = read_file(path);

    Manifest m;
    m.caption_template = CaptionTemplate::standard();

    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::map<std::string, std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, '\t')) {
            const std::size_t eq = field.find('=');
            require(eq != std::string::npos, ErrorKind::ingest,
                    "manifest line " + fmt_int(lineno) + ": field without '='");
            const std::string name = field.substr(0, eq);
            static const std::set<std::string> known = {"id", "image", "caption",
                                                        "slots", "split", "member"};
            if (!known.count(name)) {
                require(permissive, ErrorKind::validation,
                        "manifest line " + fmt_int(lineno) + ": unknown field '" +
                            name + "'");
                continue;
            }
            fields[name] = field.substr(eq + 1);
        }
        for (const char* req : {"id", "image", "caption", "split", "member"})
            require(fields.count(req) > 0, ErrorKind::ingest,
                    "manifest line " + fmt_int(lineno) + ": missing field '" +
                        std::string(req) + "'");

        PairRecord rec;
        rec.id = fields["id"];
        rec.caption = fields["caption"];
        rec.caption_tokens = tokenize(rec.caption);
        rec.split = fields["split"];
        rec.member = fields["member"] == "1";
        const fs::path img_path = dir / fields["image"];
        if (!fs::exists(img_path))
            fail(ErrorKind::ingest,
                 "manifest: missing image file for id \"" + rec.id + "\": " +
                     img_path.string());
        rec.image = read_png(img_path.string());
        const auto parsed = m.caption_template.parse(rec.caption);
        rec.slot_values.assign(parsed.begin(), parsed.end());
        for (auto& v : rec.slot_values)
            if (v < 0) v = 0;  // unrendered trailing slots default to value 0
        m.records.push_back(std::move(rec));
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Caption perturbation
// ---------------------------------------------------------------------------

PerturbResult perturb_caption(const std::vector<int>& tokens, PerturbKind kind,
                              std::uint64_t seed) {
    require(!tokens.empty(), ErrorKind::validation, "perturb_caption: empty caption");
    Rng rng(derive_seed(seed, "perturb"));
    PerturbResult out;
    out.tokens = tokens;

    if (kind == PerturbKind::minor_typo) {
        std::vector<std::size_t> letter_positions;
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] < 26) letter_positions.push_back(i);
        require(!letter_positions.empty(), ErrorKind::validation,
                "perturb_caption: no letters to edit");
        const std::size_t pos =
            letter_positions[rng.uniform_index(letter_positions.size())];
        int repl = static_cast<int>(rng.uniform_index(25));
        if (repl >= tokens[pos]) ++repl;  // skip the original letter
        out.tokens[pos] = repl;
        return out;
    }

    // clause_reorder: swap two '|'-delimited segments, rejoined canonically
    // with " | ". For renderer-produced captions the length is unchanged.
    std::vector<std::vector<int>> clauses;
    std::vector<int> current;
    for (std::size_t i = 0; i <= tokens.size(); ++i) {
        if (i == tokens.size() || tokens[i] == kClauseToken) {
            while (!current.empty() && current.front() == kSpaceToken)
                current.erase(current.begin());
            while (!current.empty() && current.back() == kSpaceToken)
                current.pop_back();
            clauses.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(tokens[i]);
        }
    }
    if (clauses.size() < 2) {
        out.noop = true;
        return out;
    }
    const std::size_t a = rng.uniform_index(clauses.size());
    std::size_t b = rng.uniform_index(clauses.size() - 1);
    if (b >= a) ++b;
    std::swap(clauses[a], clauses[b]);

    std::vector<int> rebuilt;
    rebuilt.reserve(tokens.size());
    for (std::size_t k = 0; k < clauses.size(); ++k) {
        if (k) {
            rebuilt.push_back(kSpaceToken);
            rebuilt.push_back(kClauseToken);
            rebuilt.push_back(kSpaceToken);
        }
        rebuilt.insert(rebuilt.end(), clauses[k].begin(), clauses[k].end());
    }
    out.tokens = std::move(rebuilt);
    return out;
}

}  // namespace leaky::corpus
