#include "bckl/io.hpp"

#include "bckl/distributions.hpp"
#include "bckl/error.hpp"
#include "bckl/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace bckl {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- binary helpers

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_uint(std::istream& is, int bytes, const std::string& path) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), bytes);
    if (!is) throw DataError(path + ": truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_header(std::ostream& os, const char* magic, std::uint32_t version, const Dims& d) {
    os.write(magic, 4);
    put_u32(os, version);
    put_u64(os, static_cast<std::uint64_t>(d.m));
    put_u64(os, static_cast<std::uint64_t>(d.t));
    put_u64(os, static_cast<std::uint64_t>(d.p));
}

Dims read_header(std::istream& is, const char* magic, std::uint32_t version, const std::string& path) {
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0) {
        throw DataError(path + ": bad magic, expected '" + std::string(magic, 4) + "'");
    }
    const auto v = static_cast<std::uint32_t>(get_uint(is, 4, path));
    if (v != version) throw DataError(path + ": unsupported format version " + std::to_string(v));
    Dims d;
    d.m = static_cast<Index>(get_uint(is, 8, path));
    d.t = static_cast<Index>(get_uint(is, 8, path));
    d.p = static_cast<Index>(get_uint(is, 8, path));
    if (d.m <= 0 || d.t <= 0 || d.p <= 0) throw DataError(path + ": dimensions must be positive");
    return d;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    return is;
}

void expect_eof(std::istream& is, const std::string& path) {
    if (is.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after payload");
}

}  // namespace

void write_tensor(const std::string& path, const Dims& dims, const Eigen::VectorXd& values) {
    if (values.size() != dims.size()) throw DimensionError("payload length must equal M*T*P");
    std::ofstream os = open_out(path);
    write_header(os, "BCKL", kTensorFileVersion, dims);
    const double qnan = std::numeric_limits<double>::quiet_NaN();
    for (Index i = 0; i < values.size(); ++i) {
        const double v = std::isnan(values[i]) ? qnan : values[i];
        put_u64(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw DataError("failed writing " + path);
}

void write_tensor(const std::string& path, const SpatioTensor& t) { write_tensor(path, t.dims(), t.values()); }

Eigen::VectorXd read_tensor_values(const std::string& path, Dims* dims_out) {
    std::ifstream is = open_in(path);
    const Dims d = read_header(is, "BCKL", kTensorFileVersion, path);
    Eigen::VectorXd v(d.size());
    for (Index i = 0; i < d.size(); ++i) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) throw DataError(path + ": payload shorter than M*T*P values");
        std::uint64_t u = 0;
        for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        v[i] = std::bit_cast<double>(u);
    }
    expect_eof(is, path);
    if (dims_out) *dims_out = d;
    return v;
}

SpatioTensor read_tensor(const std::string& path) {
    Dims d;
    Eigen::VectorXd v = read_tensor_values(path, &d);
    for (Index i = 0; i < v.size(); ++i) {
        if (std::isinf(v[i])) throw DataError(path + ": infinite value at index " + std::to_string(i));
    }
    return SpatioTensor::from_nan_pattern(d, std::move(v));
}

void write_mask(const std::string& path, const Dims& dims, const std::vector<std::uint8_t>& mask) {
    if (static_cast<Index>(mask.size()) != dims.size()) throw DimensionError("mask length must equal M*T*P");
    std::ofstream os = open_out(path);
    write_header(os, "BCKM", kMaskFileVersion, dims);
    for (std::uint8_t b : mask) os.put(static_cast<char>(b ? 1 : 0));
    if (!os) throw DataError("failed writing " + path);
}

std::vector<std::uint8_t> read_mask(const std::string& path, Dims* dims_out) {
    std::ifstream is = open_in(path);
    const Dims d = read_header(is, "BCKM", kMaskFileVersion, path);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(d.size()));
    is.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
    if (!is) throw DataError(path + ": payload shorter than M*T*P bytes");
    expect_eof(is, path);
    for (auto& b : mask) {
        if (b > 1) throw DataError(path + ": mask bytes must be 0 or 1");
    }
    if (dims_out) *dims_out = d;
    return mask;
}

SpatioTensor read_long_csv(const std::string& path, std::optional<Dims> dims) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    struct Row {
        Index m, t, p;
        double v;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.find_first_not_of("0123456789+-.eE, \t") != std::string::npos) continue;  // header
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        long long m = 0, t = 0, p = 0;
        std::string vs;
        if (!(ls >> m >> t >> p >> vs)) throw DataError(path + ":" + std::to_string(lineno) + ": expected m,t,p,value");
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(vs, &used);
            if (used != vs.size()) throw std::invalid_argument(vs);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": value is not a number");
        }
        if (m < 1 || t < 1 || p < 1) throw DataError(path + ":" + std::to_string(lineno) + ": indices are 1-based");
        rows.push_back({static_cast<Index>(m - 1), static_cast<Index>(t - 1), static_cast<Index>(p - 1), v});
    }
    if (rows.empty()) throw DataError(path + ": no data rows");
    Dims d;
    if (dims) {
        d = *dims;
    } else {
        for (const auto& r : rows) {
            d.m = std::max(d.m, r.m + 1);
            d.t = std::max(d.t, r.t + 1);
            d.p = std::max(d.p, r.p + 1);
        }
    }
    Eigen::VectorXd values = Eigen::VectorXd::Constant(d.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(d.size()), 0);
    for (const auto& r : rows) {
        if (r.m >= d.m || r.t >= d.t || r.p >= d.p) throw DataError(path + ": index outside the declared dims");
        const Index i = linear_index(d, r.m, r.t, r.p);
        if (seen[static_cast<std::size_t>(i)]) throw DataError(path + ": duplicate entry");
        if (!std::isfinite(r.v)) throw DataError(path + ": non-finite value");
        seen[static_cast<std::size_t>(i)] = 1;
        values[i] = r.v;
    }
    return {d, std::move(values), std::move(seen)};
}

// ---------------------------------------------------------------- synthetic data and masks

double synthetic_field(double s1, double s2) {
    const auto f1 = [](double s) { return s * (std::sin(2.0 * s) + 2.0); };
    const auto f2 = [](double s) { return 0.2 * s * std::sqrt(99.0 * (s + 1.0) + 4.0); };
    return std::cos(4.0 * (f1(s1) + f2(s2))) + std::sin(4.0 * (f1(s2) - f2(s1)));
}

SpatioTensor generate_synthetic(Index n1, Index n2, double noise_var, std::uint64_t seed) {
    if (n1 < 2 || n2 < 2) throw ParameterError("synthetic grid needs at least 2 points per side");
    if (!(noise_var >= 0.0)) throw ParameterError("noise variance must be nonnegative");
    Rng rng = Rng::substream(seed, "synth");
    const Dims d{n1, n2, 1};
    Eigen::VectorXd y(d.size());
    const double sd = std::sqrt(noise_var);
    for (Index t = 0; t < n2; ++t) {
        const double s2 = -1.0 + 4.0 * static_cast<double>(t) / static_cast<double>(n2 - 1);
        for (Index m = 0; m < n1; ++m) {
            const double s1 = -1.0 + 4.0 * static_cast<double>(m) / static_cast<double>(n1 - 1);
            y[linear_index(d, m, t, 0)] = synthetic_field(s1, s2) + sd * rng.normal();
        }
    }
    return {d, std::move(y)};
}

MissingKind parse_missing_kind(const std::string& name) {
    if (name == "rm") return MissingKind::Random;
    if (name == "nm") return MissingKind::NonrandomTube;
    if (name == "sbm") return MissingKind::BlackoutTube;
    if (name == "quadrant") return MissingKind::Quadrant;
    throw ConfigError("unknown missing scenario '" + name + "' (expected rm, nm, sbm or quadrant)");
}

std::string to_string(MissingKind k) {
    switch (k) {
        case MissingKind::Random: return "rm";
        case MissingKind::NonrandomTube: return "nm";
        case MissingKind::BlackoutTube: return "sbm";
        case MissingKind::Quadrant: return "quadrant";
    }
    return "rm";
}

namespace {

// First k entries of a partial Fisher-Yates shuffle of `items`.
template <typename T>
std::vector<T> choose(std::vector<T> items, std::size_t k, Rng& rng) {
    k = std::min(k, items.size());
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t span = items.size() - i;
        const auto j = i + std::min(span - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(span)));
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

}  // namespace

MissingResult apply_missing(const SpatioTensor& t, const MissingScenario& sc, std::uint64_t seed) {
    const Dims d = t.dims();
    if (sc.kind != MissingKind::Quadrant && !(sc.rate > 0.0 && sc.rate < 1.0)) {
        throw ParameterError("missing rate must lie in (0, 1)");
    }
    Rng rng = Rng::substream(seed, "mask");
    std::vector<std::uint8_t> drop(static_cast<std::size_t>(d.size()), 0);
    switch (sc.kind) {
        case MissingKind::Random: {
            const auto k = static_cast<std::size_t>(std::floor(sc.rate * static_cast<double>(t.num_observed())));
            for (Index i : choose(t.observed(), k, rng)) drop[static_cast<std::size_t>(i)] = 1;
            break;
        }
        case MissingKind::NonrandomTube:
        case MissingKind::BlackoutTube: {
            const bool space_tube = sc.kind == MissingKind::NonrandomTube;  // (m, :, p) vs (:, t, p)
            const Index free_dim = space_tube ? d.m : d.t;
            std::vector<Index> tubes(static_cast<std::size_t>(free_dim * d.p));
            for (std::size_t i = 0; i < tubes.size(); ++i) tubes[i] = static_cast<Index>(i);
            const auto k = static_cast<std::size_t>(std::llround(sc.rate * static_cast<double>(tubes.size())));
            for (Index tube : choose(tubes, k, rng)) {
                const Index a = tube % free_dim, p = tube / free_dim;
                if (space_tube) {
                    for (Index tt = 0; tt < d.t; ++tt) drop[static_cast<std::size_t>(linear_index(d, a, tt, p))] = 1;
                } else {
                    for (Index mm = 0; mm < d.m; ++mm) drop[static_cast<std::size_t>(linear_index(d, mm, a, p))] = 1;
                }
            }
            break;
        }
        case MissingKind::Quadrant: {
            const Index hm = d.m / 2, ht = d.t / 2;
            std::vector<Index> quad[4];
            for (Index i : t.observed()) {
                const Index m = i % d.m, tt = (i / d.m) % d.t;
                quad[(m >= hm ? 1 : 0) + (tt >= ht ? 2 : 0)].push_back(i);
            }
            // Quadrants 0 and 3 lie on the diagonal.
            const double rates[4] = {0.6, 0.8, 0.8, 0.6};
            for (int q = 0; q < 4; ++q) {
                const auto k = static_cast<std::size_t>(std::floor(rates[q] * static_cast<double>(quad[q].size())));
                for (Index i : choose(quad[q], k, rng)) drop[static_cast<std::size_t>(i)] = 1;
            }
            break;
        }
    }
    MissingResult out;
    std::vector<std::uint8_t> train_mask = t.mask();
    out.test_mask.assign(drop.size(), 0);
    Index masked = 0;
    for (std::size_t i = 0; i < drop.size(); ++i) {
        if (drop[i] && train_mask[i]) {
            out.test_mask[i] = 1;
            train_mask[i] = 0;
            ++masked;
        }
    }
    out.achieved_rate = t.num_observed() > 0 ? static_cast<double>(masked) / static_cast<double>(t.num_observed()) : 0.0;
    out.train = SpatioTensor(d, t.values(), std::move(train_mask));
    return out;
}

// ---------------------------------------------------------------- configuration

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw SchemaError(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) throw SchemaError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T typed(const json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw SchemaError("");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw SchemaError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw SchemaError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw SchemaError("");
        }
        return v.get<T>();
    } catch (const std::exception&) {
        throw SchemaError("key '" + key + "' has the wrong type");
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& dst) {
    if (obj.contains(key)) dst = typed<T>(obj.at(key), key);
}

Eigen::VectorXd read_vector(const json& v, const std::string& key) {
    if (!v.is_array()) throw SchemaError("key '" + key + "' must be an array of numbers");
    Eigen::VectorXd out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = typed<double>(v[i], key);
    return out;
}

Eigen::MatrixXd read_matrix(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty()) throw SchemaError("key '" + key + "' must be a nonempty array of rows");
    const auto rows = static_cast<Index>(v.size());
    Index cols = -1;
    Eigen::MatrixXd out;
    for (Index i = 0; i < rows; ++i) {
        const Eigen::VectorXd row = read_vector(v[static_cast<std::size_t>(i)], key);
        if (cols < 0) {
            cols = row.size();
            out.resize(rows, cols);
        } else if (row.size() != cols) {
            throw SchemaError("key '" + key + "' has ragged rows");
        }
        out.row(i) = row.transpose();
    }
    return out;
}

std::string resolve(const std::string& base, const std::string& p) {
    if (base.empty() || p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

KernelFamily family_of(const json& v, const std::string& key) {
    try {
        return parse_kernel_family(typed<std::string>(v, key));
    } catch (const ParameterError& e) {
        throw ConfigError(std::string(e.what()));
    }
}

}  // namespace

std::string content_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("configuration is not valid JSON: ") + e.what());
    }
    reject_unknown(doc,
                   {"input", "dims", "output_dir", "truth", "test_mask", "seed", "rank", "local_components",
                    "burn_in", "samples", "factor_kernels", "local_kernels", "taper", "coords", "precomputed",
                    "k3_mode", "hyperpriors", "pcg", "jitter", "tau_imag", "interval_includes_noise", "level",
                    "exact_store_limit", "scenario", "freeze_hyperparameters", "fixed_tau", "initial_tau",
                    "max_solver_failure_fraction"},
                   "configuration");
    RunConfig rc;
    McmcConfig& c = rc.mcmc;
    if (!doc.contains("input")) throw SchemaError("configuration is missing 'input'");
    if (!doc.contains("output_dir")) throw SchemaError("configuration is missing 'output_dir'");
    rc.input = resolve(base_dir, typed<std::string>(doc["input"], "input"));
    rc.output_dir = resolve(base_dir, typed<std::string>(doc["output_dir"], "output_dir"));
    if (doc.contains("dims")) {
        const Eigen::VectorXd dv = read_vector(doc["dims"], "dims");
        if (dv.size() != 3) throw SchemaError("'dims' must be [M, T, P]");
        rc.input_dims = Dims{static_cast<Index>(dv[0]), static_cast<Index>(dv[1]), static_cast<Index>(dv[2])};
    }
    if (doc.contains("truth")) rc.truth = resolve(base_dir, typed<std::string>(doc["truth"], "truth"));
    if (doc.contains("test_mask")) rc.test_mask = resolve(base_dir, typed<std::string>(doc["test_mask"], "test_mask"));
    if (doc.contains("scenario")) rc.scenario = doc["scenario"].dump();

    if (doc.contains("seed")) {
        const json& s = doc["seed"];
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
            throw SchemaError("key 'seed' must be a nonnegative integer");
        }
        c.seed = s.get<std::uint64_t>();
    }
    read_opt(doc, "rank", c.rank);
    read_opt(doc, "local_components", c.local_components);
    read_opt(doc, "burn_in", c.burn_in);
    read_opt(doc, "samples", c.samples);

    if (doc.contains("factor_kernels")) {
        const json& fk = doc["factor_kernels"];
        reject_unknown(fk, {"space", "time"}, "factor_kernels");
        if (fk.contains("space")) c.space_kernel.family = family_of(fk["space"], "factor_kernels.space");
        if (fk.contains("time")) c.time_kernel.family = family_of(fk["time"], "factor_kernels.time");
    }
    if (doc.contains("local_kernels")) {
        const json& lk = doc["local_kernels"];
        reject_unknown(lk, {"space", "time"}, "local_kernels");
        if (lk.contains("space")) c.local_space_family = family_of(lk["space"], "local_kernels.space");
        if (lk.contains("time")) c.local_time_family = family_of(lk["time"], "local_kernels.time");
    }
    if (doc.contains("taper")) {
        const json& tp = doc["taper"];
        reject_unknown(tp, {"family", "range"}, "taper");
        if (tp.contains("family")) {
            try {
                const TaperFamily f = parse_taper_family(typed<std::string>(tp["family"], "taper.family"));
                c.space_taper.family = f;
                c.time_taper.family = f;
            } catch (const ParameterError& e) {
                throw ConfigError(e.what());
            }
        }
        if (tp.contains("range")) {
            const Eigen::VectorXd r = read_vector(tp["range"], "taper.range");
            if (r.size() != 2) throw SchemaError("'taper.range' must be [lambda_space, lambda_time]");
            c.space_taper.range = r[0];
            c.time_taper.range = r[1];
        }
    }
    if (doc.contains("coords")) {
        const json& co = doc["coords"];
        reject_unknown(co, {"space", "time"}, "coords");
        if (co.contains("space")) c.space_coords = read_vector(co["space"], "coords.space");
        if (co.contains("time")) c.time_coords = read_vector(co["time"], "coords.time");
    }
    if (doc.contains("precomputed")) {
        const json& pc = doc["precomputed"];
        reject_unknown(pc, {"space", "time"}, "precomputed");
        if (pc.contains("space")) {
            rc.space_precomputed_path = resolve(base_dir, typed<std::string>(pc["space"], "precomputed.space"));
        }
        if (pc.contains("time")) {
            rc.time_precomputed_path = resolve(base_dir, typed<std::string>(pc["time"], "precomputed.time"));
        }
    }
    if (doc.contains("k3_mode")) {
        const auto m = typed<std::string>(doc["k3_mode"], "k3_mode");
        if (m == "full") {
            c.k3_mode = K3Mode::Full;
        } else if (m == "diagonal") {
            c.k3_mode = K3Mode::Diagonal;
        } else {
            throw ConfigError("k3_mode must be 'full' or 'diagonal'");
        }
    }
    if (doc.contains("hyperpriors")) {
        const json& hp = doc["hyperpriors"];
        reject_unknown(hp, {"mu_phi", "tau_phi", "mu_delta", "tau_delta", "mu_theta", "tau_theta", "a0", "b0", "psi0",
                            "nu0"},
                       "hyperpriors");
        HyperPriors& p = c.priors;
        read_opt(hp, "mu_phi", p.mu_phi);
        read_opt(hp, "tau_phi", p.tau_phi);
        read_opt(hp, "mu_delta", p.mu_delta);
        read_opt(hp, "tau_delta", p.tau_delta);
        read_opt(hp, "mu_theta", p.mu_theta);
        read_opt(hp, "tau_theta", p.tau_theta);
        read_opt(hp, "a0", p.a0);
        read_opt(hp, "b0", p.b0);
        if (hp.contains("psi0")) p.psi0 = read_matrix(hp["psi0"], "hyperpriors.psi0");
        if (hp.contains("nu0")) p.nu0 = typed<double>(hp["nu0"], "hyperpriors.nu0");
    }
    if (doc.contains("pcg")) {
        const json& pg = doc["pcg"];
        reject_unknown(pg, {"tol", "max_iter"}, "pcg");
        read_opt(pg, "tol", c.pcg.tol);
        read_opt(pg, "max_iter", c.pcg.max_iter);
    }
    read_opt(doc, "jitter", c.jitter);
    read_opt(doc, "tau_imag", c.tau_imag);
    read_opt(doc, "interval_includes_noise", c.interval_includes_noise);
    read_opt(doc, "level", c.level);
    read_opt(doc, "exact_store_limit", c.exact_store_limit);
    read_opt(doc, "freeze_hyperparameters", c.freeze_hyperparameters);
    read_opt(doc, "max_solver_failure_fraction", c.max_solver_failure_fraction);
    if (doc.contains("fixed_tau")) c.fixed_tau = typed<double>(doc["fixed_tau"], "fixed_tau");
    if (doc.contains("initial_tau")) c.initial_tau = typed<double>(doc["initial_tau"], "initial_tau");

    if (c.space_kernel.family == KernelFamily::Precomputed && !rc.space_precomputed_path) {
        throw ConfigError("factor_kernels.space is 'precomputed' but precomputed.space is not set");
    }
    if (c.time_kernel.family == KernelFamily::Precomputed && !rc.time_precomputed_path) {
        throw ConfigError("factor_kernels.time is 'precomputed' but precomputed.time is not set");
    }
    c.validate();
    rc.canonical_json = doc.dump();
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str(), fs::path(path).parent_path().string());
}

SpatioTensor load_input(RunConfig& cfg) {
    const std::string ext = fs::path(cfg.input).extension().string();
    SpatioTensor data = ext == ".csv" ? read_long_csv(cfg.input, cfg.input_dims) : read_tensor(cfg.input);
    const auto load_matrix = [](const std::string& path, Index n) {
        Dims d;
        const Eigen::VectorXd v = read_tensor_values(path, &d);
        if (d.m != n || d.t != n || d.p != 1) {
            throw DataError(path + ": precomputed covariance must be stored as " + std::to_string(n) + "x" +
                            std::to_string(n) + "x1");
        }
        if (!v.allFinite()) throw DataError(path + ": precomputed covariance has non-finite entries");
        return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n));
    };
    if (cfg.space_precomputed_path) cfg.mcmc.space_precomputed = load_matrix(*cfg.space_precomputed_path, data.dims().m);
    if (cfg.time_precomputed_path) cfg.mcmc.time_precomputed = load_matrix(*cfg.time_precomputed_path, data.dims().t);
    const auto check_coords = [](const Eigen::VectorXd& c, Index n, const char* what) {
        if (c.size() != 0 && c.size() != n) {
            throw DataError(std::string("coords.") + what + " has " + std::to_string(c.size()) +
                            " entries; the tensor needs " + std::to_string(n));
        }
    };
    check_coords(cfg.mcmc.space_coords, data.dims().m, "space");
    check_coords(cfg.mcmc.time_coords, data.dims().t, "time");
    return data;
}

// ---------------------------------------------------------------- run outputs

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

void write_trace_csv(const std::string& path, const std::vector<SweepRecord>& trace, Index rank, Index q) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << "iter,tau";
    for (Index d = 1; d <= rank; ++d) os << ",phi_" << d;
    for (Index d = 1; d <= rank; ++d) os << ",delta_" << d;
    for (Index k = 1; k <= q; ++k) os << ",theta1_" << k;
    for (Index k = 1; k <= q; ++k) os << ",theta2_" << k;
    os << ",pcg_iters\n";
    for (const auto& r : trace) {
        os << r.iteration << ',' << fmt(r.tau);
        for (Index d = 0; d < rank; ++d) os << ',' << fmt(std::exp(r.log_phi[d]));
        for (Index d = 0; d < rank; ++d) os << ',' << fmt(std::exp(r.log_delta[d]));
        for (Index k = 0; k < q; ++k) os << ',' << fmt(std::exp(r.log_theta1[k]));
        for (Index k = 0; k < q; ++k) os << ',' << fmt(std::exp(r.log_theta2[k]));
        os << ',' << r.pcg_iterations << '\n';
    }
}

std::string sweep_json_line(const SweepRecord& rec) {
    json j;
    j["iteration"] = rec.iteration;
    j["tau"] = rec.tau;
    j["theta1"] = json::array();
    j["theta2"] = json::array();
    for (Index k = 0; k < rec.log_theta1.size(); ++k) j["theta1"].push_back(std::exp(rec.log_theta1[k]));
    for (Index k = 0; k < rec.log_theta2.size(); ++k) j["theta2"].push_back(std::exp(rec.log_theta2[k]));
    j["pcg_iterations"] = rec.pcg_iterations;
    j["pcg_converged"] = rec.pcg_converged;
    return j.dump();
}

void write_summary(const std::string& dir, const Dims& dims, const PosteriorSummary& s) {
    fs::create_directories(dir);
    write_tensor((fs::path(dir) / "mean.bckl").string(), dims, s.mean);
    write_tensor((fs::path(dir) / "std.bckl").string(), dims, s.std);
    write_tensor((fs::path(dir) / "lower.bckl").string(), dims, s.lower);
    write_tensor((fs::path(dir) / "upper.bckl").string(), dims, s.upper);
}

PosteriorSummary read_summary(const std::string& dir, Dims* dims_out) {
    PosteriorSummary s;
    Dims d, d2;
    s.mean = read_tensor_values((fs::path(dir) / "mean.bckl").string(), &d);
    const auto load = [&](const char* name) {
        Eigen::VectorXd v = read_tensor_values((fs::path(dir) / name).string(), &d2);
        if (!(d2 == d)) throw DataError(std::string(name) + " does not match the dims of mean.bckl");
        return v;
    };
    s.std = load("std.bckl");
    s.lower = load("lower.bckl");
    s.upper = load("upper.bckl");
    if (dims_out) *dims_out = d;
    return s;
}

std::string score_json(const ScoreReport& r) {
    // Keys come out sorted and doubles round-trip exactly, so equal reports give equal bytes.
    json j = json::object();
    j["n"] = r.n;
    j["mae"] = r.mae;
    j["rmse"] = r.rmse;
    j["crps"] = r.crps;
    j["int"] = r.int_score;
    j["cvg"] = r.cvg;
    j["psnr"] = r.psnr;
    return j.dump(2) + "\n";
}

ScoreReport evaluate(const PosteriorSummary& s, const SpatioTensor& truth, const std::vector<std::uint8_t>& test_mask,
                     double alpha, std::optional<double> psnr_max) {
    const Index n = truth.dims().size();
    if (static_cast<Index>(test_mask.size()) != n || s.mean.size() != n) {
        throw DataError("truth, test mask and posterior summary must share dims");
    }
    std::vector<Index> idx;
    for (Index i = 0; i < n; ++i) {
        if (!test_mask[static_cast<std::size_t>(i)]) continue;
        if (!truth.is_observed(i)) throw DataError("test entry " + std::to_string(i) + " is missing in the truth tensor");
        idx.push_back(i);
    }
    if (idx.empty()) throw DataError("the test mask selects no entries");
    const auto pick = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out(static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
        return out;
    };
    const Eigen::VectorXd y = pick(truth.values());
    if (!psnr_max) {
        // Peak of the whole observed truth tensor.
        double peak = -std::numeric_limits<double>::infinity();
        for (Index i : truth.observed()) peak = std::max(peak, truth.values()[i]);
        psnr_max = peak;
    }
    return score(y, pick(s.mean), pick(s.std), pick(s.lower), pick(s.upper), alpha, psnr_max);
}

}  // namespace bckl
