#include "polcolor/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "polcolor/errors.hpp"

namespace polcolor {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        using U = std::make_unsigned_t<T>;
        const auto u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void put_f64(double v) { put<std::uint64_t>(std::bit_cast<std::uint64_t>(v)); }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void put_matrix(const nn::Matrix<double>& m) {
        put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
        put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(m.data()[i]);
    }
    void put_vector(const Eigen::VectorXd& v) {
        put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(v[i]);
    }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    template <typename T>
    T get() {
        using U = std::make_unsigned_t<T>;
        need(sizeof(T));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>(u | (static_cast<U>(data_[pos_ + i]) << (8 * i)));
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const auto* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    nn::Matrix<double> get_matrix() {
        const auto rows = get<std::uint32_t>();
        const auto cols = get<std::uint32_t>();
        need(8 * static_cast<std::size_t>(rows) * cols);
        nn::Matrix<double> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64();
        return m;
    }
    Eigen::VectorXd get_vector() {
        const auto n = get<std::uint32_t>();
        need(8 * static_cast<std::size_t>(n));
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_f64();
        return v;
    }
    bool done() const { return pos_ == size_; }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n) throw InvalidInput("truncated checkpoint");
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size())
        throw InvalidInput("checkpoint config '" + key + "' has invalid value '" + text + "'");
    return v;
}

template <typename T>
std::string join(const T& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ',';
        out += std::to_string(v);
    }
    return out;
}

std::vector<int> split_ints(const std::string& key, const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
    return out;
}

std::string config_text(const ModelCheckpoint& c) {
    const TrainConfig& t = c.train;
    std::ostringstream os;
    os << "extractor.widths=" << join(c.extractor.widths) << '\n'
       << "translator.trunk=" << join(c.translator.trunk) << '\n'
       << "translator.head_hidden=" << c.translator.head_hidden << '\n'
       << "translator.heads=" << c.translator.heads << '\n'
       << "translator.bins=" << c.translator.bins << '\n'
       << "train.batch_pixels=" << t.batch_pixels << '\n'
       << "train.patch=" << t.patch << '\n'
       << "train.epochs=" << t.epochs << '\n'
       << "train.seed=" << t.seed << '\n'
       << "train.precision=" << (t.precision == Precision::Double ? "double" : "single") << '\n'
       << "train.learning_rate=" << format_double(t.adam.learning_rate) << '\n'
       << "train.beta1=" << format_double(t.adam.beta1) << '\n'
       << "train.beta2=" << format_double(t.adam.beta2) << '\n'
       << "train.epsilon=" << format_double(t.adam.epsilon) << '\n'
       << "train.train_extractor=" << (t.train_extractor ? 1 : 0) << '\n'
       << "train.channel=" << static_cast<int>(t.channel) << '\n'
       << "train.db_floor=" << format_double(t.db_floor) << '\n'
       << "epochs_completed=" << c.epochs_completed << '\n';
    return os.str();
}

void parse_config(const std::string& text, ModelCheckpoint& c) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidInput("malformed checkpoint config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw InvalidInput("checkpoint config lacks '" + key + "'");
        return it->second;
    };
    const auto widths = split_ints("extractor.widths", get("extractor.widths"));
    if (widths.size() != c.extractor.widths.size()) throw InvalidInput("checkpoint extractor needs 7 widths");
    std::copy(widths.begin(), widths.end(), c.extractor.widths.begin());
    c.translator.trunk = split_ints("translator.trunk", get("translator.trunk"));
    c.translator.head_hidden = parse_number<int>("translator.head_hidden", get("translator.head_hidden"));
    c.translator.heads = parse_number<int>("translator.heads", get("translator.heads"));
    c.translator.bins = parse_number<int>("translator.bins", get("translator.bins"));
    TrainConfig& t = c.train;
    t.batch_pixels = parse_number<int>("train.batch_pixels", get("train.batch_pixels"));
    t.patch = parse_number<int>("train.patch", get("train.patch"));
    t.epochs = parse_number<int>("train.epochs", get("train.epochs"));
    t.seed = parse_number<std::uint64_t>("train.seed", get("train.seed"));
    const std::string& precision = get("train.precision");
    if (precision != "single" && precision != "double") throw InvalidInput("unknown precision '" + precision + "'");
    t.precision = precision == "double" ? Precision::Double : Precision::Single;
    t.adam.learning_rate = parse_number<double>("train.learning_rate", get("train.learning_rate"));
    t.adam.beta1 = parse_number<double>("train.beta1", get("train.beta1"));
    t.adam.beta2 = parse_number<double>("train.beta2", get("train.beta2"));
    t.adam.epsilon = parse_number<double>("train.epsilon", get("train.epsilon"));
    t.train_extractor = parse_number<int>("train.train_extractor", get("train.train_extractor")) != 0;
    const int channel = parse_number<int>("train.channel", get("train.channel"));
    if (channel < 0 || channel > 2) throw InvalidInput("checkpoint channel out of range");
    t.channel = static_cast<Channel>(channel);
    t.db_floor = parse_number<double>("train.db_floor", get("train.db_floor"));
    c.epochs_completed = parse_number<int>("epochs_completed", get("epochs_completed"));
}

void put_params(Writer& w, const nn::NetParams<double>& params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.put_matrix(p.weight);
        w.put_vector(p.bias);
        w.put<std::uint64_t>(p.version);
    }
}

nn::NetParams<double> get_params(Reader& r) {
    const auto n = r.get<std::uint32_t>();
    nn::NetParams<double> params(n);
    for (auto& p : params) {
        p.weight = r.get_matrix();
        p.bias = r.get_vector();
        p.version = r.get<std::uint64_t>();
    }
    return params;
}

void add_section(Writer& out, const char tag[4], std::vector<std::uint8_t>& payload) {
    out.put_bytes(tag, 4);
    out.put<std::uint64_t>(payload.size());
    out.put_bytes(payload.data(), payload.size());
}

void check_shapes(const ModelCheckpoint& c) {
    const ColorizationNet<double> reference(c.extractor, c.translator, 0);
    const auto& expected = reference.params();
    if (c.params.size() != expected.size()) throw InvalidInput("checkpoint parameter count does not match its config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& a = c.params[i];
        const auto& b = expected[i];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size())
            throw InvalidInput("checkpoint layer " + std::to_string(i) + " has the wrong shape");
    }
    if (c.adam.first_moment.size() != expected.size() || c.adam.second_moment.size() != expected.size())
        throw InvalidInput("checkpoint optimizer state does not match the parameters");
    if (c.stats.mean.size() != c.extractor.taps().size())
        throw InvalidInput("checkpoint norm stats do not match the extractor");
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& c) {
    Writer out;
    out.put_bytes(kMagic, 4);
    out.put<std::uint16_t>(ModelCheckpoint::kFormatVersion);
    out.put<std::uint16_t>(5);

    Writer conf;
    const std::string text = config_text(c);
    conf.put_bytes(text.data(), text.size());
    add_section(out, "CONF", conf.bytes());

    Writer parm;
    put_params(parm, c.params);
    add_section(out, "PARM", parm.bytes());

    Writer adam;
    adam.put<std::uint64_t>(c.adam.step_count);
    put_params(adam, c.adam.first_moment);
    put_params(adam, c.adam.second_moment);
    add_section(out, "ADAM", adam.bytes());

    Writer qunt;
    qunt.put<std::uint32_t>(static_cast<std::uint32_t>(c.quantizers.size()));
    for (const auto& q : c.quantizers) {
        qunt.put<std::int32_t>(q.param_id);
        qunt.put<std::int32_t>(q.k);
        qunt.put_f64(q.lo);
        qunt.put_f64(q.hi);
        qunt.put<std::uint8_t>(q.uniform_fallback ? 1 : 0);
        qunt.put_vector(q.edges);
        qunt.put_vector(q.centers);
    }
    add_section(out, "QUNT", qunt.bytes());

    Writer norm;
    norm.put<std::uint32_t>(static_cast<std::uint32_t>(c.stats.mean.size()));
    for (double m : c.stats.mean) norm.put_f64(m);
    for (double s : c.stats.stddev) norm.put_f64(s);
    add_section(out, "NORM", norm.bytes());

    return std::move(out.bytes());
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw InvalidInput("bad checkpoint magic");
    Reader r(bytes.data(), bytes.size());
    r.take(4);
    const auto version = r.get<std::uint16_t>();
    if (version != ModelCheckpoint::kFormatVersion)
        throw InvalidInput("unsupported checkpoint version " + std::to_string(version));
    const auto sections = r.get<std::uint16_t>();

    std::map<std::string, std::pair<const std::uint8_t*, std::size_t>> found;
    for (int s = 0; s < sections; ++s) {
        const auto* tag = r.take(4);
        const auto length = r.get<std::uint64_t>();
        if (length > bytes.size()) throw InvalidInput("truncated checkpoint");
        found[std::string(reinterpret_cast<const char*>(tag), 4)] = {r.take(static_cast<std::size_t>(length)),
                                                                      static_cast<std::size_t>(length)};
    }
    if (!r.done()) throw InvalidInput("trailing bytes after checkpoint sections");
    auto section = [&](const std::string& tag) {
        const auto it = found.find(tag);
        if (it == found.end()) throw InvalidInput("checkpoint lacks section " + tag);
        return Reader(it->second.first, it->second.second);
    };

    ModelCheckpoint c;
    const auto conf = found.find("CONF");
    if (conf == found.end()) throw InvalidInput("checkpoint lacks section CONF");
    parse_config(std::string(reinterpret_cast<const char*>(conf->second.first), conf->second.second), c);

    Reader parm = section("PARM");
    c.params = get_params(parm);

    Reader adam = section("ADAM");
    c.adam.config = c.train.adam;
    c.adam.step_count = adam.get<std::uint64_t>();
    c.adam.first_moment = get_params(adam);
    c.adam.second_moment = get_params(adam);

    Reader qunt = section("QUNT");
    if (qunt.get<std::uint32_t>() != c.quantizers.size()) throw InvalidInput("checkpoint needs 9 quantizer tables");
    for (auto& q : c.quantizers) {
        q.param_id = qunt.get<std::int32_t>();
        q.k = qunt.get<std::int32_t>();
        q.lo = qunt.get_f64();
        q.hi = qunt.get_f64();
        q.uniform_fallback = qunt.get<std::uint8_t>() != 0;
        q.edges = qunt.get_vector();
        q.centers = qunt.get_vector();
        if (q.k != c.translator.bins || q.edges.size() != q.k + 1 || q.centers.size() != q.k)
            throw InvalidInput("checkpoint quantizer table has inconsistent sizes");
    }

    Reader norm = section("NORM");
    const auto layers = norm.get<std::uint32_t>();
    c.stats.mean.resize(layers);
    c.stats.stddev.resize(layers);
    for (auto& m : c.stats.mean) m = norm.get_f64();
    for (auto& s : c.stats.stddev) s = norm.get_f64();

    for (Reader* rd : {&parm, &adam, &qunt, &norm})
        if (!rd->done()) throw InvalidInput("checkpoint section has trailing bytes");
    check_shapes(c);
    return c;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("failed writing " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace polcolor
