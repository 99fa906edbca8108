#include "tucknet/model_io.hpp"

#include <cstring>
#include <string>
#include <vector>

#include "byteio.hpp"
#include "tucknet/backprop.hpp"

namespace tucknet {
namespace {

constexpr char kMagic[4] = {'T', 'M', 'D', 'L'};
constexpr std::uint16_t kVersion = 1;

std::uint8_t code(CellKind k) { return k == CellKind::kTLSTM ? 0 : 1; }
std::uint8_t code(Activation a) {
    switch (a) {
        case Activation::kLogistic: return 0;
        case Activation::kTanh: return 1;
        case Activation::kIdentity: return 2;
    }
    throw FormatError("unencodable activation");
}
std::uint8_t code(HeadActivation a) { return a == HeadActivation::kIdentity ? 0 : 1; }

CellKind cell_kind_from(std::uint8_t c) {
    if (c > 1) throw FormatError("unknown cell kind code");
    return c == 0 ? CellKind::kTLSTM : CellKind::kTGRU;
}
Activation activation_from(std::uint8_t c) {
    switch (c) {
        case 0: return Activation::kLogistic;
        case 1: return Activation::kTanh;
        case 2: return Activation::kIdentity;
    }
    throw FormatError("unknown activation code");
}
HeadActivation head_activation_from(std::uint8_t c) {
    if (c > 1) throw FormatError("unknown head activation code");
    return c == 0 ? HeadActivation::kIdentity : HeadActivation::kSoftmax;
}

void append_dims(std::string& out, const Dims& dims) {
    for (std::int64_t d : dims) byteio::append_u32(out, static_cast<std::uint32_t>(d));
}

void append_section(std::string& out, const char tag[4], const std::string& payload) {
    out.append(tag, 4);
    byteio::append_u64(out, payload.size());
    out += payload;
}

/// Bounds-checked reader over the slurped file.
class Cursor {
public:
    Cursor(const std::string& bytes, std::string path)
        : p_(reinterpret_cast<const unsigned char*>(bytes.data())),
          n_(bytes.size()),
          path_(std::move(path)) {}

    const unsigned char* take(std::size_t k) {
        if (k > n_ - off_ || off_ > n_) throw FormatError("truncated model file: " + path_);
        const unsigned char* q = p_ + off_;
        off_ += k;
        return q;
    }
    bool done() const { return off_ == n_; }
    const std::string& path() const { return path_; }

private:
    const unsigned char* p_;
    std::size_t n_;
    std::size_t off_ = 0;
    std::string path_;
};

Dims read_dims(Cursor& c, int order) {
    Dims dims;
    for (int d = 0; d < order; ++d) {
        const std::uint32_t v = byteio::load_u32(c.take(4));
        if (v == 0) throw FormatError("zero dim in model file: " + c.path());
        dims.push_back(static_cast<std::int64_t>(v));
    }
    return dims;
}

}  // namespace

void write_model(const ModelBundle& bundle, const std::filesystem::path& path) {
    const Model& m = bundle.model;
    const ActivationSet acts = m.kind() == CellKind::kTLSTM
                                   ? std::get<LSTMCell>(m.cell).activations
                                   : std::get<GRUCell>(m.cell).activations;

    std::string meta;
    meta.push_back(static_cast<char>(code(m.kind())));
    meta.push_back(static_cast<char>(code(acts.gate)));
    meta.push_back(static_cast<char>(code(acts.candidate)));
    meta.push_back(static_cast<char>(code(acts.output)));
    meta.push_back(static_cast<char>(code(m.head.activation)));
    byteio::append_u16(meta, static_cast<std::uint16_t>(input_dims(m).size()));
    append_dims(meta, input_dims(m));
    append_dims(meta, hidden_dims(m));
    append_dims(meta, m.head.bias.dims());

    std::string parm;
    parm.reserve(static_cast<std::size_t>(parameter_count(m)) * 8);
    visit_params(m, [&parm](const double* p, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) byteio::append_f64(parm, p[i]);
    });

    std::string bytes;
    bytes.append(kMagic, 4);
    byteio::append_u16(bytes, kVersion);
    append_section(bytes, "META", meta);
    append_section(bytes, "PARM", parm);
    if (bundle.has_scaler) {
        if (bundle.scaler.mean.size() != bundle.scaler.stddev.size())
            throw ShapeError("model bundle: scaler mean/stddev sizes differ");
        std::string scal;
        byteio::append_u64(scal, bundle.scaler.mean.size());
        for (double v : bundle.scaler.mean) byteio::append_f64(scal, v);
        for (double v : bundle.scaler.stddev) byteio::append_f64(scal, v);
        append_section(bytes, "SCAL", scal);
    }
    byteio::write_file_atomically(path, bytes);
}

ModelBundle read_model(const std::filesystem::path& path) {
    const std::string bytes = byteio::slurp_file(path);
    Cursor c(bytes, path.string());

    if (std::memcmp(c.take(4), kMagic, 4) != 0)
        throw FormatError("bad magic: " + path.string());
    if (byteio::load_u16(c.take(2)) != kVersion)
        throw FormatError("unsupported model version: " + path.string());

    const auto expect_section = [&c, &path](const char* tag) -> std::uint64_t {
        if (std::memcmp(c.take(4), tag, 4) != 0)
            throw FormatError(std::string("expected section ") + tag + ": " + path.string());
        return byteio::load_u64(c.take(8));
    };

    const std::uint64_t meta_len = expect_section("META");
    const std::uint16_t order_peek_guard = 5 + 2;  // kind+acts+order before dims
    if (meta_len < order_peek_guard) throw FormatError("META too short: " + path.string());
    const CellKind kind = cell_kind_from(*c.take(1));
    ActivationSet acts;
    acts.gate = activation_from(*c.take(1));
    acts.candidate = activation_from(*c.take(1));
    acts.output = activation_from(*c.take(1));
    const HeadActivation head_act = head_activation_from(*c.take(1));
    const std::uint16_t order = byteio::load_u16(c.take(2));
    if (order == 0) throw FormatError("zero order in model file: " + path.string());
    if (meta_len != order_peek_guard + 3u * 4u * order)
        throw FormatError("META length mismatch: " + path.string());
    const Dims in = read_dims(c, order);
    const Dims hid = read_dims(c, order);
    const Dims resp = read_dims(c, order);

    ModelBundle bundle{make_model(kind, in, hid, resp, 0, InitScheme::kZero, acts), {}, false};
    bundle.model.head.activation = head_act;

    const std::uint64_t parm_len = expect_section("PARM");
    if (parm_len != static_cast<std::uint64_t>(parameter_count(bundle.model)) * 8)
        throw FormatError("parameter count mismatch: " + path.string());
    visit_params(bundle.model, [&c](double* p, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) p[i] = byteio::load_f64(c.take(8));
    });

    if (!c.done()) {
        const std::uint64_t scal_len = expect_section("SCAL");
        if (scal_len < 8) throw FormatError("SCAL too short: " + path.string());
        const std::uint64_t n = byteio::load_u64(c.take(8));
        if (scal_len != 8 + 16 * n) throw FormatError("SCAL length mismatch: " + path.string());
        bundle.scaler.mean.resize(static_cast<std::size_t>(n));
        bundle.scaler.stddev.resize(static_cast<std::size_t>(n));
        for (double& v : bundle.scaler.mean) v = byteio::load_f64(c.take(8));
        for (double& v : bundle.scaler.stddev) v = byteio::load_f64(c.take(8));
        bundle.has_scaler = true;
    }
    if (!c.done()) throw FormatError("trailing bytes after model sections: " + path.string());
    return bundle;
}

}  // namespace tucknet
