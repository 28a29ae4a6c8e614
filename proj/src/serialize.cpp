#include "edgenet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

static_assert(std::endian::native == std::endian::little,
              "artifact format assumes a little-endian host");

namespace fs = std::filesystem;

namespace edgenet {

namespace {

class Writer {
public:
    explicit Writer(const fs::path& path) : final_path_(path), tmp_path_(path.string() + ".tmp") {
        out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot create " + tmp_path_.string());
    }

    void bytes(const void* p, size_t n) {
        out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    template <typename T>
    void scalar(T v) {
        bytes(&v, sizeof(T));
    }
    void u8(uint8_t v) { scalar(v); }
    void u16(uint16_t v) { scalar(v); }
    void u32(uint32_t v) { scalar(v); }
    void u64(uint64_t v) { scalar(v); }
    void i32(int32_t v) { scalar(v); }
    void f32(float v) { scalar(v); }

    // Close and atomically move into place.
    void commit() {
        out_.flush();
        if (!out_.good()) throw IoError("write failed for " + tmp_path_.string());
        out_.close();
        std::error_code ec;
        fs::rename(tmp_path_, final_path_, ec);
        if (ec) throw IoError("cannot rename " + tmp_path_.string() + ": " + ec.message());
    }

private:
    fs::path final_path_;
    fs::path tmp_path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(std::vector<uint8_t> data) : data_(std::move(data)) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return data_.size() - off_; }

    const uint8_t* bytes(size_t n) {
        if (remaining() < n)
            throw FormatError("truncated artifact: need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(off_));
        const uint8_t* p = data_.data() + off_;
        off_ += n;
        return p;
    }
    template <typename T>
    T scalar() {
        T v;
        std::memcpy(&v, bytes(sizeof(T)), sizeof(T));
        return v;
    }
    uint8_t u8() { return scalar<uint8_t>(); }
    uint16_t u16() { return scalar<uint16_t>(); }
    uint32_t u32() { return scalar<uint32_t>(); }
    uint64_t u64() { return scalar<uint64_t>(); }
    int32_t i32() { return scalar<int32_t>(); }
    float f32() { return scalar<float>(); }

private:
    std::vector<uint8_t> data_;
    size_t off_ = 0;
};

std::vector<uint8_t> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return data;
}

void write_config(Writer& w, const ModelConfig& cfg) {
    w.u32(static_cast<uint32_t>(cfg.input_size));
    w.u32(static_cast<uint32_t>(cfg.num_classes));
    w.u16(static_cast<uint16_t>(cfg.layers.size()));
    for (const LayerSpec& l : cfg.layers) {
        w.u8(static_cast<uint8_t>(l.kind));
        switch (l.kind) {
            case LayerSpec::Kind::Conv:
            case LayerSpec::Kind::Dense:
                w.u32(static_cast<uint32_t>(l.in));
                w.u32(static_cast<uint32_t>(l.out));
                break;
            case LayerSpec::Kind::Dropout: w.f32(l.rate); break;
            default: break;
        }
    }
}

ModelConfig read_config(Reader& r) {
    ModelConfig cfg;
    cfg.input_size = r.u32();
    cfg.num_classes = r.u32();
    const uint16_t n = r.u16();
    for (uint16_t i = 0; i < n; ++i) {
        LayerSpec l;
        const uint8_t kind = r.u8();
        if (kind > static_cast<uint8_t>(LayerSpec::Kind::Softmax))
            throw FormatError("unknown layer kind " + std::to_string(kind) + " at offset " +
                              std::to_string(r.offset() - 1));
        l.kind = static_cast<LayerSpec::Kind>(kind);
        switch (l.kind) {
            case LayerSpec::Kind::Conv:
            case LayerSpec::Kind::Dense:
                l.in = r.u32();
                l.out = r.u32();
                break;
            case LayerSpec::Kind::Dropout: l.rate = r.f32(); break;
            default: break;
        }
        cfg.layers.push_back(l);
    }
    return cfg;
}

void write_tensor_record(Writer& w, const StoredTensor& st) {
    const uint64_t name_len = st.name.size();
    const uint64_t rank = st.shape.rank();
    uint64_t record_len = 2 + name_len + 1 + 1 + 4 * rank + 1 + 8 + st.raw.size();
    if (st.quant) record_len += 8;
    w.u64(record_len);
    w.u16(static_cast<uint16_t>(name_len));
    w.bytes(st.name.data(), st.name.size());
    w.u8(static_cast<uint8_t>(st.dtype));
    w.u8(static_cast<uint8_t>(rank));
    for (size_t i = 0; i < rank; ++i) w.u32(static_cast<uint32_t>(st.shape[i]));
    w.u8(st.quant ? 1 : 0);
    if (st.quant) {
        w.f32(st.quant->scale);
        w.i32(st.quant->zero_point);
    }
    w.u64(st.raw.size());
    w.bytes(st.raw.data(), st.raw.size());
}

StoredTensor read_tensor_record(Reader& r) {
    const size_t record_start = r.offset();
    const uint64_t record_len = r.u64();
    if (record_len > r.remaining())
        throw FormatError("tensor record at offset " + std::to_string(record_start) +
                          " overruns the file");
    StoredTensor st;
    const uint16_t name_len = r.u16();
    st.name.assign(reinterpret_cast<const char*>(r.bytes(name_len)), name_len);
    const uint8_t dtype = r.u8();
    if (dtype > static_cast<uint8_t>(DType::I8))
        throw FormatError("tensor '" + st.name + "': unknown dtype tag " + std::to_string(dtype));
    st.dtype = static_cast<DType>(dtype);
    const uint8_t rank = r.u8();
    if (rank == 0 || rank > 8)
        throw FormatError("tensor '" + st.name + "': bad rank " + std::to_string(rank));
    std::vector<int64_t> dims;
    for (uint8_t i = 0; i < rank; ++i) {
        const uint32_t d = r.u32();
        if (d == 0) throw FormatError("tensor '" + st.name + "': zero extent");
        dims.push_back(static_cast<int64_t>(d));
    }
    st.shape = Shape(std::move(dims));
    const bool has_quant = r.u8() != 0;
    if (has_quant) {
        QuantParams qp;
        qp.scale = r.f32();
        qp.zero_point = r.i32();
        st.quant = qp;
    }
    if ((st.dtype == DType::I8) != has_quant)
        throw FormatError("tensor '" + st.name + "': QuantParams present iff dtype is i8");
    const uint64_t data_len = r.u64();
    const uint64_t expect = static_cast<uint64_t>(st.shape.numel()) * dtype_size(st.dtype);
    if (data_len != expect)
        throw FormatError("tensor '" + st.name + "': payload " + std::to_string(data_len) +
                          " bytes, expected " + std::to_string(expect));
    const uint8_t* p = r.bytes(data_len);
    st.raw.assign(p, p + data_len);
    if (r.offset() - record_start != record_len + 8)
        throw FormatError("tensor '" + st.name + "': record length mismatch");
    return st;
}

void write_header(Writer& w, ArtifactKind kind, DType precision) {
    w.bytes(kArtifactMagic, 4);
    w.u16(kArtifactVersion);
    w.u8(static_cast<uint8_t>(kind));
    w.u8(static_cast<uint8_t>(precision));
}

ArtifactKind read_header(Reader& r, DType* precision) {
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, kArtifactMagic, 4) != 0)
        throw FormatError("bad magic at offset 0 (not an EDGN artifact)");
    const uint16_t version = r.u16();
    if (version != kArtifactVersion)
        throw FormatError("unsupported artifact version " + std::to_string(version) +
                          " at offset 4");
    const uint8_t kind = r.u8();
    if (kind > 1) throw FormatError("unknown artifact kind " + std::to_string(kind) + " at offset 6");
    const uint8_t prec = r.u8();
    if (prec > static_cast<uint8_t>(DType::I8))
        throw FormatError("unknown precision tag " + std::to_string(prec) + " at offset 7");
    if (precision) *precision = static_cast<DType>(prec);
    return static_cast<ArtifactKind>(kind);
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    Writer w(path);
    write_header(w, ArtifactKind::Checkpoint, DType::F32);
    write_config(w, graph_config(ckpt.graph));
    w.u64(static_cast<uint64_t>(ckpt.step));
    w.u32(static_cast<uint32_t>(ckpt.epoch));
    w.i32(ckpt.best_epoch);
    w.f32(ckpt.best_val_loss);

    std::vector<StoredTensor> records;
    size_t idx = 0;
    for_each_param(ckpt.graph, [&](const std::string& name, const Tensor& t) {
        records.push_back(StoredTensor::from_f32(name, t, DType::F32));
        records.push_back(StoredTensor::from_f32(name + ".m", ckpt.m[idx], DType::F32));
        records.push_back(StoredTensor::from_f32(name + ".v", ckpt.v[idx], DType::F32));
        ++idx;
    });
    w.u32(static_cast<uint32_t>(records.size()));
    for (const auto& rec : records) write_tensor_record(w, rec);
    w.commit();
}

Checkpoint load_checkpoint(const fs::path& path) {
    Reader r(slurp(path));
    if (read_header(r, nullptr) != ArtifactKind::Checkpoint)
        throw FormatError(path.string() + " is not a checkpoint artifact");
    const ModelConfig cfg = read_config(r);

    Checkpoint ckpt;
    ckpt.graph = graph_from_config<float>(cfg);
    ckpt.step = static_cast<int64_t>(r.u64());
    ckpt.epoch = static_cast<int32_t>(r.u32());
    ckpt.best_epoch = r.i32();
    ckpt.best_val_loss = r.f32();

    const uint32_t n_tensors = r.u32();
    std::map<std::string, StoredTensor> by_name;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        StoredTensor st = read_tensor_record(r);
        const std::string name = st.name;
        if (!by_name.emplace(name, std::move(st)).second)
            throw FormatError("duplicate tensor record '" + name + "'");
    }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes at offset " + std::to_string(r.offset()));

    auto take = [&](const std::string& name, const Shape& want) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("missing tensor record '" + name + "'");
        if (!(it->second.shape == want))
            throw FormatError("tensor '" + name + "' shape " + it->second.shape.str() +
                              " does not match the architecture (" + want.str() + ")");
        Tensor t = it->second.to_f32();
        by_name.erase(it);
        return t;
    };

    for_each_param(ckpt.graph, [&](const std::string& name, Tensor& t) {
        const Shape want = t.shape();
        t = take(name, want);
        ckpt.m.push_back(take(name + ".m", want));
        ckpt.v.push_back(take(name + ".v", want));
    });
    if (!by_name.empty())
        throw FormatError("unexpected tensor record '" + by_name.begin()->first + "'");
    return ckpt;
}

void save_deployed(const DeployedModel& model, const fs::path& path) {
    Writer w(path);
    write_header(w, ArtifactKind::Deployed, model.precision);
    write_config(w, model.config);
    w.u32(static_cast<uint32_t>(model.params.size()));
    for (const auto& rec : model.params) write_tensor_record(w, rec);
    w.commit();
}

DeployedModel load_deployed(const fs::path& path) {
    Reader r(slurp(path));
    DeployedModel model;
    if (read_header(r, &model.precision) != ArtifactKind::Deployed)
        throw FormatError(path.string() + " is not a deployed-model artifact");
    model.config = read_config(r);
    const uint32_t n_tensors = r.u32();
    for (uint32_t i = 0; i < n_tensors; ++i) model.params.push_back(read_tensor_record(r));
    if (r.remaining() != 0)
        throw FormatError("trailing bytes at offset " + std::to_string(r.offset()));
    model.to_graph(); // validates names, order and shapes against the config
    return model;
}

ArtifactKind peek_artifact_kind(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> head(8);
    in.read(reinterpret_cast<char*>(head.data()), 8);
    if (in.gcount() != 8) throw FormatError("truncated artifact: header needs 8 bytes");
    Reader r(std::move(head));
    return read_header(r, nullptr);
}

} // namespace edgenet
