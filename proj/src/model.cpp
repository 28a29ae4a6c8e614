#include "edgenet/model.hpp"

#include <cstring>

namespace edgenet {

StoredTensor StoredTensor::from_f32(std::string name, const Tensor& t, DType target) {
    StoredTensor st;
    st.name = std::move(name);
    st.shape = t.shape();
    st.dtype = target;
    const size_t n = static_cast<size_t>(t.numel());
    switch (target) {
        case DType::F32:
            st.raw.resize(n * 4);
            std::memcpy(st.raw.data(), t.data(), st.raw.size());
            return st;
        case DType::F16: {
            st.raw.resize(n * 2);
            uint16_t* out = reinterpret_cast<uint16_t*>(st.raw.data());
            for (size_t i = 0; i < n; ++i) out[i] = f32_to_f16(t.data()[i]);
            return st;
        }
        case DType::I8:
            throw ConfigError("i8 conversion requires QuantParams; use quantize_tensor");
        case DType::F64: {
            st.raw.resize(n * 8);
            double* out = reinterpret_cast<double*>(st.raw.data());
            for (size_t i = 0; i < n; ++i) out[i] = static_cast<double>(t.data()[i]);
            return st;
        }
    }
    throw Error("unknown dtype");
}

Tensor StoredTensor::to_f32() const {
    const size_t n = static_cast<size_t>(shape.numel());
    if (raw.size() != n * dtype_size(dtype))
        throw FormatError("tensor '" + name + "' payload is " + std::to_string(raw.size()) +
                          " bytes, expected " + std::to_string(n * dtype_size(dtype)));
    Tensor t(shape);
    switch (dtype) {
        case DType::F32:
            std::memcpy(t.data(), raw.data(), raw.size());
            return t;
        case DType::F16: {
            const uint16_t* in = reinterpret_cast<const uint16_t*>(raw.data());
            for (size_t i = 0; i < n; ++i) t.data()[i] = f16_to_f32(in[i]);
            return t;
        }
        case DType::I8: {
            if (!quant) throw FormatError("i8 tensor '" + name + "' is missing QuantParams");
            const int8_t* in = reinterpret_cast<const int8_t*>(raw.data());
            for (size_t i = 0; i < n; ++i)
                t.data()[i] =
                    quant->scale * static_cast<float>(static_cast<int32_t>(in[i]) - quant->zero_point);
            return t;
        }
        case DType::F64: {
            const double* in = reinterpret_cast<const double*>(raw.data());
            for (size_t i = 0; i < n; ++i) t.data()[i] = static_cast<float>(in[i]);
            return t;
        }
    }
    throw Error("unknown dtype");
}

ModelGraph DeployedModel::to_graph() const {
    ModelGraph g = graph_from_config<float>(config);
    size_t idx = 0;
    for_each_param(g, [&](const std::string& name, Tensor& t) {
        if (idx >= params.size())
            throw FormatError("deployed model is missing tensor '" + name + "'");
        const StoredTensor& st = params[idx++];
        if (st.name != name)
            throw FormatError("deployed model tensor order mismatch: expected '" + name +
                              "', found '" + st.name + "'");
        if (!(st.shape == t.shape()))
            throw FormatError("tensor '" + name + "' shape " + st.shape.str() +
                              " does not match the architecture (" + t.shape().str() + ")");
        t = st.to_f32();
    });
    if (idx != params.size()) throw FormatError("deployed model has extra tensor records");
    return g;
}

} // namespace edgenet
