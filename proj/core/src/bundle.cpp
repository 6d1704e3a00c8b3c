#include "keec/bundle.hpp"

#include <cstdint>

#include "keec/errors.hpp"
#include "keec/io.hpp"

namespace keec {

namespace {

constexpr char kMagic[9] = "KEECBND1";
constexpr std::uint32_t kVersion = 1;

void write_mlp(io::Writer& w, const MlpParams& net) {
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& layer : net.layers) {
        w.u32(static_cast<std::uint32_t>(layer.W.rows()));
        w.u32(static_cast<std::uint32_t>(layer.W.cols()));
        w.u32(static_cast<std::uint32_t>(layer.act));
        w.matrix(layer.W);
        w.vector(layer.b);
    }
}

MlpParams read_mlp(io::Reader& r, const std::string& path) {
    MlpParams net;
    const std::uint32_t count = r.u32();
    if (count > 64) throw IoError("bundle '" + path + "': implausible layer count");
    net.layers.resize(count);
    for (Layer& layer : net.layers) {
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        const std::uint32_t act = r.u32();
        if (act > static_cast<std::uint32_t>(Act::none))
            throw IoError("bundle '" + path + "': bad activation tag");
        layer.act = static_cast<Act>(act);
        layer.W = r.matrix(rows, cols);
        layer.b = r.vector(rows);
    }
    return net;
}

}  // namespace

void save_bundle(const std::string& path, const Bundle& b) {
    io::Writer w;
    w.raw(kMagic, 8);
    w.u32(kVersion);
    w.str(b.env_name);

    w.u32(static_cast<std::uint32_t>(b.model.n));
    w.f64(b.model.lambda_met);
    w.u32(static_cast<std::uint32_t>(b.model.norm_mu.size()));
    w.vector(b.model.norm_mu);
    w.vector(b.model.norm_sigma);
    write_mlp(w, b.model.encoder);
    write_mlp(w, b.model.decoder);

    w.u32(static_cast<std::uint32_t>(b.ops.n));
    w.u32(static_cast<std::uint32_t>(b.ops.d));
    w.f64(b.ops.dt);
    w.matrix(b.ops.P);
    w.matrix(b.ops.U);

    w.u32(b.has_value ? 1 : 0);
    if (b.has_value) {
        w.u32(b.vm.variant == ValueVariant::quadratic ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(b.vm.n));
        w.f64(b.vm.gamma);
        w.f64(b.vm.out_scale);
        w.f64(b.vm.bias);
        w.u32(static_cast<std::uint32_t>(b.vm.z_star.size()));  // empty for mlp
        w.vector(b.vm.z_star);
        write_mlp(w, b.vm.net);
    }
    w.commit(path);
}

Bundle load_bundle(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("bundle '" + path + "': unsupported version " + std::to_string(version));

    Bundle b;
    b.env_name = r.str();

    b.model.n = static_cast<int>(r.u32());
    b.model.lambda_met = r.f64();
    const std::uint32_t m = r.u32();
    b.model.norm_mu = r.vector(m);
    b.model.norm_sigma = r.vector(m);
    b.model.encoder = read_mlp(r, path);
    b.model.decoder = read_mlp(r, path);

    b.ops.n = static_cast<int>(r.u32());
    b.ops.d = static_cast<int>(r.u32());
    b.ops.dt = r.f64();
    b.ops.P = r.matrix(b.ops.n, b.ops.n);
    b.ops.U = r.matrix(b.ops.n, static_cast<Eigen::Index>(b.ops.n) * b.ops.d);
    if (b.ops.dt <= 0.0) throw IoError("bundle '" + path + "': nonpositive dt");
    b.ops.refresh();

    b.has_value = r.u32() != 0;
    if (b.has_value) {
        b.vm.variant = r.u32() != 0 ? ValueVariant::quadratic : ValueVariant::mlp;
        b.vm.n = static_cast<int>(r.u32());
        b.vm.gamma = r.f64();
        b.vm.out_scale = r.f64();
        b.vm.bias = r.f64();
        b.vm.z_star = r.vector(static_cast<Eigen::Index>(r.u32()));
        b.vm.net = read_mlp(r, path);
    }
    if (!r.at_end()) throw IoError("bundle '" + path + "': trailing bytes");
    return b;
}

Bundle load_bundle_with_value(const std::string& path) {
    Bundle b = load_bundle(path);
    if (!b.has_value)
        throw StateError("bundle '" + path + "' has no value head; run train-value first");
    return b;
}

}  // namespace keec
