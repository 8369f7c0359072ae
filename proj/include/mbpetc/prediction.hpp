#pragma once

// Sampled-data prediction maps xhat+ = f_p(xhat) run at the actuator (and
// mirrored at the sensor) between transmissions.
//
// Lookup tables interpolate multilinearly, so they are continuous but only
// piecewise smooth. Tests that lean on smoothness of f_p use the Euler or
// Runge-Kutta kinds.

#include "mbpetc/dynamics.hpp"
#include "mbpetc/integrate.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <variant>

namespace mbpetc {

enum class PredictionKind { ZOH, ScaledEuler, RungeKutta4, LookupTable, ReferenceExact };

inline std::string to_string(PredictionKind k) {
    switch (k) {
        case PredictionKind::ZOH: return "zoh";
        case PredictionKind::ScaledEuler: return "euler";
        case PredictionKind::RungeKutta4: return "rk4";
        case PredictionKind::LookupTable: return "table";
        case PredictionKind::ReferenceExact: return "reference";
    }
    return "?";
}

inline PredictionKind parse_prediction_kind(const std::string& s) {
    if (s == "zoh") return PredictionKind::ZOH;
    if (s == "euler") return PredictionKind::ScaledEuler;
    if (s == "rk4") return PredictionKind::RungeKutta4;
    if (s == "table") return PredictionKind::LookupTable;
    if (s == "reference") return PredictionKind::ReferenceExact;
    throw InputError("unknown prediction kind '" + s + "' (expected zoh, euler, rk4, table, reference)");
}

/// Node values of a multilinear interpolant on a uniform tensor grid.
/// Axis a has nodes lower[a] + i * spacing[a], i = 0 .. counts[a]-1.
/// Values are stored node-major (last axis fastest), state_dim values per node.
struct LookupGrid {
    Vector lower;
    Vector spacing;
    std::vector<std::uint64_t> counts;
    std::vector<double> values;

    Eigen::Index dim() const { return lower.size(); }

    Vector upper() const {
        Vector u = lower;
        for (Eigen::Index a = 0; a < dim(); ++a) u[a] += spacing[a] * static_cast<double>(counts[a] - 1);
        return u;
    }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (auto c : counts) n *= c;
        return n;
    }

    std::size_t flat_index(const std::vector<std::uint64_t>& idx) const {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < counts.size(); ++a) flat = flat * counts[a] + idx[a];
        return flat;
    }

    Vector node(std::size_t flat) const {
        Vector x(dim());
        for (Eigen::Index a = dim() - 1; a >= 0; --a) {
            const auto i = flat % counts[a];
            flat /= counts[a];
            x[a] = lower[a] + spacing[a] * static_cast<double>(i);
        }
        return x;
    }

    Vector interpolate(const Vector& x) const {
        const Eigen::Index n = dim();
        require_dim(x, n, "lookup table query");
        std::vector<std::uint64_t> base(n);
        std::vector<double> frac(n);
        const Vector hi = upper();
        for (Eigen::Index a = 0; a < n; ++a) {
            if (!(x[a] >= lower[a] && x[a] <= hi[a])) {
                throw PredictionDomainError("lookup table queried outside its box at " + format_vector(x));
            }
            double s = (x[a] - lower[a]) / spacing[a];
            // snap rounding noise so queries at nodes return node values exactly
            const double r = std::round(s);
            if (std::abs(s - r) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, r)) s = r;
            auto i = static_cast<std::uint64_t>(std::floor(s));
            if (i >= counts[a] - 1) i = counts[a] - 2;
            base[a] = i;
            frac[a] = s - static_cast<double>(i);
        }
        Vector out = Vector::Zero(n);
        std::vector<std::uint64_t> idx(n);
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            double w = 1.0;
            for (Eigen::Index a = 0; a < n; ++a) {
                const bool up = (corner >> a) & 1u;
                idx[a] = base[a] + (up ? 1 : 0);
                w *= up ? frac[a] : 1.0 - frac[a];
            }
            if (w == 0.0) continue;
            const std::size_t flat = flat_index(idx);
            out += w * Eigen::Map<const Vector>(values.data() + flat * n, n);
        }
        return out;
    }
};

struct ZohParams {};
struct ScaledEulerParams {
    double scale = 1.0;
};
struct RungeKutta4Params {};
struct ReferenceExactParams {
    std::size_t substeps = 100;
};
struct LookupTableParams {
    std::shared_ptr<const LookupGrid> grid;
};

using PredictionParams =
    std::variant<ZohParams, ScaledEulerParams, RungeKutta4Params, LookupTableParams, ReferenceExactParams>;

/// One-step map f_p over a sampling period `step`. Immutable; predict() is
/// pure and reentrant.
class PredictionModel {
public:
    PredictionModel(ModelPtr model, double step, PredictionParams params)
        : model_(std::move(model)), step_(step), params_(std::move(params)) {
        if (!model_) throw InputError("PredictionModel: null system model");
        if (!(step_ > 0.0) || !std::isfinite(step_)) throw InputError("PredictionModel: step must be positive");
        if (const auto* r = std::get_if<ReferenceExactParams>(&params_); r && r->substeps == 0) {
            throw InputError("PredictionModel: reference substeps must be positive");
        }
        if (const auto* t = std::get_if<LookupTableParams>(&params_)) {
            if (!t->grid || t->grid->dim() != model_->state_dim) {
                throw InputError("PredictionModel: lookup table dimension mismatch");
            }
        }
    }

    static PredictionModel zoh(ModelPtr m, double h) { return {std::move(m), h, ZohParams{}}; }
    static PredictionModel scaled_euler(ModelPtr m, double h, double scale) {
        return {std::move(m), h, ScaledEulerParams{scale}};
    }
    static PredictionModel rk4(ModelPtr m, double h) { return {std::move(m), h, RungeKutta4Params{}}; }
    static PredictionModel reference(ModelPtr m, double h, std::size_t substeps = 100) {
        return {std::move(m), h, ReferenceExactParams{substeps}};
    }

    PredictionKind kind() const {
        switch (params_.index()) {
            case 0: return PredictionKind::ZOH;
            case 1: return PredictionKind::ScaledEuler;
            case 2: return PredictionKind::RungeKutta4;
            case 3: return PredictionKind::LookupTable;
            default: return PredictionKind::ReferenceExact;
        }
    }

    double step() const { return step_; }
    const SystemModel& system() const { return *model_; }
    const ModelPtr& system_ptr() const { return model_; }
    const PredictionParams& params() const { return params_; }

    std::string describe() const {
        std::string s = to_string(kind());
        if (const auto* e = std::get_if<ScaledEulerParams>(&params_)) s += "(scale=" + format_short(e->scale) + ")";
        if (const auto* r = std::get_if<ReferenceExactParams>(&params_)) {
            s += "(substeps=" + std::to_string(r->substeps) + ")";
        }
        return s;
    }

    Vector predict(const Vector& xhat) const {
        require_dim(xhat, model_->state_dim, "predict");
        if (!xhat.allFinite()) throw InputError("predict: non-finite state");
        const SystemModel& m = *model_;
        return std::visit(
            [&](const auto& p) -> Vector {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, ZohParams>) {
                    return xhat;
                } else if constexpr (std::is_same_v<P, ScaledEulerParams>) {
                    return xhat + p.scale * step_ * m.f(xhat, m.kappa(xhat));
                } else if constexpr (std::is_same_v<P, RungeKutta4Params>) {
                    return integrate_closed_loop(m, xhat, step_, 1);
                } else if constexpr (std::is_same_v<P, ReferenceExactParams>) {
                    return integrate_closed_loop(m, xhat, step_, p.substeps);
                } else {
                    return p.grid->interpolate(xhat);
                }
            },
            params_);
    }

private:
    static std::string format_short(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return buf;
    }

    ModelPtr model_;
    double step_;
    PredictionParams params_;
};

/// Tabulates the one-step image of `reference` on a grid covering the
/// level-set box inflated by 10%. With at least 3 nodes per axis the grid is
/// shifted so that the origin is a node, and that node stores exactly 0.
inline PredictionModel build_lookup_table(const SystemModel& model, const LevelSetSpec& ls,
                                          std::size_t points_per_axis, const PredictionModel& reference) {
    validate(ls);
    if (points_per_axis < 2) throw InputError("build_lookup_table: points_per_axis must be at least 2");
    if (reference.kind() != PredictionKind::ReferenceExact && reference.kind() != PredictionKind::RungeKutta4) {
        throw InputError("build_lookup_table: reference must be a reference or rk4 prediction");
    }
    const Box box = level_set_box(model, ls.c).inflated(1.1);
    const Eigen::Index n = model.state_dim;
    auto grid = std::make_shared<LookupGrid>();
    grid->lower.resize(n);
    grid->spacing.resize(n);
    grid->counts.assign(n, points_per_axis);
    const auto last = static_cast<double>(points_per_axis - 1);
    for (Eigen::Index a = 0; a < n; ++a) {
        const double lo = box.lower[a], hi = box.upper[a];
        if (points_per_axis >= 3 && lo < 0.0 && hi > 0.0) {
            // node j0 sits on the origin; spacing wide enough for both sides
            auto j0 = static_cast<std::size_t>(std::lround(-lo / (hi - lo) * last));
            j0 = std::clamp<std::size_t>(j0, 1, points_per_axis - 2);
            const double d = std::max(-lo / static_cast<double>(j0),
                                      hi / static_cast<double>(points_per_axis - 1 - j0));
            grid->spacing[a] = d;
            grid->lower[a] = -d * static_cast<double>(j0);
        } else {
            grid->spacing[a] = (hi - lo) / last;
            grid->lower[a] = lo;
        }
    }
    const std::size_t nodes = grid->node_count();
    grid->values.resize(nodes * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < nodes; ++i) {
        const Vector x = grid->node(i);
        Vector y = x.isZero(0.0) ? Vector::Zero(n) : reference.predict(x);
        std::copy(y.data(), y.data() + n, grid->values.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return PredictionModel(reference.system_ptr(), reference.step(), LookupTableParams{std::move(grid)});
}

// ---------------------------------------------------------------------------
// Binary table file (all fields little-endian):
//   magic    8 bytes  "MBPETCLT"
//   version  u32      1
//   dim      u32
//   step     f64      sampling period the table was built for
//   per axis: lower f64, spacing f64, count u64
//   values   f64 * (prod(count) * dim), node-major, last axis fastest
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kTableMagic{'M', 'B', 'P', 'E', 'T', 'C', 'L', 'T'};
inline constexpr std::uint32_t kTableVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(value);
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class T>
T get_le(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw InputError("lookup table file truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void write_lookup_table(std::ostream& out, const PredictionModel& pm) {
    const auto* t = std::get_if<LookupTableParams>(&pm.params());
    if (!t) throw InputError("write_lookup_table: prediction is not a lookup table");
    const LookupGrid& g = *t->grid;
    out.write(kTableMagic.data(), kTableMagic.size());
    detail::put_le<std::uint32_t>(out, kTableVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.dim()));
    detail::put_le<double>(out, pm.step());
    for (Eigen::Index a = 0; a < g.dim(); ++a) {
        detail::put_le<double>(out, g.lower[a]);
        detail::put_le<double>(out, g.spacing[a]);
        detail::put_le<std::uint64_t>(out, g.counts[a]);
    }
    for (double v : g.values) detail::put_le<double>(out, v);
}

inline PredictionModel read_lookup_table(std::istream& in, ModelPtr model) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kTableMagic) {
        throw InputError("lookup table file: bad magic");
    }
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != kTableVersion) throw InputError("lookup table file: unsupported version " + std::to_string(version));
    const auto dim = detail::get_le<std::uint32_t>(in);
    if (!model || dim != model->state_dim) throw InputError("lookup table file: dimension mismatch");
    const double step = detail::get_le<double>(in);
    auto grid = std::make_shared<LookupGrid>();
    grid->lower.resize(dim);
    grid->spacing.resize(dim);
    grid->counts.resize(dim);
    for (std::uint32_t a = 0; a < dim; ++a) {
        grid->lower[a] = detail::get_le<double>(in);
        grid->spacing[a] = detail::get_le<double>(in);
        grid->counts[a] = detail::get_le<std::uint64_t>(in);
        if (grid->counts[a] < 2 || !(grid->spacing[a] > 0.0)) throw InputError("lookup table file: bad axis");
    }
    grid->values.resize(grid->node_count() * dim);
    for (double& v : grid->values) v = detail::get_le<double>(in);
    return PredictionModel(std::move(model), step, LookupTableParams{std::move(grid)});
}

inline void save_lookup_table(const std::string& path, const PredictionModel& pm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    write_lookup_table(out, pm);
}

inline PredictionModel load_lookup_table(const std::string& path, ModelPtr model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_lookup_table(in, std::move(model));
}

}  // namespace mbpetc
