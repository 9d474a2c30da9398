#pragma once

#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/fv_solver.hpp"
#include "mechanotaxis/signal.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mechanotaxis {

/// Flat `key = value` settings with dotted keys. Order is kept sorted so the
/// echo written to manifests is stable.
using Settings = std::map<std::string, std::string>;

/// Every accepted key with its default value ("" = unset).
inline const Settings& default_settings() {
    static const Settings d = {
        {"name", ""},
        {"preset", ""},
        {"grid.L", "1"},
        {"grid.cells", "0"},
        {"time.dt", "0"},
        {"time.t_end", "1"},
        {"output.snapshot_every", "0"},
        {"output.snapshot_count", "20"},
        {"output.diagnostic_every", "0"},
        {"output.diagnostic_count", "1000"},
        {"mobility.D", "1"},
        {"mobility.alpha", "1"},
        {"law.kind", "rational"},
        {"law.p", "2"},
        {"law.q", "2"},
        {"law.chi", "0.02"},
        {"law.delta", "0.01"},
        {"signal.Ds", "0.01"},
        {"signal.kernel", "elliptic"},
        {"signal.frozen", "none"},
        {"signal.frozen_mean", "1"},
        {"signal.frozen_amplitude", "0.5"},
        {"signal.frozen_mode", "1"},
        {"initial.kind", "cosine"},
        {"initial.mean", "1"},
        {"initial.amplitude", "0.1"},
        {"initial.mode", "1"},
        {"initial.max_mode", "8"},
        {"initial.noise", "0"},
        {"initial.seed", "1"},
        {"solver.sub_cycling", "true"},
        {"solver.max_subcycle_depth", "20"},
        {"solver.steady_tol", "0"},
        {"stability.S_star", "1"},
        {"stability.samples", "200"},
        {"stability.k_max", "0"},
        {"steady.S0", ""},
        {"steady.rho0", ""},
        {"steady.dS", "0"},
        {"steady.threshold", "1e-9"},
        {"kinetic.F", "1"},
        {"kinetic.particles", "100000"},
        {"kinetic.seed", "1"},
        {"kinetic.eps", "0.2,0.1,0.05"},
        {"kinetic.dt_factor", "0.05"},
        {"kinetic.hist_cells", "50"},
        {"kinetic.times", "0.05,0.1,0.2"},
        {"kinetic.calibrate", "true"},
        {"kinetic.calibration_eps", "0.05"},
        {"kinetic.calibration_time", "0.5"},
        {"kinetic.threads", "0"},
        {"sweep.key", ""},
        {"sweep.values", ""},
        {"sweep.command", "simulate"},
        {"sweep.threads", "0"},
    };
    return d;
}

/// Figure presets. Each encodes the caption parameters; horizons and initial
/// perturbations are project choices.
inline const std::map<std::string, Settings>& presets() {
    static const std::map<std::string, Settings> p = {
        {"fig1",
         {{"law.kind", "rational"}, {"law.p", "2"}, {"law.q", "2"}, {"signal.Ds", "0.01"}, {"time.t_end", "5"},
          {"initial.amplitude", "0.1"}, {"initial.mode", "1"}, {"sweep.key", "mobility.alpha"},
          {"sweep.values", "0,1,100"}, {"sweep.command", "simulate"}}},
        {"fig2a",
         {{"law.kind", "rational"}, {"law.p", "2"}, {"law.q", "2"}, {"mobility.alpha", "1"}, {"signal.Ds", "0.01"},
          {"time.t_end", "10"}, {"initial.amplitude", "0.1"}, {"initial.mode", "1"}, {"initial.noise", "0.01"}}},
        {"fig2b",
         {{"law.kind", "rational"}, {"law.p", "2"}, {"law.q", "2"}, {"mobility.alpha", "1"}, {"signal.Ds", "0.0025"},
          {"time.t_end", "10"}, {"initial.amplitude", "0.1"}, {"initial.mode", "1"}, {"initial.noise", "0.01"}}},
        {"fig2c",
         {{"law.kind", "rational"}, {"law.p", "2"}, {"law.q", "2"}, {"mobility.alpha", "1"},
          {"signal.Ds", "0.000625"}, {"time.t_end", "10"}, {"initial.amplitude", "0.1"}, {"initial.mode", "1"},
          {"initial.noise", "0.01"}}},
        {"fig3",
         {{"law.kind", "rational"}, {"law.p", "2"}, {"law.q", "2"}, {"mobility.alpha", "1"}, {"signal.Ds", "0.01"},
          {"time.t_end", "200"}, {"initial.amplitude", "0.1"}, {"initial.mode", "1"}, {"initial.noise", "0.01"},
          {"solver.steady_tol", "5e-10"}}},
        {"fig4",
         {{"law.kind", "sigmoid"}, {"law.chi", "0.02"}, {"law.delta", "0.01"}, {"mobility.alpha", "0"},
          {"signal.Ds", "0.001"}, {"time.t_end", "100"}, {"initial.amplitude", "0.001"}, {"initial.mode", "5"},
          {"initial.noise", "1e-5"}, {"output.snapshot_count", "200"}, {"output.diagnostic_count", "5000"}}},
        {"fig5",
         {{"law.kind", "sigmoid"}, {"law.chi", "0.012"}, {"law.delta", "0.01"}, {"mobility.alpha", "0"},
          {"signal.Ds", "0.001"}, {"time.t_end", "100"}, {"initial.kind", "multimode"},
          {"initial.amplitude", "0.001"}, {"output.snapshot_count", "200"}, {"output.diagnostic_count", "5000"}}},
    };
    return p;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses flat text: `key = value`, `#` comments, optional double quotes
/// around values. Reports every malformed line, duplicate and unknown key.
inline Settings parse_settings(std::istream& in, const std::string& origin = "<config>") {
    Settings out;
    std::vector<std::string> problems;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    const auto& known = default_settings();
    while (std::getline(in, line)) {
        ++lineno;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) {
            problems.push_back(where + ": expected 'key = value'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty()) {
            problems.push_back(where + ": missing key");
            continue;
        }
        if (!known.contains(key)) {
            problems.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        if (auto it = seen.find(key); it != seen.end()) {
            problems.push_back(where + ": duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
            continue;
        }
        seen[key] = lineno;
        out[key] = value;
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    return out;
}

inline Settings parse_settings_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_settings(in, path);
}

/// defaults <- preset <- explicit values (explicit keys win).
inline Settings resolve_settings(const Settings& user, const std::string& preset_override = "") {
    Settings s = default_settings();
    std::string preset = preset_override;
    if (preset.empty())
        if (auto it = user.find("preset"); it != user.end()) preset = it->second;
    if (!preset.empty()) {
        auto it = presets().find(preset);
        if (it == presets().end()) throw ConfigError("unknown preset '" + preset + "'");
        for (const auto& [k, v] : it->second) s[k] = v;
        s["preset"] = preset;
        s["name"] = preset;
    }
    for (const auto& [k, v] : user) {
        if (k == "preset" && !preset_override.empty()) continue;
        s[k] = v;
    }
    if (s["name"].empty()) s["name"] = "experiment";
    return s;
}

inline std::string to_config_text(const Settings& s) {
    std::string out;
    for (const auto& [k, v] : s) out += k + " = " + v + "\n";
    return out;
}

enum class ExperimentKind { simulate, stability, steady_state, kinetic, sweep };

inline ExperimentKind parse_kind(const std::string& s) {
    if (s == "simulate") return ExperimentKind::simulate;
    if (s == "stability") return ExperimentKind::stability;
    if (s == "steady-state" || s == "steady_state") return ExperimentKind::steady_state;
    if (s == "kinetic") return ExperimentKind::kinetic;
    if (s == "sweep") return ExperimentKind::sweep;
    throw ConfigError("unknown command '" + s + "'");
}

inline std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::stability: return "stability";
        case ExperimentKind::steady_state: return "steady-state";
        case ExperimentKind::kinetic: return "kinetic";
        case ExperimentKind::sweep: return "sweep";
    }
    return "?";
}

struct StabilityOptions {
    double S_star = 1.0;
    std::size_t samples = 200;
    double k_max = 0.0;
};

struct SteadyOptions {
    std::optional<double> S0;
    std::optional<double> rho0;
    double dS = 0.0;
    double threshold = 1e-9;
};

struct KineticOptions {
    double F = 1.0;
    std::size_t particles = 100000;
    std::uint64_t seed = 1;
    std::vector<double> eps;
    double dt_factor = 0.05;
    std::size_t hist_cells = 50;
    std::vector<double> times;
    bool calibrate = true;
    double calibration_eps = 0.05;
    double calibration_time = 0.5;
    unsigned threads = 0;
};

struct SweepOptions {
    std::string key;
    std::vector<std::string> values;
    ExperimentKind command = ExperimentKind::simulate;
    unsigned threads = 0;
};

struct ExperimentSpec {
    std::string name;
    std::string preset;
    ExperimentKind kind = ExperimentKind::simulate;
    MacroConfig macro;
    std::size_t snapshot_count = 20;
    std::size_t diagnostic_count = 1000;
    StabilityOptions stability;
    SteadyOptions steady;
    KineticOptions kinetic;
    SweepOptions sweep;
    Settings settings;  // fully resolved, echoed into manifests
};

namespace detail {

/// Typed reads that record a violation instead of throwing on the first one.
class Reader {
public:
    explicit Reader(const Settings& s) : s_(s) {}

    const std::string& str(const std::string& key) const { return s_.at(key); }

    double real(const std::string& key) {
        const std::string& v = s_.at(key);
        double out = 0.0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
            fail(key, "expected a real number, got '" + v + "'");
            return 0.0;
        }
        return out;
    }

    std::optional<double> optional_real(const std::string& key) {
        if (s_.at(key).empty()) return std::nullopt;
        return real(key);
    }

    long long integer(const std::string& key, long long min = 0) {
        const std::string& v = s_.at(key);
        long long out = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size()) {
            fail(key, "expected an integer, got '" + v + "'");
            return min;
        }
        if (out < min) {
            fail(key, "must be >= " + std::to_string(min));
            return min;
        }
        return out;
    }

    bool boolean(const std::string& key) {
        const std::string& v = s_.at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(key, "expected true/false, got '" + v + "'");
        return false;
    }

    std::vector<double> reals(const std::string& key) {
        std::vector<double> out;
        std::stringstream ss(s_.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            double x = 0.0;
            const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
            if (ec != std::errc{} || p != item.data() + item.size()) {
                fail(key, "bad list entry '" + item + "'");
                continue;
            }
            out.push_back(x);
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(s_.at(key));
        std::string item;
        while (std::getline(ss, item, ','))
            if (!trim(item).empty()) out.push_back(trim(item));
        return out;
    }

    void fail(const std::string& key, const std::string& msg) { problems_.push_back(key + ": " + msg); }

    void require(bool ok, const std::string& key, const std::string& msg) {
        if (!ok) fail(key, msg);
    }

    const std::vector<std::string>& problems() const { return problems_; }

private:
    const Settings& s_;
    std::vector<std::string> problems_;
};

inline std::vector<double> read_last_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find_last_of(',');
        const std::string cell = trim(comma == std::string::npos ? line : line.substr(comma + 1));
        double x = 0.0;
        const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (ec != std::errc{} || p != cell.data() + cell.size()) {
            if (out.empty()) continue;  // header
            throw IoError("'" + path + "': bad number '" + cell + "'");
        }
        out.push_back(x);
    }
    return out;
}

}  // namespace detail

/// Builds a validated spec from resolved settings; every violation is listed
/// in a single ConfigError.
inline ExperimentSpec build_spec(const Settings& resolved, ExperimentKind kind) {
    detail::Reader r(resolved);
    ExperimentSpec spec;
    spec.kind = kind;
    spec.settings = resolved;
    spec.name = r.str("name");
    spec.preset = r.str("preset");

    MacroConfig& m = spec.macro;
    m.L = r.real("grid.L");
    r.require(m.L > 0.0, "grid.L", "must be > 0");
    m.cells = static_cast<std::size_t>(r.integer("grid.cells"));
    r.require(m.cells == 0 || m.cells >= 4, "grid.cells", "must be 0 (default spacing) or >= 4");
    m.dt = r.real("time.dt");
    r.require(m.dt >= 0.0, "time.dt", "must be >= 0 (0 selects dx^2/5)");
    m.t_end = r.real("time.t_end");
    r.require(m.t_end >= 0.0, "time.t_end", "must be >= 0");
    m.snapshot_every = static_cast<std::size_t>(r.integer("output.snapshot_every"));
    m.diagnostic_every = static_cast<std::size_t>(r.integer("output.diagnostic_every"));
    spec.snapshot_count = static_cast<std::size_t>(r.integer("output.snapshot_count", 1));
    spec.diagnostic_count = static_cast<std::size_t>(r.integer("output.diagnostic_count", 1));

    m.mobility.D = r.real("mobility.D");
    r.require(m.mobility.D > 0.0, "mobility.D", "must be > 0");
    m.mobility.alpha = r.real("mobility.alpha");
    r.require(m.mobility.alpha >= 0.0, "mobility.alpha", "must be >= 0");

    const std::string& law = r.str("law.kind");
    try {
        if (law == "rational") {
            m.law = VelocityLaw::rational(r.real("law.p"), r.real("law.q"));
        } else if (law == "sigmoid") {
            m.law = VelocityLaw::sigmoid(r.real("law.chi"), r.real("law.delta"));
        } else {
            r.fail("law.kind", "expected 'rational' or 'sigmoid', got '" + law + "'");
        }
    } catch (const DomainError& e) {
        r.fail("law", e.what());
    }

    const double Ds = r.real("signal.Ds");
    r.require(Ds > 0.0, "signal.Ds", "must be > 0");
    m.signal = SignalParams{Ds > 0.0 ? Ds : 1.0};
    const double dx_default = std::sqrt(Ds > 0.0 ? Ds : 1.0) / 10.0;
    const std::size_t cells =
        m.cells ? m.cells : static_cast<std::size_t>(std::max<long long>(4, std::llround((m.L > 0 ? m.L : 1.0) / dx_default)));
    const Grid grid(m.L > 0 ? m.L : 1.0, cells);
    m.cells = cells;

    const std::string& frozen = r.str("signal.frozen");
    const std::string& kernel = r.str("signal.kernel");
    if (frozen != "none") {
        if (frozen == "cosine") {
            const double mean = r.real("signal.frozen_mean"), amp = r.real("signal.frozen_amplitude");
            const auto mode = r.integer("signal.frozen_mode");
            r.require(mean - std::abs(amp) > 0.0, "signal.frozen_amplitude", "frozen signal must stay positive");
            m.signal = FrozenSignal{Field::sample(grid, [&](double x) {
                return mean + amp * std::cos(2.0 * std::numbers::pi * static_cast<double>(mode) * x / grid.length());
            })};
        } else if (frozen.starts_with("file:")) {
            try {
                m.signal = FrozenSignal{Field(grid, detail::read_last_column(frozen.substr(5)))};
            } catch (const Error& e) {
                r.fail("signal.frozen", e.what());
            }
        } else {
            r.fail("signal.frozen", "expected 'none', 'cosine' or 'file:<path>'");
        }
    } else if (kernel.starts_with("file:")) {
        try {
            m.signal = ConvolutionKernel::from_csv(grid, kernel.substr(5));
        } catch (const Error& e) {
            r.fail("signal.kernel", e.what());
        }
    } else if (kernel != "elliptic") {
        r.fail("signal.kernel", "expected 'elliptic' or 'file:<path>'");
    }

    InitialCondition& ic = m.initial;
    const std::string& ik = r.str("initial.kind");
    ic.mean = r.real("initial.mean");
    r.require(ic.mean > 0.0, "initial.mean", "must be > 0");
    ic.amplitude = r.real("initial.amplitude");
    ic.mode = static_cast<int>(r.integer("initial.mode"));
    ic.max_mode = static_cast<int>(r.integer("initial.max_mode", 1));
    ic.noise = r.real("initial.noise");
    r.require(ic.noise >= 0.0, "initial.noise", "must be >= 0");
    ic.seed = static_cast<std::uint64_t>(r.integer("initial.seed"));
    if (ik == "cosine") {
        ic.kind = InitialCondition::Kind::cosine;
    } else if (ik == "multimode") {
        ic.kind = InitialCondition::Kind::multimode;
    } else if (ik.starts_with("file:")) {
        ic.kind = InitialCondition::Kind::profile;
        try {
            ic.values = detail::read_last_column(ik.substr(5));
            if (ic.values.size() != cells)
                r.fail("initial.kind", "profile has " + std::to_string(ic.values.size()) + " values, grid has " +
                                           std::to_string(cells));
        } catch (const Error& e) {
            r.fail("initial.kind", e.what());
        }
    } else {
        r.fail("initial.kind", "expected 'cosine', 'multimode' or 'file:<path>'");
    }

    m.sub_cycling = r.boolean("solver.sub_cycling");
    m.max_subcycle_depth = static_cast<int>(r.integer("solver.max_subcycle_depth"));
    m.steady_tol = r.real("solver.steady_tol");
    r.require(m.steady_tol >= 0.0, "solver.steady_tol", "must be >= 0");

    spec.stability.S_star = r.real("stability.S_star");
    r.require(spec.stability.S_star > 0.0, "stability.S_star", "must be > 0");
    spec.stability.samples = static_cast<std::size_t>(r.integer("stability.samples", 1));
    spec.stability.k_max = r.real("stability.k_max");

    spec.steady.S0 = r.optional_real("steady.S0");
    spec.steady.rho0 = r.optional_real("steady.rho0");
    r.require(spec.steady.S0.has_value() == spec.steady.rho0.has_value(), "steady.S0",
              "steady.S0 and steady.rho0 must be given together");
    spec.steady.dS = r.real("steady.dS");
    spec.steady.threshold = r.real("steady.threshold");
    r.require(spec.steady.threshold > 0.0, "steady.threshold", "must be > 0");

    KineticOptions& k = spec.kinetic;
    k.F = r.real("kinetic.F");
    r.require(k.F > 0.0, "kinetic.F", "must be > 0");
    k.particles = static_cast<std::size_t>(r.integer("kinetic.particles", 1));
    k.seed = static_cast<std::uint64_t>(r.integer("kinetic.seed"));
    k.eps = r.reals("kinetic.eps");
    for (double e : k.eps) r.require(e > 0.0, "kinetic.eps", "entries must be > 0");
    k.dt_factor = r.real("kinetic.dt_factor");
    r.require(k.dt_factor > 0.0, "kinetic.dt_factor", "must be > 0");
    k.hist_cells = static_cast<std::size_t>(r.integer("kinetic.hist_cells", 4));
    k.times = r.reals("kinetic.times");
    for (std::size_t i = 0; i < k.times.size(); ++i)
        r.require(k.times[i] > 0.0 && (i == 0 || k.times[i] > k.times[i - 1]), "kinetic.times",
                  "must be positive and increasing");
    k.calibrate = r.boolean("kinetic.calibrate");
    k.calibration_eps = r.real("kinetic.calibration_eps");
    k.calibration_time = r.real("kinetic.calibration_time");
    k.threads = static_cast<unsigned>(r.integer("kinetic.threads"));

    spec.sweep.key = r.str("sweep.key");
    spec.sweep.values = r.strings("sweep.values");
    spec.sweep.threads = static_cast<unsigned>(r.integer("sweep.threads"));
    try {
        spec.sweep.command = parse_kind(r.str("sweep.command"));
    } catch (const ConfigError& e) {
        r.fail("sweep.command", e.what());
    }

    if (kind == ExperimentKind::kinetic) {
        r.require(frozen != "none", "signal.frozen", "the kinetic command needs a frozen signal");
        r.require(!k.eps.empty(), "kinetic.eps", "needs at least one value");
        r.require(!k.times.empty(), "kinetic.times", "needs at least one value");
        r.require(m.mobility.alpha > 0.0, "mobility.alpha", "the kinetic scaling m = alpha*eps needs alpha > 0");
        r.require(cells % std::max<std::size_t>(k.hist_cells, 1) == 0, "kinetic.hist_cells",
                  "must divide the grid cell count " + std::to_string(cells));
    }
    if (kind == ExperimentKind::sweep) {
        r.require(!spec.sweep.key.empty(), "sweep.key", "is required for a sweep");
        r.require(!spec.sweep.values.empty(), "sweep.values", "the parameter grid is empty");
        r.require(spec.sweep.key.empty() || default_settings().contains(spec.sweep.key), "sweep.key",
                  "unknown key '" + spec.sweep.key + "'");
        r.require(spec.sweep.command != ExperimentKind::sweep, "sweep.command", "sweeps cannot nest");
    }

    if (!r.problems().empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : r.problems()) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    return spec;
}

/// Parses a config file (optional) and a preset into a validated spec.
inline ExperimentSpec parse_config(const std::string& path, ExperimentKind kind, const std::string& preset = "") {
    const Settings user = path.empty() ? Settings{} : parse_settings_file(path);
    return build_spec(resolve_settings(user, preset), kind);
}

}  // namespace mechanotaxis
