#pragma once
//
// h2 : oracle registry
//
// Desk-scale Hessian operators by name: surface<N> (minimal surface, exact
// sparse Hessian), diff1d-<n> (1D diffusion misfit + TV Hessian via
// adjoints), advdiff-<G>[-k<kappa>][-obs<N>] (advection-diffusion source
// inversion misfit Hessian). Parameters can be overridden with key = value
// config entries.
//

#include <map>
#include <optional>

#include "h2/block_tree.hpp"
#include "h2/oracles/advdiff2d.hpp"
#include "h2/oracles/diffusion1d.hpp"
#include "h2/oracles/minimal_surface.hpp"

namespace h2::oracles {

using Config = std::map<std::string, std::string>;

inline void parse_config_line(const std::string& line, Config& cfg) {
    std::string s = line;
    if (auto hash = s.find('#'); hash != std::string::npos) s = s.substr(0, hash);
    const auto eq = s.find('=');
    if (eq == std::string::npos) return;
    auto trim = [](std::string t) {
        const auto a = t.find_first_not_of(" \t\r\n");
        const auto b = t.find_last_not_of(" \t\r\n");
        return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
    };
    std::string key = trim(s.substr(0, eq)), val = trim(s.substr(eq + 1));
    if (!key.empty()) cfg[key] = val;
}

inline Config read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(io_error::kind::malformed, "config: cannot open " + path);
    Config cfg;
    std::string line;
    while (std::getline(in, line)) parse_config_line(line, cfg);
    return cfg;
}

namespace detail {

inline double cfg_num(const Config& c, const std::string& key, double def) {
    auto it = c.find(key);
    return it == c.end() ? def : std::stod(it->second);
}
inline Index cfg_int(const Config& c, const std::string& key, Index def) {
    auto it = c.find(key);
    return it == c.end() ? def : Index(std::stoll(it->second));
}

} // namespace detail

struct Oracle {
    std::string name;
    std::shared_ptr<LinearOperator> op;
    PointSet points;
    Index leaf = 64;
    Admissibility mode = Admissibility::strong;
    double eta = 1.0;

    // underlying problems, when present
    std::shared_ptr<MinimalSurface> surface;
    Vector surface_state;
    std::shared_ptr<Diffusion1D> diffusion;
    std::shared_ptr<AdvDiff2D> advdiff;

    std::shared_ptr<const BlockTree> default_block_tree(std::optional<Index> leaf_override = {},
                                                        std::optional<double> eta_override = {}) const {
        auto ct = build_cluster_tree(points, leaf_override.value_or(leaf));
        return build_block_tree(ct, ct, eta_override.value_or(eta), mode);
    }
};

inline Oracle make_oracle(const std::string& name, const Config& config = {}) {
    using detail::cfg_int;
    using detail::cfg_num;
    Oracle o;
    o.name = name;

    auto starts_with = [&](const std::string& p) { return name.rfind(p, 0) == 0; };

    if (starts_with("surface")) {
        const Index g = Index(std::stoll(name.substr(7)));
        auto ms = std::make_shared<MinimalSurface>(g, cfg_num(config, "rim", 0.5));
        const int steps = int(cfg_int(config, "newton_steps", 0));
        Vector state = ms->newton_state(steps);
        o.surface = ms;
        o.surface_state = state;
        o.op = ms->hessian_operator(state);
        o.points = ms->points();
        o.leaf = cfg_int(config, "leaf", 64);
        o.mode = Admissibility::strong;
        o.eta = cfg_num(config, "eta", 1.0);
        return o;
    }

    if (starts_with("diff1d-")) {
        Diffusion1DConfig dc;
        dc.n = Index(std::stoll(name.substr(7)));
        dc.steps = cfg_int(config, "steps", dc.steps);
        dc.final_time = cfg_num(config, "T", dc.final_time);
        dc.t_p = cfg_num(config, "tp", dc.t_p);
        dc.t_0 = cfg_num(config, "t0", dc.t_0);
        dc.alpha = cfg_num(config, "alpha", dc.alpha);
        dc.source_amplitude = cfg_num(config, "amp", dc.source_amplitude);
        dc.beta = cfg_num(config, "beta", dc.beta);
        dc.pad = cfg_num(config, "pad", dc.pad);
        auto d = std::make_shared<Diffusion1D>(dc);
        o.diffusion = d;
        const bool tv = cfg_int(config, "tv", 1) != 0;
        o.op = d->hessian_operator(tv);
        o.points = d->points();
        o.leaf = cfg_int(config, "leaf", 32);
        o.mode = Admissibility::weak;
        o.eta = cfg_num(config, "eta", 1.0);
        return o;
    }

    if (starts_with("advdiff-")) {
        AdvDiff2DConfig ac;
        std::string rest = name.substr(8);
        // grid size up to the next dash; optional -k<kappa> and -obs<N>
        const auto dash = rest.find('-');
        ac.grid = Index(std::stoll(rest.substr(0, dash)));
        std::string tail = dash == std::string::npos ? "" : rest.substr(dash);
        if (const auto at = tail.find("-obs"); at != std::string::npos) {
            ac.num_observations = Index(std::stoll(tail.substr(at + 4)));
            tail = tail.substr(0, at);
        }
        if (tail.rfind("-k", 0) == 0) ac.kappa = std::stod(tail.substr(2));
        ac.kappa = cfg_num(config, "kappa", ac.kappa);
        ac.num_observations = cfg_int(config, "obs", ac.num_observations);
        ac.noise_rel = cfg_num(config, "noise", ac.noise_rel);
        ac.obs_seed = uint64_t(cfg_int(config, "obs_seed", Index(ac.obs_seed)));
        ac.reaction = cfg_num(config, "c", ac.reaction);
        auto a = std::make_shared<AdvDiff2D>(ac);
        o.advdiff = a;
        o.op = a->hessian_operator();
        o.points = a->points();
        o.leaf = cfg_int(config, "leaf", 64);
        o.mode = Admissibility::strong;
        o.eta = cfg_num(config, "eta", 1.0);
        return o;
    }

    throw std::invalid_argument("unknown oracle: " + name +
                                " (expected surface<N>, diff1d-<n>, or advdiff-<G>[-k..][-obs..])");
}

} // namespace h2::oracles
