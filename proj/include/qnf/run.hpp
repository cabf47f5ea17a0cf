#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnf/frequency.hpp"
#include "qnf/normal_form.hpp"
#include "qnf/spectra.hpp"
#include "qnf/symbol.hpp"
#include "qnf/weyl.hpp"

namespace qnf {

struct Tolerances {
    double reality = 1e-12;
    double imaginarity = 1e-12;
    double homological_rel = 1e-12;   // relative to max(1, ||V_k||_rho)
    double graded_vs_literal = 1e-12; // max atom-wise difference
    double commutator = 1e-10;
    double pt_matrix = 1e-12;
    double oracle_imag = 1e-8;
    double qnf_imag = 1e-10;
    double classical_fit_lo = 1.7;
    double classical_fit_hi = 2.3;
    double interior_stability = 1e-8;
};

struct ExtraAtom {
    IntVec q;
    int m = 0;
    Complex c;
};

struct RunConfig {
    int schema_version = 1;
    Frequency frequency;
    int qmax_check = 20;
    PotentialSpec potential;
    std::vector<ExtraAtom> extra_atoms;  // raw atoms added after symmetrization
                                         // (negative controls: breaks PT on purpose)
    int orders = 6;
    std::vector<double> hbar_list{1.0};
    std::vector<double> epsilon_list{0.05};
    int ncut = 10;
    int margin = 4;
    TruncationPolicy policy;
    std::string mode = "both";        // quantum | classical | both
    std::vector<std::string> checks;  // empty + checks_all => all
    bool checks_all = true;
    bool checks_none = false;
    int jobs = 1;
    std::vector<double> sweep_hbars{0.1, 0.05, 0.025};
    bool dump_matrices = false;
    std::string out_dir = "out";
    Tolerances tol;
};

struct Check {
    std::string name;
    double value = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string note;
};

struct ValidationReport {
    bool valid = false;
    std::vector<std::string> errors;
    std::optional<DiophantineReport> dio;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j, std::vector<std::string>& errors) {
    RunConfig c;
    auto err = [&](const std::string& path, const std::string& what) {
        errors.push_back(path + ": " + what);
    };
    try {
        c.schema_version = j.value("schema_version", 1);
        if (!j.contains("frequency")) {
            err("frequency", "missing");
        } else {
            const auto& jf = j.at("frequency");
            if (!jf.contains("omega")) {
                err("frequency.omega", "missing");
            } else if (jf.at("omega").is_string() && jf.at("omega") == "golden") {
                c.frequency = make_golden_frequency();
            } else {
                c.frequency.omega = jf.at("omega").get<std::vector<double>>();
                c.frequency.dim = int(c.frequency.omega.size());
                c.frequency.tau = jf.value("tau", double(c.frequency.dim) + 1.0);
                c.frequency.gamma = jf.value("gamma", 0.0);
            }
            if (jf.contains("tau")) c.frequency.tau = jf.at("tau").get<double>();
            if (jf.contains("gamma")) c.frequency.gamma = jf.at("gamma").get<double>();
            c.frequency.resonance_floor = jf.value("resonance_floor", 1e-12);
            c.qmax_check = jf.value("qmax_check", 20);
        }
        if (!j.contains("potential")) {
            err("potential", "missing");
        } else {
            const auto& jp = j.at("potential");
            c.potential.dim = jp.value("dim", c.frequency.dim);
            c.potential.pstep = jp.value("pstep", 1.0);
            for (const auto& jg : jp.value("generators", nlohmann::json::array())) {
                PotentialSpec::Generator g;
                g.q = jg.at("q").get<IntVec>();
                g.m = jg.at("m").get<int>();
                g.amplitude = jg.at("amplitude").get<double>();
                c.potential.generators.push_back(std::move(g));
            }
            for (const auto& ja : jp.value("extra_atoms", nlohmann::json::array())) {
                ExtraAtom a;
                a.q = ja.at("q").get<IntVec>();
                a.m = ja.at("m").get<int>();
                a.c = Complex(ja.value("re", 0.0), ja.value("im", 0.0));
                c.extra_atoms.push_back(std::move(a));
            }
        }
        c.orders = j.value("orders", 6);
        if (j.contains("hbar_list")) c.hbar_list = j.at("hbar_list").get<std::vector<double>>();
        if (j.contains("epsilon_list"))
            c.epsilon_list = j.at("epsilon_list").get<std::vector<double>>();
        if (j.contains("basis")) {
            c.ncut = j.at("basis").value("ncut", 10);
            c.margin = j.at("basis").value("margin", 4);
        }
        if (j.contains("policy")) {
            const auto& jp = j.at("policy");
            c.policy.eta = jp.value("eta", 1e-14);
            c.policy.eta_relative = jp.value("eta_relative", true);
            c.policy.qmax = jp.value("qmax", 64);
            c.policy.mmax = jp.value("mmax", 64);
            c.policy.rho = jp.value("rho", 3.0);
        }
        c.mode = j.value("mode", "both");
        if (j.contains("checks")) {
            if (j.at("checks").is_string()) {
                std::string s = j.at("checks").get<std::string>();
                c.checks_all = s == "all";
                c.checks_none = s == "none";
                if (!c.checks_all && !c.checks_none) err("checks", "must be all|none|list");
            } else {
                c.checks_all = false;
                c.checks = j.at("checks").get<std::vector<std::string>>();
            }
        }
        c.jobs = j.value("jobs", 1);
        if (j.contains("sweep_hbars"))
            c.sweep_hbars = j.at("sweep_hbars").get<std::vector<double>>();
        c.dump_matrices = j.value("dump_matrices", false);
        c.out_dir = j.value("out_dir", "out");
        if (j.contains("tolerances")) {
            const auto& jt = j.at("tolerances");
            c.tol.reality = jt.value("reality", c.tol.reality);
            c.tol.imaginarity = jt.value("imaginarity", c.tol.imaginarity);
            c.tol.homological_rel = jt.value("homological_rel", c.tol.homological_rel);
            c.tol.graded_vs_literal = jt.value("graded_vs_literal", c.tol.graded_vs_literal);
            c.tol.commutator = jt.value("commutator", c.tol.commutator);
            c.tol.pt_matrix = jt.value("pt_matrix", c.tol.pt_matrix);
            c.tol.oracle_imag = jt.value("oracle_imag", c.tol.oracle_imag);
            c.tol.qnf_imag = jt.value("qnf_imag", c.tol.qnf_imag);
            c.tol.classical_fit_lo = jt.value("classical_fit_lo", c.tol.classical_fit_lo);
            c.tol.classical_fit_hi = jt.value("classical_fit_hi", c.tol.classical_fit_hi);
            c.tol.interior_stability = jt.value("interior_stability", c.tol.interior_stability);
        }
    } catch (const nlohmann::json::exception& e) {
        err("(parse)", e.what());
    }
    return c;
}

inline ValidationReport validate_config(const RunConfig& c) {
    ValidationReport r;
    auto bad = [&](const std::string& path, const std::string& what) {
        r.errors.push_back(path + ": " + what);
    };
    if (c.frequency.dim < 1 || c.frequency.omega.empty()) bad("frequency.omega", "missing or empty");
    if (!(c.frequency.tau > c.frequency.dim)) bad("frequency.tau", "must exceed the dimension");
    if (c.frequency.gamma <= 0.0) bad("frequency.gamma", "must be positive");
    if (c.potential.dim != c.frequency.dim) bad("potential.dim", "must match frequency dimension");
    if (c.potential.pstep <= 0.0) bad("potential.pstep", "must be positive");
    for (std::size_t i = 0; i < c.potential.generators.size(); ++i) {
        const auto& g = c.potential.generators[i];
        std::string p = "potential.generators[" + std::to_string(i) + "]";
        if ((int)g.q.size() != c.potential.dim) bad(p + ".q", "wrong dimension");
        else if (detail::sup_norm(g.q) == 0) bad(p + ".q", "q=0 forbidden (oddness in x)");
    }
    for (std::size_t i = 0; i < c.extra_atoms.size(); ++i)
        if ((int)c.extra_atoms[i].q.size() != c.potential.dim)
            bad("potential.extra_atoms[" + std::to_string(i) + "].q", "wrong dimension");
    if (c.orders < 1) bad("orders", "must be >= 1");
    if (c.hbar_list.empty()) bad("hbar_list", "must be non-empty");
    for (double h : c.hbar_list)
        if (!(h > 0.0 && h <= 1.0)) bad("hbar_list", "entries must lie in (0, 1]");
    if (c.epsilon_list.empty()) bad("epsilon_list", "must be non-empty");
    if (c.ncut < 1) bad("basis.ncut", "must be >= 1");
    if (c.margin < 0 || c.margin >= c.ncut) bad("basis.margin", "need 0 <= margin < ncut");
    if (!(c.policy.rho > 2.0)) bad("policy.rho", "must exceed 2");
    if (c.policy.eta < 0.0) bad("policy.eta", "must be >= 0");
    if (c.mode != "quantum" && c.mode != "classical" && c.mode != "both")
        bad("mode", "must be quantum|classical|both");
    if (c.jobs < 1) bad("jobs", "must be >= 1");
    r.valid = r.errors.empty();
    if (c.frequency.dim >= 1 && !c.frequency.omega.empty() && c.qmax_check >= 1)
        r.dio = verify_diophantine(c.frequency, c.qmax_check);
    return r;
}

// ---------------------------------------------------------------------------
// run orchestration
// ---------------------------------------------------------------------------

struct RunReport {
    std::vector<Check> checks;
    DiophantineReport dio;
    int failed = 0;
    nlohmann::ordered_json summary;
};

namespace detail {

inline double max_atom_diff(const Symbol& a, const Symbol& b) {
    double m = 0.0;
    for (const auto& [k, c] : a.terms) m = std::max(m, std::abs(c - b.coeff(k)));
    for (const auto& [k, c] : b.terms) m = std::max(m, std::abs(c - a.coeff(k)));
    return m;
}

inline const char* parity_str(Parity p) {
    switch (p) {
        case Parity::Even: return "even";
        case Parity::Odd: return "odd";
        default: return "none";
    }
}

struct CheckSink {
    std::vector<Check>& out;
    const RunConfig& cfg;

    bool enabled(const std::string& name) const {
        if (cfg.checks_none) return false;
        if (cfg.checks_all) return true;
        for (const auto& n : cfg.checks)
            if (n == name) return true;
        return false;
    }
    void add(const std::string& name, double value, double tol, bool pass,
             const std::string& note = "") {
        if (!enabled(name)) return;
        out.push_back({name, value, tol, pass, note});
    }
    void add_leq(const std::string& name, double value, double tol, const std::string& note = "") {
        add(name, value, tol, value <= tol, note);
    }
};

inline Symbol second_test_potential(const PotentialSpec& base) {
    // a fixed companion potential for binary bracket checks: the base
    // generators with q reversed and m shifted
    PotentialSpec s;
    s.dim = base.dim;
    s.pstep = base.pstep;
    for (const auto& g : base.generators) {
        PotentialSpec::Generator h;
        h.q.assign(g.q.rbegin(), g.q.rend());
        if (sup_norm(h.q) == 0) h.q = g.q;
        h.m = g.m + 1;
        h.amplitude = 0.7 * g.amplitude;
        s.generators.push_back(std::move(h));
    }
    if (s.generators.empty()) {
        PotentialSpec::Generator h;
        h.q.assign(std::size_t(s.dim), 0);
        h.q[0] = 1;
        h.m = 1;
        h.amplitude = 0.5;
        s.generators.push_back(std::move(h));
    }
    return build_potential(s);
}

inline void write_spectra_csv(const std::filesystem::path& path, const SpectralTable& t, int dim) {
    std::ofstream os(path);
    for (int i = 1; i <= dim; ++i) os << "n" << i << ",";
    os << "lambda_qnf,re_lambda_oracle,im_lambda_oracle,residual,interior\n";
    for (const auto& row : t.rows) {
        for (int v : row.n) os << v << ',';
        os << fmt_double(row.lambda_qnf) << ',' << fmt_double(row.lambda_oracle.real()) << ','
           << fmt_double(row.lambda_oracle.imag()) << ',' << fmt_double(row.residual) << ','
           << (row.interior ? 1 : 0) << "\n";
    }
}

inline void write_normal_form(const std::filesystem::path& path, const NormalFormResult& r) {
    std::ofstream os(path);
    os << "normal_form mode " << (r.mode == NfMode::Quantum ? "quantum" : "classical")
       << " K " << r.order << " hbar " << fmt_double(r.hbar) << " delta "
       << fmt_double(r.B.empty() ? 0.0 : r.B[0].pstep) << " rho " << fmt_double(r.policy.rho)
       << " omega";
    for (double w : r.freq.omega) os << ' ' << fmt_double(w);
    os << "\n";
    for (int k = 1; k <= r.order; ++k) {
        os << "B " << k << "\n";
        write_symbol(os, r.B[k - 1]);
        os << "W " << k << "\n";
        write_symbol(os, r.W[k - 1]);
    }
}

inline void write_norms_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<double, const NormalFormResult*>>& runs) {
    std::ofstream os(path);
    os << "mode,hbar,k,norm_B,norm_W,dropped\n";
    for (const auto& [hb, r] : runs) {
        for (int k = 1; k <= r->order; ++k) {
            os << (r->mode == NfMode::Quantum ? "quantum" : "classical") << ','
               << fmt_double(hb) << ',' << k << ',' << fmt_double(r->norm_B[k - 1]) << ','
               << fmt_double(r->norm_W[k - 1]) << ',' << fmt_double(r->dropped_per_order[k - 1])
               << "\n";
        }
    }
}

inline void dump_matrix(const std::filesystem::path& path, const OperatorMatrix& M, double hbar,
                        double eps, const Frequency& f) {
    std::ofstream os(path, std::ios::binary);
    std::ostringstream hdr;
    hdr << "weylmat l " << M.window.dim << " N " << M.window.ncut << " hbar " << fmt_double(hbar)
        << " eps " << fmt_double(eps) << " omega";
    for (double w : f.omega) hdr << ' ' << fmt_double(w);
    hdr << " layout row-major-lex complex128-le\n";
    std::string h = hdr.str();
    os.write(h.data(), std::streamsize(h.size()));
    for (Eigen::Index i = 0; i < M.entries.rows(); ++i)
        for (Eigen::Index j = 0; j < M.entries.cols(); ++j) {
            double re = M.entries(i, j).real(), im = M.entries(i, j).imag();
            os.write(reinterpret_cast<const char*>(&re), 8);
            os.write(reinterpret_cast<const char*>(&im), 8);
        }
}

}  // namespace detail

/// Full pipeline: diophantine report, potential, normal forms, check suite,
/// spectra comparison, scaling and sweep diagnostics, artifact files.
/// Returns the number of failed checks (process exit status).
inline int run(const RunConfig& cfg, RunReport& rep) {
    namespace fs = std::filesystem;
    using nlohmann::ordered_json;
    fs::create_directories(cfg.out_dir);

    const Frequency& f = cfg.frequency;
    rep.dio = verify_diophantine(f, cfg.qmax_check);
    detail::CheckSink sink{rep.checks, cfg};

    // small-divisor round trip over the scan range
    {
        double worst = 0.0;
        IntVec q(f.dim, 0);
        detail::for_each_q(f.dim, std::min(cfg.qmax_check, 6), q, 0, [&](const IntVec& qq) {
            if (detail::sup_norm(qq) == 0) return;
            double d = f.dot(qq);
            if (std::abs(d) < f.resonance_floor) return;
            Complex r = small_divisor(f, qq) * Complex(0.0, d);
            worst = std::max(worst, std::abs(r - Complex(1.0)));
        });
        sink.add_leq("small_divisor_roundtrip", worst, 1e-14);
    }

    Symbol V = build_potential(cfg.potential);
    for (const auto& a : cfg.extra_atoms) V.insert({a.q, a.m}, a.c);
    BasisWindow w(f.dim, cfg.ncut, cfg.margin);

    sink.add_leq("potential_reality", reality_residual(V), cfg.tol.reality);
    sink.add("potential_parity_odd", parity_J(V) == Parity::Odd || V.zero() ? 0.0 : 1.0, 0.0,
             parity_J(V) == Parity::Odd || V.zero(), detail::parity_str(parity_J(V)));
    sink.add_leq("pt_matrix_check", pt_symmetry_check(V, w, f, cfg.hbar_list.front()),
                 cfg.tol.pt_matrix);

    Symbol V2 = detail::second_test_potential(cfg.potential);
    double hb0 = cfg.hbar_list.front();

    if (!V.zero()) {
        // bracket algebra checks on the (V, companion) pair
        auto mb = moyal_bracket(V, V2, hb0, cfg.policy, f);
        auto mb_rev = moyal_bracket(V2, V, hb0, cfg.policy, f);
        sink.add_leq("moyal_antisymmetry",
                     rho_norm(add(mb.value, mb_rev.value), 0.0), 0.0);
        auto pb = poisson_bracket(V, V2, cfg.policy, f);
        auto pb_rev = poisson_bracket(V2, V, cfg.policy, f);
        sink.add_leq("poisson_antisymmetry",
                     rho_norm(add(pb.value, pb_rev.value), 0.0), 0.0);
        sink.add_leq("moyal_imaginary_closure", imaginarity_residual(mb.value),
                     cfg.tol.imaginarity);
        {
            // J{F,G} = -J_F J_G: two odd inputs give an odd bracket
            Parity p = parity_J(mb.value);
            bool ok = mb.value.zero() || p == Parity::Odd;
            sink.add("moyal_parity_product", ok ? 0.0 : 1.0, 0.0, ok, detail::parity_str(p));
        }
        {
            // x-independent pair -> zero bracket
            Symbol xi1, xi2;
            xi1.dim = xi2.dim = V.dim;
            xi1.pstep = xi2.pstep = V.pstep;
            IntVec q0(V.dim, 0);
            xi1.insert({q0, 1}, Complex(0.5));
            xi1.insert({q0, -1}, Complex(0.5));
            xi2.insert({q0, 2}, Complex(0.25, 0.1));
            double z = rho_norm(moyal_bracket(xi1, xi2, hb0, cfg.policy, f).value, 0.0);
            sink.add_leq("moyal_zero_on_x_independent", z, 0.0);
        }
        sink.add_leq("lemmaA1_reality_flip", imaginarity_residual(scale(V, Complex(0.0, 1.0))),
                     cfg.tol.imaginarity);
        {
            // Poisson limit: || {F,G}_M(h) - {F,G} || = O(h^2)
            double h1 = 0.1, h2 = 0.05;
            double d1 = rho_norm(add(moyal_bracket(V, V2, h1, cfg.policy, f).value,
                                     scale(pb.value, -1.0)), cfg.policy.rho);
            double d2 = rho_norm(add(moyal_bracket(V, V2, h2, cfg.policy, f).value,
                                     scale(pb.value, -1.0)), cfg.policy.rho);
            if (d2 > 1e-300) {
                double ratio = d1 / d2;
                sink.add("poisson_limit_ratio", ratio, 4.0, ratio >= 3.5 && ratio <= 4.5);
            } else {
                sink.add("poisson_limit_ratio", 0.0, 4.0, true, "vacuous (hbar-independent pair)");
            }
        }
        if (w.margin >= detail::q_spread(V) + detail::q_spread(V2)) {
            sink.add_leq("moyal_commutator_oracle", commutator_symbol_check(V, V2, hb0, w, f),
                         cfg.tol.commutator);
        }
        sink.add_leq("operator_norm_bound",
                     spectral_norm(matrix_of_symbol(V, hb0, w, f)) - rho_norm(V, 0.0), 1e-10);
    }

    LSymbol L{f};
    bool quantum = cfg.mode != "classical";
    bool classical = cfg.mode != "quantum";

    std::vector<NormalFormResult> qnf_runs;
    std::optional<NormalFormResult> cnf_run;
    if (classical) cnf_run = cnf(V, f, cfg.orders, cfg.policy);

    if (quantum) {
        for (double hb : cfg.hbar_list) qnf_runs.push_back(qnf(V, f, hb, cfg.orders, cfg.policy));

        double max_reality = 0.0, max_w_imag = 0.0, max_odd = 0.0, max_hom = 0.0;
        int parity_viol = 0;
        double ledger = 0.0;
        for (const auto& r : qnf_runs) {
            ledger = std::max(ledger, r.dropped_total);
            for (int k = 1; k <= r.order; ++k) {
                max_reality = std::max(max_reality, reality_residual(r.B[k - 1]));
                max_reality = std::max(max_reality, reality_residual(r.V_terms[k - 1]));
                max_w_imag = std::max(max_w_imag, imaginarity_residual(r.W[k - 1]));
                if (k % 2 == 1) max_odd = std::max(max_odd, r.norm_B[k - 1]);
                Parity pv = parity_J(r.V_terms[k - 1]);
                Parity pw = parity_J(r.W[k - 1]);
                Parity want_v = k % 2 == 0 ? Parity::Even : Parity::Odd;
                Parity want_w = k % 2 == 0 ? Parity::Odd : Parity::Even;
                if (!r.V_terms[k - 1].zero() && pv != want_v) ++parity_viol;
                if (!r.W[k - 1].zero() && pw != want_w) ++parity_viol;
                Symbol resid = add(add(bracket_with_L(r.W[k - 1], L), r.V_terms[k - 1]),
                                   scale(r.B[k - 1], -1.0));
                double vn = rho_norm(r.V_terms[k - 1], cfg.policy.rho);
                max_hom = std::max(rho_norm(resid, cfg.policy.rho) / std::max(1.0, vn), max_hom);
            }
        }
        sink.add_leq("nf_reality_Bk", max_reality, cfg.tol.reality);
        sink.add_leq("nf_W_imaginary", max_w_imag, cfg.tol.imaginarity);
        sink.add_leq("nf_odd_vanishing", max_odd, std::max(1e-12, ledger));
        sink.add("nf_parity_ladder", double(parity_viol), 0.0, parity_viol == 0);
        sink.add_leq("nf_homological_residual", max_hom, cfg.tol.homological_rel);

        {
            const auto& r = qnf_runs.front();
            double worst = 0.0;
            for (int k = 2; k <= std::min(4, r.order); ++k) {
                Symbol lit = vk_literal(r.W, V, f, k, r.hbar, cfg.policy);
                worst = std::max(worst, detail::max_atom_diff(lit, r.V_terms[k - 1]));
            }
            sink.add_leq("nf_graded_vs_literal", worst, cfg.tol.graded_vs_literal);
        }
    }

    if (classical && cnf_run) {
        double worst = 0.0;
        for (int k = 2; k <= std::min(4, cnf_run->order); ++k) {
            Symbol lit = vk_literal(cnf_run->W, V, f, k, 0.0, cfg.policy, NfMode::Classical);
            worst = std::max(worst, detail::max_atom_diff(lit, cnf_run->V_terms[k - 1]));
        }
        sink.add_leq("cnf_graded_vs_literal", worst, cfg.tol.graded_vs_literal);
    }

    if (quantum && classical && !V.zero() && sink.enabled("classical_limit_fit")) {
        auto sweep = hbar_sweep(V, f, cfg.orders, cfg.sweep_hbars, cfg.policy);
        double worst_lo = 10.0, worst_hi = 0.0;
        int fitted = 0;
        for (int k = 2; k <= cfg.orders; k += 2) {
            double e = sweep.fit_exponent[k - 1];
            if (std::isnan(e)) continue;
            ++fitted;
            worst_lo = std::min(worst_lo, e);
            worst_hi = std::max(worst_hi, e);
        }
        bool ok = fitted == 0 || (worst_lo >= cfg.tol.classical_fit_lo &&
                                  worst_hi <= cfg.tol.classical_fit_hi);
        sink.add("classical_limit_fit", fitted ? worst_lo : 0.0, cfg.tol.classical_fit_lo, ok,
                 fitted ? "min/max exponent " + detail::fmt_short(worst_lo) + "/" +
                              detail::fmt_short(worst_hi)
                        : "vacuous (no hbar dependence)");
    }

    // interior-window stability of the oracle under N -> N+2
    if (!V.zero() && sink.enabled("interior_window_stability")) {
        double hb = hb0, ep = cfg.epsilon_list.front();
        BasisWindow w2(f.dim, cfg.ncut + 2, cfg.margin + 2);
        auto c1 = detail::continue_spectrum(V, ep, hb, w, f);
        auto c2 = detail::continue_spectrum(V, ep, hb, w2, f);
        double worst = 0.0;
        w.for_each([&](const IntVec& n) {
            if (!w.interior(n)) return;
            worst = std::max(worst,
                             std::abs(c1.values[w.index(n)] - c2.values[w2.index(n)]));
        });
        sink.add_leq("interior_window_stability", worst, cfg.tol.interior_stability);
    }

    // spectra per (eps, hbar), parallel over jobs, merged in parameter order.
    // For a PT-broken potential the quantization formula is undefined (complex
    // B_k); only the oracle reality measurement runs, and it is expected to fail.
    bool pt_ok = reality_residual(V) <= cfg.tol.reality;
    std::vector<SpectralTable> tables;
    if (quantum && !pt_ok) {
        double max_imag = 0.0;
        for (double hb : cfg.hbar_list)
            for (double ep : cfg.epsilon_list) {
                auto c = detail::continue_spectrum(V, ep, hb, w, f);
                w.for_each([&](const IntVec& n) {
                    if (!w.interior(n)) return;
                    max_imag = std::max(max_imag, std::abs(c.values[w.index(n)].imag()));
                });
            }
        sink.add_leq("oracle_spectral_reality", max_imag, cfg.tol.oracle_imag,
                     "PT broken: quantization-formula comparison skipped");
    }
    if (quantum && pt_ok) {
        struct Job {
            std::size_t hi, ei;
        };
        std::vector<Job> jobs;
        for (std::size_t hi = 0; hi < cfg.hbar_list.size(); ++hi)
            for (std::size_t ei = 0; ei < cfg.epsilon_list.size(); ++ei) jobs.push_back({hi, ei});
        tables.resize(jobs.size());
        std::size_t next = 0;
        while (next < jobs.size()) {
            std::size_t batch = std::min<std::size_t>(std::size_t(cfg.jobs), jobs.size() - next);
            std::vector<std::future<SpectralTable>> futs;
            for (std::size_t b = 0; b < batch; ++b) {
                Job jb = jobs[next + b];
                futs.push_back(std::async(batch > 1 ? std::launch::async : std::launch::deferred,
                                          [&, jb] {
                                              return match_spectra(qnf_runs[jb.hi], V,
                                                                   cfg.epsilon_list[jb.ei],
                                                                   cfg.hbar_list[jb.hi], w, f);
                                          }));
            }
            for (std::size_t b = 0; b < batch; ++b) tables[next + b] = futs[b].get();
            next += batch;
        }
        double max_imag = 0.0, max_resid = 0.0;
        bool amb = false;
        for (const auto& t : tables) {
            max_imag = std::max(max_imag, t.max_interior_imag);
            max_resid = std::max(max_resid, t.max_interior_residual);
            amb = amb || t.any_ambiguous;
        }
        sink.add_leq("oracle_spectral_reality", max_imag, cfg.tol.oracle_imag);
        sink.add("spectra_pairing_unambiguous", amb ? 1.0 : 0.0, 0.0, !amb);
        rep.summary["max_interior_residual"] = max_resid;

        // epsilon parity of the quantization formula
        {
            double worst = 0.0;
            double ep = cfg.epsilon_list.front();
            w.for_each([&](const IntVec& n) {
                if (!w.interior(n)) return;
                worst = std::max(worst, std::abs(eigen_qnf(qnf_runs.front(), n, ep, f) -
                                                 eigen_qnf(qnf_runs.front(), n, -ep, f)));
            });
            sink.add_leq("eigen_qnf_eps_parity", worst, 0.0);
        }

        // residual order scaling at the largest configured epsilon
        double ep_max = *std::max_element(cfg.epsilon_list.begin(), cfg.epsilon_list.end());
        if (sink.enabled("order_scaling")) {
            auto rec = order_scaling_test(qnf_runs.front(), V, ep_max, hb0, w, f);
            if (rec.vacuous)
                sink.add("order_scaling", 0.0, rec.target, true, "vacuous (residuals at floor)");
            else
                sink.add("order_scaling", rec.ratio, rec.target, rec.pass,
                         "band [" + detail::fmt_short(rec.target / 3.0) + ", " +
                             detail::fmt_short(3.0 * rec.target) + "]");
            rep.summary["order_scaling_ratio"] = rec.vacuous ? 0.0 : rec.ratio;
            rep.summary["order_scaling_vacuous"] = rec.vacuous;
        }
    }

    // ---- artifact files -----------------------------------------------------
    fs::path out(cfg.out_dir);
    if (quantum) {
        std::size_t ti = 0;
        for (std::size_t hi = 0; hi < cfg.hbar_list.size(); ++hi) {
            for (std::size_t ei = 0; ei < cfg.epsilon_list.size() && pt_ok; ++ei, ++ti) {
                detail::write_spectra_csv(out / ("spectra_" +
                                                 detail::fmt_short(cfg.epsilon_list[ei]) + "_" +
                                                 detail::fmt_short(cfg.hbar_list[hi]) + ".csv"),
                                          tables[ti], f.dim);
            }
            detail::write_normal_form(out / ("nf_" + detail::fmt_short(cfg.hbar_list[hi]) + ".txt"),
                                      qnf_runs[hi]);
        }
    }
    if (cnf_run) detail::write_normal_form(out / "nf_classical.txt", *cnf_run);
    {
        std::vector<std::pair<double, const NormalFormResult*>> runs;
        for (std::size_t hi = 0; hi < qnf_runs.size(); ++hi)
            runs.emplace_back(cfg.hbar_list[hi], &qnf_runs[hi]);
        if (cnf_run) runs.emplace_back(0.0, &*cnf_run);
        detail::write_norms_csv(out / "norms.csv", runs);
    }
    if (cfg.dump_matrices && quantum) {
        detail::dump_matrix(out / "H_matrix.bin",
                            assemble_H(V, cfg.epsilon_list.front(), hb0, w, f),
                            hb0, cfg.epsilon_list.front(), f);
    }

    // convergence diagnostics on the first quantum run (or classical)
    if (!qnf_runs.empty() || cnf_run) {
        const NormalFormResult& r = !qnf_runs.empty() ? qnf_runs.front() : *cnf_run;
        auto d = convergence_diagnostics(r, cfg.policy.rho / 2.0);
        ordered_json jd;
        jd["radius"] = d.radius_infinite ? -1.0 : d.radius;
        jd["radius_infinite"] = d.radius_infinite;
        jd["low_confidence"] = d.low_confidence;
        jd["norms_rho_half"] = d.norms;
        jd["ledger_share"] = d.ledger_share;
        rep.summary["convergence"] = jd;
    }

    // ---- report.json --------------------------------------------------------
    ordered_json jr;
    jr["schema_version"] = cfg.schema_version;
    {
        ordered_json jd;
        jd["qmax"] = rep.dio.qmax;
        jd["worst_q"] = rep.dio.worst_q;
        jd["min_product"] = rep.dio.min_product;
        jd["implied_gamma"] = rep.dio.implied_gamma;
        jd["declared_gamma_ok"] = rep.dio.declared_gamma_ok;
        jd["resonance_found"] = rep.dio.resonance_found;
        jd["smallness_value"] = rep.dio.smallness_value;
        jd["smallness_ok"] = rep.dio.smallness_ok;
        jr["diophantine"] = jd;
    }
    {
        ordered_json jw;
        for (const auto& s : [&] {
                 std::vector<std::string> ws;
                 for (const auto& r : qnf_runs)
                     for (const auto& ww : r.warnings) ws.push_back(ww);
                 if (cnf_run)
                     for (const auto& ww : cnf_run->warnings) ws.push_back(ww);
                 std::sort(ws.begin(), ws.end());
                 ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
                 return ws;
             }())
            jw.push_back(s);
        jr["warnings"] = jw.is_null() ? ordered_json::array() : jw;
    }
    ordered_json jchecks = ordered_json::array();
    rep.failed = 0;
    for (const auto& c : rep.checks) {
        ordered_json jc;
        jc["name"] = c.name;
        jc["value"] = c.value;
        jc["tol"] = c.tol;
        jc["pass"] = c.pass;
        if (!c.note.empty()) jc["note"] = c.note;
        jchecks.push_back(jc);
        if (!c.pass) ++rep.failed;
    }
    jr["checks"] = jchecks;
    jr["summary"] = rep.summary;
    jr["failed_checks"] = rep.failed;
    {
        std::ofstream os(out / "report.json");
        os << jr.dump(2) << "\n";
    }
    return rep.failed;
}

}  // namespace qnf
