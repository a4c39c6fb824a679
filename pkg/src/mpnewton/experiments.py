"""Experiment protocols: configuration, execution and artifact bundles."""

from dataclasses import dataclass, field, replace
import json
import logging
import math
import os

import numpy as np

from . import analysis, data, linalg, linsolve
from . import models as M
from . import optimize as O
from . import precision as P
from .models import ConfigError
from .plotting import emit_plot
from .precision import Tier

log = logging.getLogger(__name__)

EXPERIMENTS = ("NewtonBounds", "InexactEta", "GaussNewtonBounds", "FiniteDiffSweep",
               "IllConditionedGradient", "GNkComparison", "LinsolveTable", "Classification")
CHECKS = ("bounds", "sharpness", "floor", "gn_condition", "no_progress")
BOUND_FACTOR = 100.0


def _load_toml(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


@dataclass
class ExperimentConfig:
    experiment: str
    problem: dict
    policies: list
    theta0_offsets: list
    seeds: list = field(default_factory=lambda: [0])
    maxit: int = 50
    output_dir: str = "results"
    offset_mode: str = "absolute"
    offset_base: str = "reference"
    reference_iters: int = 500
    reference_hessian_tier: str = "ext"
    stagnation_window: object = 10
    record_timing: bool = True
    checks: list = field(default_factory=lambda: ["bounds"])
    options: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("experiment", "problem", "policies", "theta0_offsets"):
            if key not in d:
                raise ConfigError(f"config is missing '{key}'")
        if d["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if not d["policies"]:
            raise ConfigError("at least one policy is required")
        if not d["theta0_offsets"]:
            raise ConfigError("at least one starting offset is required")
        if not isinstance(d["problem"], dict) or "family" not in d["problem"]:
            raise ConfigError("problem must be a table with a 'family'")
        d["policies"] = [p if isinstance(p, O.PrecisionPolicy) else O.PrecisionPolicy.from_dict(p)
                         for p in d["policies"]]
        if d.get("offset_mode", "absolute") not in ("absolute", "relative"):
            raise ConfigError("offset_mode must be 'absolute' or 'relative'")
        if d.get("offset_base", "reference") not in ("reference", "nominal"):
            raise ConfigError("offset_base must be 'reference' or 'nominal'")
        bad = set(d.get("checks", [])) - set(CHECKS)
        if bad:
            raise ConfigError(f"unknown checks {sorted(bad)}")
        if d.get("stagnation_window") in (0, "none", "off"):
            d["stagnation_window"] = None
        cfg = cls(**d)
        if base_dir and not os.path.isabs(cfg.output_dir):
            cfg.output_dir = os.path.join(base_dir, cfg.output_dir)
        return cfg

    @classmethod
    def load(cls, path):
        try:
            if str(path).endswith(".json"):
                with open(path) as fh:
                    raw = json.load(fh)
            else:
                raw = _load_toml(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(raw)
        cfg.name = cfg.name or os.path.splitext(os.path.basename(str(path)))[0]
        return cfg


# ---------------------------------------------------------------------------
# problems and references


@dataclass
class Setup:
    problem: object
    theta_star: object
    nominal: np.ndarray
    test_set: object = None


def build_setup(problem_cfg, seed=0, reference_iters=500, reference_hessian_tier="ext",
                test_fraction=0.2):
    cfg = dict(problem_cfg)
    test = None
    if cfg["family"] in ("LogisticBCE", "SquaredErrorSigmoid"):
        name = cfg.pop("dataset", None)
        if name is None:
            raise ConfigError(f"{cfg['family']} needs a dataset")
        ds = data.load_dataset(name, cfg.pop("source", None))
        train, test = data.split(ds, cfg.pop("test_fraction", test_fraction), seed)
        cfg["dataset"] = train
    cfg.setdefault("seed", seed)
    problem = M.build_problem(cfg)
    nominal = (np.asarray(problem.theta_star, float) if problem.theta_star is not None
               else np.zeros(problem.dim))
    ts = M.compute_reference_solution(problem, nominal, reference_iters, reference_hessian_tier)
    return Setup(problem, ts, nominal, test)


def starting_point(setup, offset, mode="absolute", base="reference"):
    origin = P.to_f64(setup.theta_star) if base == "reference" else setup.nominal
    off = np.asarray(offset, float)
    if mode == "relative":
        return origin * (1.0 + off)
    return origin + off


# ---------------------------------------------------------------------------
# convergence experiments


@dataclass
class Cell:
    policy: object
    offset: object
    seed: int
    trace: object
    report: object
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())


def cell_checks(trace, report, names):
    out = {}
    fin = trace.final
    for name in names:
        if name == "bounds":
            out["rel_error<=100*lim_acc"] = bool(fin.rel_error <= BOUND_FACTOR * report.lim_acc)
            out["grad_norm<=100*lim_g"] = bool(fin.grad_norm <= BOUND_FACTOR * report.lim_g)
        elif name == "sharpness":
            pa, pg = trace.plateau("rel_error"), trace.plateau("grad_norm")
            out["plateau rel_error sharp"] = bool(report.lim_acc / BOUND_FACTOR <= pa <= BOUND_FACTOR * report.lim_acc)
            out["plateau grad_norm sharp"] = bool(report.lim_g / BOUND_FACTOR <= pg <= BOUND_FACTOR * report.lim_g)
        elif name == "floor":
            if trace.policy.working_tier is Tier.P32:
                out["plateau >= u32/10"] = bool(trace.plateau("rel_error") >= Tier.P32.u / 10)
        elif name == "gn_condition":
            if report.gn_condition is not None:
                out["gn condition at theta*"] = bool(report.gn_condition["passes"])
        elif name == "no_progress":
            out["no progress"] = bool(fin.rel_error > trace.records[0].rel_error / 2)
    return out


def run_policy(setup, policy, theta0, maxit=50, stagnation_window=10, label=None):
    return O.newton_minimize(setup.problem, theta0, policy, maxit, setup.theta_star,
                             stagnation_window=stagnation_window, label=label or policy.describe())


def run_convergence(cfg, setups=None):
    cells = []
    setups = setups or {}
    for seed in cfg.seeds:
        if seed not in setups:
            setups[seed] = build_setup(cfg.problem, seed, cfg.reference_iters, cfg.reference_hessian_tier)
        st = setups[seed]
        for policy in cfg.policies:
            report = analysis.bound_report(st.problem, st.theta_star, policy, cfg.reference_hessian_tier)
            for off in cfg.theta0_offsets:
                th0 = starting_point(st, off, cfg.offset_mode, cfg.offset_base)
                tr = run_policy(st, policy, th0, cfg.maxit, cfg.stagnation_window,
                                f"{policy.describe()} offset={_off_label(off)}")
                tr.seed = seed
                cells.append(Cell(policy, off, seed, tr, report, cell_checks(tr, report, cfg.checks)))
    return cells, setups


def _off_label(off):
    if np.ndim(off) == 0:
        return f"{float(off):g}"
    return "[" + ",".join(f"{float(v):g}" for v in off) + "]"


def fd_sweep_checks(cells):
    """The sqrt(u_g) step must give the lowest plateau for each gradient tier."""
    out = {}
    by_tier = {}
    for c in cells:
        if c.policy.gradient_source != "fd":
            continue
        key = (str(c.policy.gradient_tier), c.seed, _off_label(c.offset))
        by_tier.setdefault(key, []).append(c)
    for key, group in sorted(by_tier.items()):
        sqrt_eps = math.sqrt(Tier.parse(key[0]).u)
        best = [c for c in group if math.isclose(c.policy.step_eps, sqrt_eps, rel_tol=1e-12)]
        if not best:
            continue
        lowest = min(c.trace.plateau() for c in group)
        out[f"sqrt(u_g) best at pi_g={key[0]} offset={key[2]}"] = bool(best[0].trace.plateau() <= lowest)
    return out


# ---------------------------------------------------------------------------
# GN_k comparison


def run_gnk(setup, base_policy, theta0, k_percents=(0, 30, 100), maxit=50, stagnation_window=None):
    traces = {}
    for k in k_percents:
        pol = replace(base_policy, hessian_source="gnk", gnk_percent=float(k))
        traces[k] = O.newton_minimize(setup.problem, theta0, pol, maxit, setup.theta_star,
                                      stagnation_window=stagnation_window, label=f"GN_{k:g}")
    return traces


def gnk_checks(traces, target=1e-6, fail_level=1e-2, iteration_ratio=1.5, flop_ratio=0.5):
    ks = sorted(traces)
    lo, hi = ks[0], ks[-1]
    mids = ks[1:-1]
    out = {f"GN_{lo:g} fails (final > {fail_level:g})": bool(traces[lo].final.rel_error > fail_level)}
    it_hi = traces[hi].iterations_to("rel_error", target)
    out[f"GN_{hi:g} reaches {target:g}"] = it_hi is not None
    fl_hi = np.mean(traces[hi].meta["curvature_flops"])
    for k in mids:
        it = traces[k].iterations_to("rel_error", target)
        out[f"GN_{k:g} reaches {target:g}"] = it is not None
        out[f"GN_{k:g} iterations <= {iteration_ratio}x GN_{hi:g}"] = bool(
            it is not None and it_hi is not None and it <= iteration_ratio * it_hi)
        ratio = np.mean(traces[k].meta["curvature_flops"]) / fl_hi
        out[f"GN_{k:g} curvature flops <= {flop_ratio} x GN_{hi:g} ({ratio:.2f})"] = bool(ratio <= flop_ratio)
    return out


# ---------------------------------------------------------------------------
# linear solver table


def solver_trace(outcome, label):
    recs = []
    for k, res in enumerate(outcome.per_iteration_residuals):
        rel = outcome.rel_errors[k] if k < len(outcome.rel_errors) else float("nan")
        recs.append(O.IterationRecord(k, rel, res, float("nan"), 0.0, k, 0))
    return O.Trace(recs, {"solver": label}, "NormalEqSystem", np.zeros(0), label=label)


def linsolve_table(systems=("pb1", "pb2", "pb3", "pb4"), tier=Tier.P32, maxit=60, seed=0, n=10):
    rows, traces = [], {}
    for name in systems:
        sy = data.standard_system(name, n, seed) if isinstance(name, str) else name
        label = name if isinstance(name, str) else "system"
        B = sy.A.T @ sy.A + sy.S
        sc = analysis.structured_cond(sy.A, sy.S, sy.b, sy.x_star)
        row = {"system": label, "kappa_A": linalg.cond_2(sy.A), "kappa_B": linalg.cond_2(B),
               "kappa_S": sc.kappa_S}
        for method in linsolve.SOLVERS:
            out = linsolve.solve_system(sy, method, tier, maxit)
            row[method] = out.rel_errors[-1]
            traces[(label, method)] = solver_trace(out, f"{label} {method}")
        rows.append(row)
    return rows, traces


def linsolve_checks(rows, expected=None):
    by = {r["system"]: r for r in rows}
    out = {}
    if "pb1" in by:
        r = by["pb1"]
        out["pb1 CGLS_k <= 1e-4"] = bool(r["cgls-k"] <= 1e-4)
        out["pb1 CGLS_k <= 1e-3 x CG"] = bool(r["cgls-k"] <= 1e-3 * r["cg"])
    if "pb2" in by:
        r = by["pb2"]
        out["pb2 CGLS_k <= 1e-4"] = bool(r["cgls-k"] <= 1e-4)
        out["pb2 CGLS_k best"] = bool(r["cgls-k"] <= min(r["cg"], r["cg-smart"]))
    if "pb3" in by:
        r = by["pb3"]
        out["pb3 CG best"] = bool(r["cg"] <= min(r["cg-smart"], r["cgls-k"]))
        out["pb3 kappa_S >= 1e20"] = bool(r["kappa_S"] >= 1e20)
    if "pb4" in by:
        r = by["pb4"]
        out["pb4 all stagnate >= 1e-1"] = bool(min(r["cg"], r["cg-smart"], r["cgls-k"]) >= 1e-1)
    for name, ref in (expected or {}).items():
        if name not in by:
            continue
        for key, val in ref.items():
            got = by[name][key]
            out[f"{name} {key} within x10 of {val:g}"] = bool(val / 10 <= got <= val * 10)
    return out


# ---------------------------------------------------------------------------
# classification


def classification_run(setup, policy, maxit=50, adamw=None, gauss_newton=True, stagnation_window=10):
    """Newton, optionally Gauss-Newton, and AdamW at Newton's flop budget."""
    pr = setup.problem
    theta0 = np.zeros(pr.dim)
    traces = {"Newton": O.newton_minimize(pr, theta0, policy, maxit, setup.theta_star,
                                          stagnation_window=stagnation_window, label="Newton")}
    if gauss_newton and pr.least_squares:
        gn = replace(policy, hessian_source="gauss-newton")
        traces["Gauss-Newton"] = O.newton_minimize(pr, theta0, gn, maxit, setup.theta_star,
                                                   stagnation_window=stagnation_window, label="Gauss-Newton")
    budget = (len(traces["Newton"].records) - 1) * O.newton_iteration_flops(pr)
    opts = dict(adamw or {})
    opts.setdefault("tier", policy.working_tier)
    traces["AdamW"] = O.adamw_minimize(pr, theta0, theta_star=setup.theta_star, flop_budget=budget,
                                       record_every=opts.pop("record_every", 10), **opts)
    traces["AdamW"].meta["flop_budget"] = budget
    rows = []
    for name, tr in traces.items():
        cm = data.confusion(pr.predict(setup.test_set.features, tr.meta["theta"]), setup.test_set.labels)
        rows.append({"optimizer": name, "iterations": tr.final.index, "grad_norm": tr.final.grad_norm,
                     "loss": tr.final.loss, "tn": cm.tn_rate, "tp": cm.tp_rate,
                     "elapsed_s": tr.final.elapsed_ns * 1e-9})
    return rows, traces


def classification_checks(rows, family):
    by = {r["optimizer"]: r for r in rows}
    out = {}
    nt, ad = by["Newton"], by["AdamW"]
    if family == "LogisticBCE":
        out["Newton grad_norm <= 1e-12"] = bool(nt["grad_norm"] <= 1e-12)
        out["Newton test TN >= 0.90"] = bool(nt["tn"] >= 0.90)
        out["Newton test TP >= 0.85"] = bool(nt["tp"] >= 0.85)
        out["AdamW grad_norm >= 1e-2"] = bool(ad["grad_norm"] >= 1e-2)
    elif "Gauss-Newton" in by:
        gn = by["Gauss-Newton"]
        out["GN loss <= 1.5 x Newton"] = bool(gn["loss"] <= 1.5 * nt["loss"])
        out["Newton loss <= AdamW / 2"] = bool(nt["loss"] * 2 <= ad["loss"])
        out["GN loss <= AdamW / 2"] = bool(gn["loss"] * 2 <= ad["loss"])
    return out


# ---------------------------------------------------------------------------
# bundles


class Bundle:
    """Collects artifacts of one experiment run in ``output_dir``."""

    def __init__(self, root, timing=True):
        self.root = root
        self.timing = timing
        self.files = []
        self.errors = []
        for sub in ("traces", "reports", "plots"):
            os.makedirs(os.path.join(root, sub), exist_ok=True)

    def path(self, sub, name):
        p = os.path.join(self.root, sub, name)
        self.files.append(os.path.relpath(p, self.root))
        return p

    def trace(self, tr, name):
        if tr.status.startswith("failed"):
            self.errors.append(f"{name}: {tr.status}")
        tr.write_csv(self.path("traces", _safe(name) + ".csv"), self.timing)

    def report(self, rep, name):
        rep.to_json(self.path("reports", _safe(name) + ".json"))

    def plot(self, traces, bounds, name, column="rel_error", title=""):
        if not any(t.records for t in traces):
            log.warning("no data for plot %s", name)
            return
        emit_plot(traces, bounds, self.path("plots", _safe(name) + ".svg"), column, title)

    def write_json(self, name, obj):
        p = os.path.join(self.root, name)
        with open(p, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True, default=analysis._jsonable)
            fh.write("\n")
        self.files.append(name)

    def write_table(self, name, rows):
        if not rows:
            return
        keys = list(rows[0])
        p = os.path.join(self.root, name)
        with open(p, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in rows:
                fh.write(",".join(_cell(r.get(k)) for k in keys) + "\n")
        self.files.append(name)

    def finish(self, summary):
        self.write_json("summary.json", summary)
        self.write_json("manifest.json", {"files": sorted(self.files), "errors": self.errors})


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def _safe(name):
    keep = "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in name)
    return keep.strip("_")


def run_experiment(cfg, check_only_bounds=False):
    """Run ``cfg`` and write its bundle; returns the summary dictionary."""
    bundle = Bundle(cfg.output_dir, cfg.record_timing)
    summary = {"experiment": cfg.experiment, "name": cfg.name, "rows": [], "checks": {}}
    try:
        if cfg.experiment == "LinsolveTable":
            _run_linsolve(cfg, bundle, summary)
        elif cfg.experiment == "GNkComparison":
            _run_gnk(cfg, bundle, summary, check_only_bounds)
        elif cfg.experiment == "Classification":
            _run_classification(cfg, bundle, summary, check_only_bounds)
        else:
            _run_convergence(cfg, bundle, summary, check_only_bounds)
    except (ConfigError, FileNotFoundError):
        raise
    except Exception as exc:  # partial bundle with an error manifest
        log.exception("experiment failed")
        bundle.errors.append(f"{type(exc).__name__}: {exc}")
    summary["errors"] = bundle.errors
    summary["passed"] = not bundle.errors and all(summary["checks"].values()) and all(
        r.get("passed", True) for r in summary["rows"])
    bundle.finish(summary)
    return summary


def _report_only(cfg, bundle, summary):
    for seed in cfg.seeds:
        st = build_setup(cfg.problem, seed, cfg.reference_iters, cfg.reference_hessian_tier)
        for policy in cfg.policies:
            rep = analysis.bound_report(st.problem, st.theta_star, policy, cfg.reference_hessian_tier)
            bundle.report(rep, f"seed{seed}_{policy.describe()}")
            summary["rows"].append({"policy": policy.describe(), "seed": seed, "psi": rep.psi,
                                    "lim_acc": rep.lim_acc, "lim_g": rep.lim_g,
                                    "kappa_H": rep.kappa_H_star, "ul_kappa": rep.ul_kappa_check["value"],
                                    "passed": rep.ul_kappa_check["passes"]})
    bundle.write_table("summary.csv", summary["rows"])


def _run_convergence(cfg, bundle, summary, report_only):
    if report_only:
        return _report_only(cfg, bundle, summary)
    cells, setups = run_convergence(cfg)
    for c in cells:
        name = f"seed{c.seed}_{c.trace.label}"
        bundle.trace(c.trace, name)
        summary["rows"].append({
            "policy": c.policy.describe(), "offset": _off_label(c.offset), "seed": c.seed,
            "iterations": c.trace.final.index, "final_rel_error": c.trace.final.rel_error,
            "final_grad_norm": c.trace.final.grad_norm, "plateau_rel_error": c.trace.plateau(),
            "plateau_grad_norm": c.trace.plateau("grad_norm"), "lim_acc": c.report.lim_acc,
            "lim_g": c.report.lim_g, "psi": c.report.psi, "status": c.trace.status,
            "checks": c.checks, "passed": c.passed, "report": c.report.to_dict()})
    done = set()
    for c in cells:
        key = (c.seed, c.policy.describe())
        if key in done:
            continue
        done.add(key)
        bundle.report(c.report, f"seed{c.seed}_{c.policy.describe()}")
        group = [d.trace for d in cells if (d.seed, d.policy.describe()) == key]
        bundle.plot(group, [("lim_acc", c.report.lim_acc)], f"seed{c.seed}_{key[1]}_rel_error",
                    "rel_error", key[1])
        bundle.plot(group, [("lim_g", c.report.lim_g)], f"seed{c.seed}_{key[1]}_grad_norm",
                    "grad_norm", key[1])
    if cfg.experiment == "FiniteDiffSweep":
        summary["checks"].update(fd_sweep_checks(cells))
    for seed, st in setups.items():
        if cfg.experiment == "IllConditionedGradient":
            x = P.to_f64(st.theta_star)
            summary.setdefault("gradient_conditioning", {})[str(seed)] = analysis.gradient_conditioning(
                st.problem, x * (1 + cfg.options.get("conditioning_offset", 1e-3)),
                cfg.options.get("n_samples", 200), cfg.options.get("delta_scale", 1e-6), seed)
    bundle.write_table("summary.csv", [{k: v for k, v in r.items() if k not in ("checks", "report")}
                                       for r in summary["rows"]])


def _run_gnk(cfg, bundle, summary, report_only):
    ks = cfg.options.get("k_percents", [0, 30, 100])
    for seed in cfg.seeds:
        st = build_setup(cfg.problem, seed, cfg.reference_iters, cfg.reference_hessian_tier)
        for policy in cfg.policies:
            rep = analysis.bound_report(st.problem, st.theta_star, replace(policy, hessian_source="gauss-newton"),
                                        cfg.reference_hessian_tier)
            bundle.report(rep, f"seed{seed}_{policy.label}")
            if report_only:
                continue
            for off in cfg.theta0_offsets:
                th0 = starting_point(st, off, cfg.offset_mode, cfg.offset_base)
                traces = run_gnk(st, policy, th0, ks, cfg.maxit, cfg.stagnation_window)
                tag = f"seed{seed}_{policy.label}_offset={_off_label(off)}"
                for k, tr in traces.items():
                    bundle.trace(tr, f"{tag}_GN_{k:g}")
                    summary["rows"].append({"seed": seed, "policy": policy.label, "offset": _off_label(off),
                                            "k_percent": k, "final_rel_error": tr.final.rel_error,
                                            "iterations_to_1e-6": tr.iterations_to("rel_error", 1e-6),
                                            "curvature_flops": float(np.mean(tr.meta["curvature_flops"]))})
                bundle.plot(list(traces.values()), [], f"{tag}_rel_error", "rel_error", "GN_k comparison")
                for name, ok in gnk_checks(traces).items():
                    summary["checks"][f"{tag}: {name}"] = ok
    bundle.write_table("summary.csv", summary["rows"])


def _run_linsolve(cfg, bundle, summary):
    opts = cfg.options
    tier = cfg.policies[0].solve_tier
    rows, traces = linsolve_table(opts.get("systems", ["pb1", "pb2", "pb3", "pb4"]), tier,
                                  opts.get("maxit", 60), cfg.seeds[0], opts.get("n", 10))
    for (name, method), tr in traces.items():
        bundle.trace(tr, f"{name}_{method}")
    for name in {k[0] for k in traces}:
        bundle.plot([traces[(name, m)] for m in linsolve.SOLVERS], [], f"{name}_rel_error", "rel_error", name)
    summary["rows"] = rows
    summary["checks"] = linsolve_checks(rows, opts.get("expected"))
    bundle.write_table("summary.csv", rows)


def _run_classification(cfg, bundle, summary, report_only):
    opts = cfg.options
    for seed in cfg.seeds:
        st = build_setup(cfg.problem, seed, cfg.reference_iters, cfg.reference_hessian_tier,
                         opts.get("test_fraction", 0.2))
        policy = cfg.policies[0]
        rep = analysis.bound_report(st.problem, st.theta_star, policy, cfg.reference_hessian_tier)
        bundle.report(rep, f"seed{seed}_{policy.label}")
        if report_only:
            continue
        rows, traces = classification_run(st, policy, cfg.maxit, opts.get("adamw"),
                                          opts.get("gauss_newton", True), cfg.stagnation_window)
        for name, tr in traces.items():
            bundle.trace(tr, f"seed{seed}_{name}")
        bundle.plot(list(traces.values()), [], f"seed{seed}_grad_norm", "grad_norm", cfg.problem["family"])
        bundle.plot(list(traces.values()), [], f"seed{seed}_loss", "loss", cfg.problem["family"])
        for r in rows:
            r["seed"] = seed
        summary["rows"].extend(rows)
        for name, ok in classification_checks(rows, cfg.problem["family"]).items():
            summary["checks"][f"seed{seed}: {name}"] = ok
    bundle.write_table("summary.csv", summary["rows"])
