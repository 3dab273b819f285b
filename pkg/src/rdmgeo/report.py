"""Experiment orchestration: configured end-to-end runs producing summary
tables and figure data series as CSV/JSON.

Outputs are byte-stable across reruns: fixed seeds, deterministic solvers,
repr-formatted floats, sorted JSON keys and no timestamps.  Files are
written atomically (temp file + rename) and listed in a manifest.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from . import algebra, exact, fock, geometry, vrdm
from .sdp import SdpConfig

__all__ = ["ExperimentConfig", "ConfigError", "RunOutcome",
           "execute_run", "execute_sweep", "audit_rdm_file",
           "conditions_from_tokens"]

_KNOWN_KEYS = {
    "model", "sites", "t", "U", "periodic", "spatial_count", "seed",
    "integrals", "N", "sz2", "conditions", "null_tol", "sdp_tol",
    "out_dir", "artifacts", "lowest", "bounds",
}
_ARTIFACTS = {"summary", "eigenvalues", "figures", "rdms", "exact-audit"}
_CONDITION_TOKENS = {"d", "q", "g", "t1", "t2", "t2p"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def conditions_from_tokens(tokens) -> vrdm.ConditionSet:
    toks = {t.strip().lower() for t in tokens if t.strip()}
    bad = toks - _CONDITION_TOKENS
    if bad:
        raise ConfigError(f"unknown condition tokens: {sorted(bad)}")
    if "d" not in toks:
        raise ConfigError("the D condition cannot be disabled")
    return vrdm.ConditionSet(Q="q" in toks, G="g" in toks,
                             T1="t1" in toks, T2="t2" in toks,
                             T2P="t2p" in toks)


@dataclass
class ExperimentConfig:
    """One experiment: a system, a sector and the requested artifacts."""

    model: str = "hubbard"          # hubbard | random | integral-file
    sites: int = 6
    t: float = 1.0
    U: float = 10.0
    periodic: bool = True
    spatial_count: int = 6
    seed: int = 0
    integrals: str | None = None    # path for model == integral-file
    N: int = 6
    sz2: int | None = 0
    conditions: tuple = ("d", "q", "g", "t1", "t2", "t2p")
    null_tol: float = 1e-9
    sdp_tol: float = 1e-9
    out_dir: str = "out"
    artifacts: tuple = ("summary",)
    lowest: int = 10               # eigenvalues per matrix in the table
    bounds: dict | None = None     # BoundSet field overrides

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.model not in ("hubbard", "random", "integral-file"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.model == "hubbard" and self.sites < 2:
            raise ConfigError("hubbard model needs sites >= 2")
        if self.model == "random" and self.spatial_count < 1:
            raise ConfigError("random model needs spatial_count >= 1")
        if self.model == "integral-file" and not self.integrals:
            raise ConfigError("integral-file model needs 'integrals' path")
        if self.N < 2:
            raise ConfigError("need at least two electrons")
        if self.null_tol <= 0 or self.sdp_tol <= 0:
            raise ConfigError("tolerances must be positive")
        bad = set(self.artifacts) - _ARTIFACTS
        if bad:
            raise ConfigError(f"unknown artifacts: {sorted(bad)}")
        conditions_from_tokens(self.conditions)

    def build_hamiltonian(self) -> fock.TwoBodyHamiltonian:
        if self.model == "hubbard":
            return fock.build_hubbard(self.sites, self.t, self.U,
                                      self.periodic)
        if self.model == "random":
            return fock.build_random_two_body(self.spatial_count, self.seed)
        with open(self.integrals) as fh:
            return fock.load_integrals(fh)

    def system_label(self) -> str:
        if self.model == "hubbard":
            bc = "pbc" if self.periodic else "obc"
            return f"hubbard-{self.sites}site-t{self.t:g}-U{self.U:g}-{bc}"
        if self.model == "random":
            return f"random-M{self.spatial_count}-seed{self.seed}"
        return f"integrals-{os.path.basename(self.integrals)}"


# ---------------------------------------------------------------------------
# atomic, deterministic output helpers
# ---------------------------------------------------------------------------

def _write_atomic(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_text(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(repr(float(v)) if isinstance(v, float)
                            else str(v) for v in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# single run
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    config: ExperimentConfig
    summary: dict
    files: list = field(default_factory=list)
    failed_stage: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None


def _solve_both_sides(cfg: ExperimentConfig):
    H = cfg.build_hamiltonian()
    N = cfg.N
    if cfg.model == "integral-file" and "N" in H.metadata and cfg.N == 0:
        N = H.metadata["N"]
    sz2 = cfg.sz2 if cfg.model == "hubbard" else None
    E_exact, psi = exact.ground_state(exact.assemble_sector(H, N, sz2))
    rdms = exact.compute_rdms(psi)
    conds = conditions_from_tokens(cfg.conditions)
    var = vrdm.variational_ground_state(H, N, conds,
                                        SdpConfig(tol=cfg.sdp_tol))
    return H, N, E_exact, psi, rdms, var


def _systems_of(rdm_set) -> dict:
    return {"D": algebra.eigendecompose(rdm_set.D),
            "G": algebra.eigendecompose(rdm_set.G),
            "Q": algebra.eigendecompose(rdm_set.Q)}


def _var_systems(var: vrdm.VariationalResult) -> dict:
    return {"D": algebra.eigendecompose(var.D_var),
            "G": algebra.eigendecompose(var.G_var),
            "Q": algebra.eigendecompose(var.Q_var)}


def _bounds_for(cfg, L, N):
    base = geometry.default_bounds(L, N)
    if not cfg.bounds:
        return base
    fields = asdict(base)
    unknown = set(cfg.bounds) - set(fields)
    if unknown:
        raise ConfigError(f"unknown bound overrides: {sorted(unknown)}")
    fields.update(cfg.bounds)
    return geometry.BoundSet(**fields)


def execute_run(cfg: ExperimentConfig) -> RunOutcome:
    """Run one experiment end to end and write the requested artifacts."""
    cfg.validate()
    outcome = RunOutcome(cfg, {})
    stage = "build"
    try:
        H, N, E_exact, psi, rdms, var = _solve_both_sides(cfg)
        stage = "audit"
        ex_sys = _systems_of(rdms)
        var_sys = _var_systems(var)
        K = fock.reduced_hamiltonian(H, N)
        delta_e = var.E_var - E_exact
        bounds = _bounds_for(cfg, H.L, N)
        var_report = geometry.build_report(
            var_sys, N, cfg.null_tol, bounds,
            es_exact_D=ex_sys["D"], K=K, D_exact=rdms.D, delta_e=delta_e,
            meta={"side": "variational", "system": cfg.system_label(),
                  "conditions": list(cfg.conditions)})
        ex_report = geometry.build_report(
            ex_sys, N, cfg.null_tol, bounds,
            meta={"side": "exact", "system": cfg.system_label()})

        summary = {
            "schema": "rdmgeo.summary/1",
            "system": cfg.system_label(),
            "L": H.L,
            "N": N,
            "E_exact": E_exact,
            "E_var": var.E_var,
            "delta_e": delta_e,
            "null_dims_var": var_report.null_dims,
            "null_dims_exact": ex_report.null_dims,
            "I_alpha": var_report.descriptors.I_alpha,
            "I_beta": var_report.descriptors.I_beta,
            "I_gamma": var_report.descriptors.I_gamma,
            "I_zeta": var_report.descriptors.I_zeta,
            "delta_e_null": var_report.delta_e_null,
            "ratio": var_report.ratio,
            "ratio_reliable": var_report.ratio_reliable,
            "conditions": list(cfg.conditions),
            "sdp_status": var.solver_status,
            "sdp_iterations": var.solution.iterations,
            "ground_state_degeneracy": psi.degeneracy,
        }
        outcome.summary = summary

        stage = "write"
        out = cfg.out_dir
        files = []
        if "summary" in cfg.artifacts:
            _write_atomic(os.path.join(out, "summary.json"),
                          _json_text(summary))
            files.append("summary.json")
            _write_atomic(os.path.join(out, "report_variational.json"),
                          _json_text(var_report.to_json_dict()))
            files.append("report_variational.json")
        if "exact-audit" in cfg.artifacts:
            _write_atomic(os.path.join(out, "report_exact.json"),
                          _json_text(ex_report.to_json_dict()))
            files.append("report_exact.json")
        if "eigenvalues" in cfg.artifacts:
            k = min(cfg.lowest, len(ex_sys["D"].eigenvalues))
            rows = []
            for n in range(k):
                rows.append([
                    n + 1,
                    float(var_sys["D"].eigenvalues[n]),
                    float(ex_sys["D"].eigenvalues[n]),
                    float(var_sys["G"].eigenvalues[n]),
                    float(ex_sys["G"].eigenvalues[n]),
                    float(var_sys["Q"].eigenvalues[n]),
                    float(ex_sys["Q"].eigenvalues[n]),
                ])
            _write_atomic(os.path.join(out, "eigenvalues.csv"), _csv_text(
                ["n", "D_var", "D_exact", "G_var", "G_exact",
                 "Q_var", "Q_exact"], rows))
            files.append("eigenvalues.csv")
        if "figures" in cfg.artifacts:
            files += _write_figures(out, var_report, ex_sys)
        if "rdms" in cfg.artifacts:
            _write_atomic(os.path.join(out, "D_var.rdm"),
                          vrdm.dump_rdm(var.D_var))
            _write_atomic(os.path.join(out, "D_exact.rdm"),
                          vrdm.dump_rdm(rdms.D))
            files += ["D_var.rdm", "D_exact.rdm"]
        manifest = {"schema": "rdmgeo.manifest/1", "status": "ok",
                    "config": _config_dict(cfg), "files": sorted(files)}
        _write_atomic(os.path.join(out, "manifest.json"),
                      _json_text(manifest))
        outcome.files = sorted(files) + ["manifest.json"]
        return outcome
    except Exception as err:
        outcome.failed_stage = stage
        outcome.summary = {"error": f"{type(err).__name__}: {err}",
                           "stage": stage}
        try:
            manifest = {"schema": "rdmgeo.manifest/1", "status": "failed",
                        "stage": stage, "config": _config_dict(cfg),
                        "error": str(err)}
            _write_atomic(os.path.join(cfg.out_dir, "manifest.json"),
                          _json_text(manifest))
        except OSError:
            pass
        return outcome


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["conditions"] = list(d["conditions"])
    d["artifacts"] = list(d["artifacts"])
    return d


def _write_figures(out, var_report, ex_sys):
    files = []
    if len(var_report.projection):
        rows = [[n + 1, float(ex_sys["D"].eigenvalues[n]), float(p)]
                for n, p in enumerate(var_report.projection)]
        _write_atomic(os.path.join(out, "fig1a_projection.csv"), _csv_text(
            ["n", "eigenvalue_exact", "projection_length"], rows))
        files.append("fig1a_projection.csv")
    for fam, fname in (("gg", "fig2a_closure_gg.csv"),
                       ("qd", "fig2b_closure_qd.csv"),
                       ("gd", "fig2c_closure_gd.csv"),
                       ("gq", "fig2x_closure_gq.csv")):
        grid = var_report.closure_grids[fam]
        rows = [[m + 1, n + 1, float(grid[m, n])]
                for m in range(grid.shape[0]) for n in range(grid.shape[1])]
        _write_atomic(os.path.join(out, fname),
                      _csv_text(["m", "n", "length"], rows))
        files.append(fname)
    beta = var_report.delta_grids["beta"]
    rows = [[m + 1, n + 1, float(beta[m, n])]
            for m in range(beta.shape[0]) for n in range(beta.shape[1])]
    _write_atomic(os.path.join(out, "fig3_delta_beta.csv"),
                  _csv_text(["m", "n", "delta_beta"], rows))
    files.append("fig3_delta_beta.csv")
    return files


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------

def execute_sweep(cfg: ExperimentConfig, parameter: str, values,
                  jobs: int = 1) -> RunOutcome:
    """Sweep one config parameter; one aggregated CSV row per value.

    Per-point failures are recorded in-row and the sweep continues.
    """
    if not values:
        raise ConfigError("sweep needs a nonempty parameter list")
    if parameter not in _KNOWN_KEYS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    points = []
    for v in values:
        d = _config_dict(cfg)
        d[parameter] = v
        d["artifacts"] = []
        sub = ExperimentConfig.from_dict(d)
        sub.out_dir = os.path.join(cfg.out_dir,
                                   f"point-{parameter}-{v:g}")
        points.append((v, sub))

    def one(point):
        v, sub = point
        return v, execute_run(sub)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]

    header = [parameter, "E_exact", "E_var", "delta_e", "delta_e_null",
              "ratio", "I_alpha", "I_beta", "I_gamma", "I_zeta",
              "null_D", "null_G", "null_Q", "status"]
    rows = []
    summaries = {}
    for v, res in results:
        if res.ok:
            s = res.summary
            rows.append([v, float(s["E_exact"]), float(s["E_var"]),
                         float(s["delta_e"]),
                         float(s["delta_e_null"]),
                         float(s["ratio"]) if s["ratio"] is not None
                         and np.isfinite(s["ratio"]) else "",
                         float(s["I_alpha"]), float(s["I_beta"]),
                         float(s["I_gamma"]), float(s["I_zeta"]),
                         s["null_dims_var"]["D"], s["null_dims_var"]["G"],
                         s["null_dims_var"]["Q"], "ok"])
            summaries[repr(float(v))] = s
        else:
            rows.append([v] + [""] * (len(header) - 2)
                        + [f"failed:{res.failed_stage}"])
            summaries[repr(float(v))] = res.summary
    csv_text = _csv_text(header, rows)
    _write_atomic(os.path.join(cfg.out_dir, "sweep.csv"), csv_text)
    manifest = {"schema": "rdmgeo.manifest/1",
                "status": "ok" if all(r.ok for _, r in results)
                else "partial",
                "sweep": {"parameter": parameter,
                          "values": [float(v) for v in values]},
                "config": _config_dict(cfg),
                "files": ["sweep.csv"]}
    _write_atomic(os.path.join(cfg.out_dir, "manifest.json"),
                  _json_text(manifest))
    out = RunOutcome(cfg, {"sweep": summaries})
    out.files = ["sweep.csv", "manifest.json"]
    if manifest["status"] != "ok":
        out.failed_stage = "sweep-point"
    return out


# ---------------------------------------------------------------------------
# external RDM audit
# ---------------------------------------------------------------------------

def audit_rdm_file(d_path: str, null_tol: float = 1e-9,
                   bounds: dict | None = None) -> dict:
    """Audit an externally supplied D matrix file (G, Q derived from it)."""
    with open(d_path) as fh:
        D = vrdm.load_rdm(fh.read())
    if D.kind != "D":
        raise ConfigError(f"{d_path} holds a {D.kind} matrix, expected D")
    N = D.N
    gamma = algebra.one_rdm_from_d(D, N)
    systems = {"D": algebra.eigendecompose(D),
               "G": algebra.eigendecompose(algebra.g_from_d(D, gamma)),
               "Q": algebra.eigendecompose(algebra.q_from_d(D, gamma, D.L))}
    bset = geometry.default_bounds(D.L, N)
    if bounds:
        fields = asdict(bset)
        fields.update(bounds)
        bset = geometry.BoundSet(**fields)
    report = geometry.build_report(systems, N, null_tol, bset,
                                   meta={"side": "external",
                                         "source": os.path.basename(d_path)})
    return report.to_json_dict()
