"""Command-line experiments: ``arraycavity <command> --config FILE [--out DIR]``.

Exit codes: 0 success, 2 configuration or argument error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
import scipy
import yaml
from pydantic import ValidationError
from threadpoolctl import threadpool_limits

from . import __version__
from .analytic import collective_linewidth, estimates, stark_waist
from .config import DynamicsConfig, ExperimentConfig, load_config
from .dynamics import (EigenPropagator, RamanConfig, evolve, exchange_fidelity, fidelity_prediction,
                       lambda_hamiltonian, matched_raman, raman_effective, transfer_fidelity)
from .errors import DomainError, InvalidArgument, NumericalFailure
from .geometry import (GaussianBeam, add_targets, build_cavity, build_square_array, curve_mirror,
                       empty_layout, stark_detuning_profile)
from .interaction import assemble_hamiltonian
from .modes import (cavity_params, couple_strengths, eigenmodes, fit_mode_waist,
                    identify_by_gaussian_overlap, modes_table, rank_modes)
from .motion import ModeExtractor, fast_motion_params, frozen_average, lamb_dicke_sigma
from .scattering import (cavity_transmission_spectrum, fabry_perot, far_field_pattern,
                         mirror_coefficients, mirror_response)
from .spectral import background_self_energy, self_energy

log = logging.getLogger("arraycavity")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(Exception):
    pass


# -- helpers ------------------------------------------------------------------------

def write_csv(path: Path, header: list[str], rows) -> None:
    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return str(int(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, data) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, complex):
            return [o.real, o.imag]
        raise TypeError(type(o))

    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=default) + "\n")


def build_layout(cfg: ExperimentConfig, with_targets: bool = True, **override):
    g = cfg.geometry
    if g is None:
        lay = empty_layout()
    else:
        p = g.model_dump()
        p.update({k: v for k, v in override.items() if k in ("a", "N", "L", "w0")})
        N = int(p["N"])
        w0 = None if (p["flat"] and "w0" not in override) else p["w0"]
        if g.single_mirror:
            lay = build_square_array(N, p["a"], p["L"] / 2.0)
            lay.L = float(p["L"])
            if w0 is not None:
                lay = curve_mirror(lay, w0, p["L"])
        else:
            lay = build_cavity(N, p["a"], p["L"], w0)
        if g.stark is not None:
            alpha = override.get("alpha", g.stark.alpha)
            lay = stark_detuning_profile(lay, alpha, g.stark.w_stark)
    if with_targets:
        for t in cfg.targets:
            lay = add_targets(lay, [t.position], linewidth=t.gamma_a,
                              detuning=0.0 if t.detuning is None else t.detuning)
    lay.validate()
    return lay


def probe_waist(cfg: ExperimentConfig, override_w0: Optional[float] = None) -> float:
    if cfg.beam is not None:
        return cfg.beam.w0
    if override_w0 is not None:
        return override_w0
    if cfg.geometry is not None and cfg.geometry.w0 is not None:
        return cfg.geometry.w0
    raise ConfigError("beam.w0 is required for flat mirrors")


def frequency_grid(cfg: ExperimentConfig, default, center: float = 0.0) -> np.ndarray:
    gr = cfg.grid
    if gr is None:
        start, stop, num, rel = default[0], default[1], default[2], True
    else:
        start, stop, num, rel = gr.start, gr.stop, gr.num, gr.relative_to_cavity
    off = center if rel else 0.0
    return np.linspace(start + off, stop + off, num)


def refine_grid(omega: np.ndarray, center: float, kappa: float) -> np.ndarray:
    """Add points spaced kappa/10 within 5 kappa of a narrow resonance."""
    if not kappa > 0:
        return omega
    dense = center + np.arange(-50, 51) * kappa / 10.0
    return np.unique(np.concatenate([omega, dense]))


def require_geometry(cfg):
    if cfg.geometry is None:
        raise ConfigError("this command needs a geometry section")


def require_targets(cfg, n=1):
    if len(cfg.targets) < n:
        raise ConfigError(f"this command needs at least {n} target atom(s)")


# -- commands ---------------------------------------------------------------------

def cmd_spectrum(cfg: ExperimentConfig, out: Path) -> dict:
    require_targets(cfg)
    lay = build_layout(cfg)
    blocks = assemble_hamiltonian(lay)
    summary: dict = {}
    lam = None
    g2c = 0j
    if blocks.n_array:
        modes = eigenmodes(blocks.H_AA)
        g2 = couple_strengths(modes, blocks.H_TA[0], blocks.H_AT[:, 0])
        cp = cavity_params(blocks, modes=modes)
        lam, g2c = modes.values[cp.mode_index], cp.g2
        order = rank_modes(modes, g2)
        summary.update(g=cp.g, kappa=cp.kappa, omega_c=cp.omega_c, gamma_3d=cp.gamma_3d,
                       gamma_3d_reliable=cp.gamma_3d_reliable, cooperativity=cp.cooperativity,
                       splitting=float(abs(modes.omega[order[1]] - modes.omega[order[0]]))
                       if len(order) > 1 else None)
        rows = modes_table(modes, g2)
        write_csv(out / "modes.csv", ["re_lambda", "im_lambda", "re_g2", "im_g2", "g2_over_kappa"],
                  ([r["re_lambda"], r["im_lambda"], r["re_g2"], r["im_g2"], r["g2_over_kappa"]]
                   for r in rows))
        omega = frequency_grid(cfg, (-0.5, 1.0, 601), 0.0)
        omega = refine_grid(omega, cp.omega_c, cp.kappa)
    else:
        omega = frequency_grid(cfg, (-5.0, 5.0, 201), 0.0)
    curve = self_energy(blocks, omega)
    A = curve.A
    A_sub = A if lam is None else A + 2.0 * (g2c / (omega - lam)).imag
    write_csv(out / "spectrum.csv", ["omega", "re_sigma", "im_sigma", "A", "A_subtracted"],
              zip(omega, curve.sigma.real, curve.sigma.imag, A, A_sub))
    return summary


def _mirror_R_at(lay, w0: float, omega: float) -> float:
    """Reflectance of the +z mirror of a cavity, probed from inside at ``omega``."""
    m = lay.without_targets().mirror(1)
    return mirror_coefficients(m, GaussianBeam(w0), omega, direction=+1).R


def cmd_cavity_params(cfg: ExperimentConfig, out: Path) -> dict:
    require_geometry(cfg)
    require_targets(cfg)
    g = cfg.geometry
    if cfg.sweep is None:
        sweep = [(None, None)]
    else:
        if cfg.sweep.variable not in ("w0", "a", "L", "N"):
            raise ConfigError("cavity-params sweeps w0, a, L or N")
        sweep = [(cfg.sweep.variable, v) for v in cfg.sweep.values]
    rows = []
    for var, val in sweep:
        over = {} if var is None else {var: val}
        lay = build_layout(cfg, **over)
        blocks = assemble_hamiltonian(lay)
        cp = cavity_params(blocks)
        a = over.get("a", g.a)
        L = over.get("L", g.L)
        w0 = over.get("w0", g.w0)
        gamma_a = cfg.targets[0].gamma_a
        w_probe = probe_waist(cfg, w0)
        R = _mirror_R_at(lay, w_probe, cp.omega_c)
        est = estimates(a, L, w_probe, gamma_a=gamma_a, R_mirror=min(R, 1 - 1e-15))
        rows.append([w0 if w0 is not None else float("nan"), a, L, over.get("N", g.N), cp.g, cp.kappa,
                     cp.omega_c, cp.gamma_3d, cp.gamma_3d_reliable, cp.cooperativity, est.g_est,
                     est.kappa_est, R])
    write_csv(out / "params.csv", ["w0", "a", "L", "N", "g", "kappa", "omega_c", "gamma3d",
                                   "gamma3d_reliable", "C", "g_est", "kappa_est", "R_mirror"], rows)
    return {"n_rows": len(rows)}


def cmd_transmission(cfg: ExperimentConfig, out: Path) -> dict:
    require_geometry(cfg)
    lay = build_layout(cfg)
    bare = lay.without_targets()
    w0 = probe_waist(cfg)
    beam = GaussianBeam(w0)
    bare_blocks = assemble_hamiltonian(bare)
    modes = eigenmodes(bare_blocks.H_AA)
    ic = identify_by_gaussian_overlap(modes, bare, w0)
    wc = float(modes.omega[ic])
    omega = refine_grid(frequency_grid(cfg, (-0.3, 0.3, 301), wc), wc, float(modes.kappa[ic]))
    trans = cavity_transmission_spectrum(lay, beam, omega)
    single = mirror_response(bare.mirror(1), beam, omega, direction=+1)
    T_fp = fabry_perot(single.r * np.exp(-1j * 2 * np.pi * bare.L), single.t, bare.L)
    write_csv(out / "transmission.csv", ["omega", "T_cav", "R_cav", "S_cav", "T_fabry_perot"],
              zip(omega, trans.T, trans.R, trans.S, T_fp))
    theta = np.linspace(0.0, np.pi, 721)
    amps = np.zeros(len(bare), complex)
    amps[:] = modes.right[:, ic]
    inten = far_field_pattern(amps, bare, theta)
    write_csv(out / "far_field.csv", ["theta", "intensity"], zip(theta, inten))
    k = int(np.argmax(trans.T))
    return {"omega_c": wc, "kappa": float(modes.kappa[ic]), "peak_omega": float(omega[k]),
            "peak_T": float(trans.T[k])}


def cmd_mirror(cfg: ExperimentConfig, out: Path) -> dict:
    require_geometry(cfg)
    lay = build_layout(cfg, with_targets=False)
    if not cfg.geometry.single_mirror:
        lay = lay.mirror(1)
    beam = GaussianBeam(probe_waist(cfg))
    omega = frequency_grid(cfg, (-2.0, 2.0, 201), 0.0)
    resp = mirror_response(lay, beam, omega, direction=+1)
    write_csv(out / "mirror.csv", ["omega", "R", "T", "S", "r_re", "r_im", "t_re", "t_im"],
              zip(omega, resp.R, resp.T, resp.S, resp.r.real, resp.r.imag, resp.t.real, resp.t.imag))
    k = int(np.argmax(resp.R))
    return {"peak_omega": float(omega[k]), "peak_R": float(resp.R[k]),
            "Gamma0": collective_linewidth(cfg.geometry.a)}


def cmd_dynamics(cfg: ExperimentConfig, out: Path) -> dict:
    require_geometry(cfg)
    dyn = cfg.dynamics or DynamicsConfig()
    require_targets(cfg, 2 if dyn.protocol == "exchange" else 1)
    lay = build_layout(cfg)
    blocks = assemble_hamiltonian(lay)
    modes = eigenmodes(blocks.H_AA)
    cp = cavity_params(blocks, modes=modes)
    lam = modes.values[cp.mode_index]
    shift = background_self_energy(blocks, lam, cp.g2).real
    gamma_a = cfg.targets[0].gamma_a
    n_t = blocks.n_target
    rs = cfg.targets[0].raman
    if rs is not None and rs.Omega is not None:
        if rs.Delta1 is None:
            raise ConfigError("raman.Delta1 is required when Omega is given")
        raman = RamanConfig(rs.Omega, rs.Delta1, rs.Delta2 if rs.Delta2 is not None else rs.Delta1)
    else:
        D1 = rs.Delta1 if (rs is not None and rs.Delta1 is not None) else dyn.delta_factor * gamma_a
        raman = matched_raman(cp.g, cp.kappa, cp.gamma_3d, D1, n_targets=n_t, lamb_shift=shift)
    eff = raman_effective(raman, cp.g, cp.gamma_3d, cp.kappa)
    system = lambda_hamiltonian(blocks, raman, cp.omega_c, modes.right[:, cp.mode_index])
    prop = EigenPropagator(system.H)
    if dyn.protocol == "exchange":
        t_ref = np.pi / (np.sqrt(2.0) * eff.g_eff)
        F, traj = exchange_fidelity(system, t_max=dyn.t_max_factor * t_ref, n_t=dyn.n_t,
                                    propagator=prop)
        pred = fidelity_prediction(cp.cooperativity, "exchange")
    else:
        t_ref = np.pi / (2.0 * eff.g_eff)
        t = np.linspace(0.0, dyn.t_max_factor * t_ref, dyn.n_t)
        traj = evolve(system, system.basis_state("dressed_g2", 0), t, propagator=prop)
        F = transfer_fidelity(traj.cavity_population())
        pred = fidelity_prediction(cp.cooperativity, "single")
    probes = [system.basis_state("dressed_g2", j).conj() for j in range(n_t)]
    cols = [traj.t]
    header = ["t"]
    for j in range(n_t):
        header += [f"e_{j}", f"g2_{j}"]
        cols += [traj.e_population(j), np.abs(traj.psi @ probes[j]) ** 2]
    header += ["cavity", "array"]
    cols += [traj.cavity_population(), traj.array_population()]
    write_csv(out / "dynamics.csv", header, zip(*cols))
    return {"protocol": dyn.protocol, "fidelity": F, "prediction": pred,
            "cooperativity": cp.cooperativity, "g_eff": eff.g_eff, "gamma_eff": eff.gamma_eff,
            "Omega": raman.Omega, "Delta1": raman.Delta1, "Delta2": raman.Delta2,
            "t_reference": t_ref}


def _sigma_values(cfg: ExperimentConfig, a: float) -> list:
    m = cfg.motion
    if cfg.sweep is not None:
        if cfg.sweep.variable != "sigma":
            raise ConfigError("motion sweeps sigma")
        return list(cfg.sweep.values)
    if m.sigma is not None:
        return [m.sigma] if not isinstance(m.sigma, list) else list(m.sigma)
    if m.trap is not None:
        return [lamb_dicke_sigma(m.trap.V0_over_Er, a)]
    raise ConfigError("motion needs sigma, trap or a sigma sweep")


def cmd_motion(cfg: ExperimentConfig, out: Path, seed: Optional[int] = None) -> dict:
    require_geometry(cfg)
    require_targets(cfg)
    if cfg.motion is None:
        raise ConfigError("this command needs a motion section")
    m = cfg.motion
    seed = m.seed if seed is None else seed
    ideal = build_layout(cfg)
    blocks = assemble_hamiltonian(ideal)
    cp = cavity_params(blocks)
    lam = complex(cp.omega_c, -cp.kappa / 2)
    mask = np.array([c in m.axes for c in "xyz"], float)
    rows = []
    for s in _sigma_values(cfg, cfg.geometry.a):
        if m.regime == "fast":
            res = fast_motion_params(ideal, float(s), ModeExtractor())
            rows.append([s, m.axes, res["g"], 0.0, res["kappa"], 0.0, 1])
        else:
            sig = float(s) * mask
            avg = frozen_average(ideal, sig, m.n_realizations, seed, ModeExtractor(shift=lam),
                                 include_targets=m.include_targets)
            rows.append([s, m.axes, avg.mean.get("g", np.nan), avg.stderr.get("g", np.nan),
                         avg.mean.get("kappa", np.nan), avg.stderr.get("kappa", np.nan), avg.n_ok])
    write_csv(out / "motion.csv", ["sigma", "axis_mask", "mean_g", "se_g", "mean_kappa", "se_kappa",
                                   "n_ok"], rows)
    return {"ideal_g": cp.g, "ideal_kappa": cp.kappa, "seed": seed}


def cmd_stark(cfg: ExperimentConfig, out: Path) -> dict:
    require_geometry(cfg)
    g = cfg.geometry
    if not g.flat or g.stark is None:
        raise ConfigError("stark needs flat mirrors and a geometry.stark section")
    if cfg.sweep is not None and cfg.sweep.variable != "alpha":
        raise ConfigError("stark sweeps alpha")
    alphas = cfg.sweep.values if cfg.sweep is not None else [g.stark.alpha]
    Gamma0 = collective_linewidth(g.a)
    rows = []
    for alpha in alphas:
        lay = build_layout(cfg, alpha=alpha)
        blocks = assemble_hamiltonian(lay)
        modes = eigenmodes(blocks.H_AA)
        w_pred = stark_waist(g.L, g.stark.w_stark, alpha, Gamma0) if alpha > 0 else float("inf")
        if blocks.n_target:
            cp = cavity_params(blocks, modes=modes)
            idx, gval = cp.mode_index, cp.g
        else:
            bare = lay.without_targets()
            guess = w_pred if np.isfinite(w_pred) else 0.25 * g.N * g.a
            idx, gval = identify_by_gaussian_overlap(modes, bare, guess), float("nan")
        w_fit = fit_mode_waist(modes.right[:, idx], lay, mirror=1)
        gamma_a = cfg.targets[0].gamma_a if cfg.targets else 1.0
        g_est = estimates(g.a, g.L, w_fit, gamma_a=gamma_a).g_est
        rows.append([alpha, w_fit, w_pred, gval, g_est, float(modes.kappa[idx]),
                     float(modes.omega[idx])])
    write_csv(out / "stark.csv", ["alpha", "w0_fit", "w0_pred", "g", "g_est", "kappa", "omega_c"],
              rows)
    return {"n_rows": len(rows)}


COMMANDS = {
    "spectrum": cmd_spectrum,
    "cavity-params": cmd_cavity_params,
    "transmission": cmd_transmission,
    "dynamics": cmd_dynamics,
    "motion": cmd_motion,
    "stark": cmd_stark,
    "mirror": cmd_mirror,
}


def _manifest(command: str, cfg: ExperimentConfig, seed, argv, summary) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "config": cfg.model_dump(mode="json"),
        "seed": seed,
        "versions": {"arraycavity": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "summary": summary,
    }


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arraycavity",
                                description="Atom-array cavity experiments; results are written as CSV.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML or JSON experiment file")
    p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    p.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides motion.seed)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except (ValidationError, yaml.YAMLError, json.JSONDecodeError, OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    func = COMMANDS[args.command]
    seed = args.seed if args.seed is not None else (cfg.motion.seed if cfg.motion else None)
    try:
        with threadpool_limits(limits=args.threads), warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "motion":
                summary = func(cfg, out, seed=args.seed)
            else:
                summary = func(cfg, out)
    except (ConfigError, InvalidArgument, DomainError) as exc:
        print(f"config error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_json(out / "manifest.json", _manifest(args.command, cfg, seed, argv, summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
