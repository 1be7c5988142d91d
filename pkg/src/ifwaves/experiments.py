"""Desk-scale experiment drivers reproducing the study's figures as data.

Each driver writes a bundle directory: a config snapshot, CSV/JSON outputs
and a checksum manifest. Output is plotting-tool-agnostic; no images are
rendered. Scale caps (spike count, network size, horizon) keep runs at
desk scale; the method is identical at larger scale.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import (ContinuationOptions, continue_branch, grazing_scaling_study,
                           solve_grazing)
from .errors import ConfigError
from .io import write_csv, write_json, write_manifest
from .model import ModelParams, Domain, Stimulus, save_config
from .profiles import profile_nu, profile_sigma
from .simulate import simulate, track_levelset
from .solver import seed_composite, solve_wave, wave_family
from .stability import RootWindow

__all__ = ["ExperimentSpec", "run_experiment", "EXPERIMENTS"]


@dataclass(frozen=True)
class Scale:
    m_max: int = 30
    n: int = 1000
    horizon: float = 40.0


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    overrides: dict = field(default_factory=dict)
    scale: Scale = field(default_factory=Scale)

    def params(self, **defaults) -> ModelParams:
        base = ModelParams(**defaults) if defaults else ModelParams()
        merged = base.to_dict()
        for section, vals in self.overrides.items():
            if section not in merged:
                raise ConfigError(f"unknown override section {section!r}")
            merged[section].update(vals)
        return ModelParams.from_dict(merged)


def _events_csv(path, traj):
    write_csv(path, ["time", "neuron", "ordinal"],
              [(e.time, e.neuron, e.ordinal) for e in traj.events])


def _snapshots_csv(out_dir, name, traj):
    if traj.sample_times is None:
        return
    head = ["time"] + [f"x{k}" for k in range(traj.positions.size)]
    write_csv(out_dir / f"{name}_v.csv", head,
              [(t, *v) for t, v in zip(traj.sample_times, traj.v_samples)])
    write_csv(out_dir / f"{name}_s.csv", head,
              [(t, *s) for t, s in zip(traj.sample_times, traj.s_samples)])


def _profile_csv(path, wave, p, span, count=2001):
    xs = np.linspace(span[0], span[1], count)
    nu = profile_nu(xs, wave, p)
    sg = profile_sigma(xs, wave, p)
    write_csv(path, ["xi", "nu", "sigma"], zip(xs, nu, sg))


def _branch_csv(out_dir, name, branch):
    m = branch.m
    head = ["beta", "c"] + [f"T{j+2}" for j in range(m - 1)] + \
        ["residual", "validated", "grazing_monitor", "leading_re", "leading_im"]
    rows = []
    for pt in branch.points:
        rows.append((pt.beta, pt.wave.c, *pt.wave.T[1:], pt.residual,
                     int(pt.validated),
                     pt.grazing_monitor if pt.grazing_monitor is not None else np.nan,
                     pt.leading_re if pt.leading_re is not None else np.nan,
                     pt.leading_im if pt.leading_im is not None else np.nan))
    write_csv(out_dir / f"{name}.csv", head, rows)
    write_json(out_dir / f"{name}_events.json", {
        "termination": branch.termination,
        "events": [{"kind": e.kind, "beta": e.beta, "wave": e.wave.to_dict(),
                    "data": {k: v for k, v in e.data.items()}} for e in branch.events],
    })


def exp_fig2_bump(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Standing and wandering bumps from a transient stimulus."""
    files = {}
    for label, beta in (("a", 1.0), ("b", 3.5)):
        p = spec.params(beta=beta, stimulus=Stimulus(d1=2.0, d2=10.0, tau_ext=2.0),
                        domain=Domain(L=1.0, n=min(80, spec.scale.n)))
        traj = simulate({"v0": np.full(p.domain.n, 0.5), "s0": np.zeros(p.domain.n)},
                        p, horizon=min(30.0, spec.scale.horizon), sampling_dt=0.25)
        _events_csv(out / f"bump_{label}_events.csv", traj)
        _snapshots_csv(out, f"bump_{label}", traj)
        files[label] = len(traj.events)
    return files


def exp_fig3_waves(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Coexisting travelling structures under different transient stimuli.

    Both runs start from the same (fixed-seed) random subthreshold state,
    so the differing front counts are attributable to the stimulus alone.
    """
    from .simulate import count_fronts

    horizon = min(40.0, spec.scale.horizon)
    stats = {}
    n = min(80, spec.scale.n)
    v0 = np.random.default_rng(0).uniform(0.0, 1.0, n) * 0.999
    for label, (d1, d2) in (("a", (0.4, 12.0)), ("b", (2.0, 10.0))):
        p = spec.params(beta=4.5, stimulus=Stimulus(d1=d1, d2=d2, tau_ext=2.0),
                        domain=Domain(L=1.0, n=n))
        traj = simulate({"v0": v0, "s0": np.zeros(n)}, p,
                        horizon=horizon, sampling_dt=0.25)
        _events_csv(out / f"waves_{label}_events.csv", traj)
        entry = {"fronts": count_fronts(traj, (horizon - 15.0, horizon),
                                        gap_threshold=2.0)}
        try:
            _, st, _ = track_levelset(traj, 0.1, t_window=(horizon - 15.0, horizon))
            entry.update(st.to_dict())
        except Exception as exc:
            entry["error"] = str(exc)
        stats[label] = entry
    write_json(out / "waves_speed_stats.json", stats)
    return stats


def exp_fig4_profiles(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Voltage and synaptic profiles of a 5-spike and a larger-m wave."""
    p5 = spec.params(beta=4.5)
    fam = wave_family(p5, 5)
    rec5 = fam[5]
    _profile_csv(out / "profile_tw5.csv", rec5.wave, p5, (-0.5, 1.0))
    write_json(out / "wave_tw5.json", rec5.to_dict())
    m_big = min(20, spec.scale.m_max)
    p20 = spec.params(beta=7.7)
    fam20 = wave_family(p20, m_big)
    rec20 = fam20[max(fam20)]
    _profile_csv(out / f"profile_tw{max(fam20)}.csv", rec20.wave, p20, (-1.5, 2.0))
    write_json(out / f"wave_tw{max(fam20)}.json", rec20.to_dict())
    return {"tw5_c": rec5.wave.c, "big_m": max(fam20), "big_c": rec20.wave.c}


def exp_fig5_tw3_branch(spec: ExperimentSpec, out: Path, threads: int = 1):
    """The 3-spike branch: grazing birth and the Hopf cascade."""
    p = spec.params(beta=10.0)
    rec = wave_family(p, 3)[3]
    win = RootWindow(re_min=-1.5, re_max=0.8, im_max=40.0)
    down = continue_branch(rec, p, ContinuationOptions(
        direction=-1, step=0.25, max_points=150, beta_min=0.5, beta_max=25.0,
        stability_every=1, stability_grid=(41, 161), stability_window=win))
    up = continue_branch(rec, p, ContinuationOptions(
        direction=1, step=0.25, max_points=80, beta_min=0.5, beta_max=19.5,
        stability_every=1, stability_grid=(41, 161), stability_window=win))
    _branch_csv(out, "tw3_down", down)
    _branch_csv(out, "tw3_up", up)
    summary = {
        "grazing": [e.beta for e in down.events if e.kind == "grazing"],
        "hopf": [e.beta for e in up.events if e.kind == "hopf"],
    }
    write_json(out / "tw3_summary.json", summary)
    return summary


def exp_fig6_nested(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Nested branches: the higher the spike count, the slower the wave."""
    p = spec.params(beta=10.0)
    m_top = min(6, spec.scale.m_max)
    fam = wave_family(p, m_top)

    def run_branch(m):
        br = continue_branch(fam[m], p, ContinuationOptions(
            direction=-1, step=0.3, max_points=100, beta_min=0.4, beta_max=25.0,
            stability_every=None))
        return m, br

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        branches = dict(ex.map(lambda m: run_branch(m), sorted(fam)))
    rows = []
    for m, br in sorted(branches.items()):
        _branch_csv(out, f"tw{m}_branch", br)
        for pt in br.points:
            rows.append((m, pt.beta, pt.wave.c, int(pt.validated)))
    write_csv(out / "nested_branches.csv", ["m", "beta", "c", "validated"], rows)
    return {"speeds_at_common_beta": {m: fam[m].wave.c for m in sorted(fam)}}


def exp_fig7_grazing(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Grazing-point scalings and the emergent gain curve."""
    p = spec.params(beta=4.5)
    rec2 = wave_family(p, 2)[2]
    br = continue_branch(rec2, p, ContinuationOptions(
        direction=-1, step=0.25, max_points=120, beta_min=0.3, stability_every=None))
    ev = [e for e in br.events if e.kind == "grazing"]
    if not ev:
        raise RuntimeError("two-spike branch did not terminate at a grazing point")
    gp2 = solve_grazing(ev[0].wave, ev[0].data["T_G"], ev[0].beta, p)
    rows, gp_last, gain, err = grazing_scaling_study(p, spec.scale.m_max, gp2)
    write_csv(out / "grazing_scaling.csv", ["m", "beta_G", "c", "T_m", "width"], rows)
    write_csv(out / "gain_curve.csv", ["position", "rate"], gain)
    arr = np.asarray(rows)
    sel = arr[:, 0] >= max(6, arr[0, 0])
    slopes = {
        "c_exponent": float(np.polyfit(np.log(arr[sel, 0]), np.log(arr[sel, 2]), 1)[0]),
        "T_m_exponent": float(np.polyfit(np.log(arr[sel, 0]), np.log(arr[sel, 3]), 1)[0]),
        "chain_error": err,
        "last_m": int(arr[-1, 0]),
    }
    write_json(out / "scaling_summary.json", slopes)
    return slopes


def exp_fig8_bump_stats(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Speed statistics of the bump regime seeded from a slow unstable wave."""
    m_seed = min(30, spec.scale.m_max)
    p0 = spec.params(beta=4.5)
    rec2 = wave_family(p0, 2)[2]
    br = continue_branch(rec2, p0, ContinuationOptions(
        direction=-1, step=0.25, max_points=120, beta_min=0.3, stability_every=None))
    ev = [e for e in br.events if e.kind == "grazing"][0]
    gp2 = solve_grazing(ev.wave, ev.data["T_G"], ev.beta, p0)
    rows, gp_last, _, err = grazing_scaling_study(p0, m_seed, gp2)
    if gp_last.wave.m < m_seed:
        raise RuntimeError(f"bootstrap stopped early: {err}")

    betas = sorted(self_beta for self_beta in (2.6, 2.9, 3.2))
    results = []
    wave = gp_last.wave
    beta_now = gp_last.beta
    n = min(spec.scale.n, 1000)
    for beta in betas:
        # walk the wave to the target rate
        steps = np.linspace(beta_now, beta, 8)[1:]
        rec = None
        for b in steps:
            rec = solve_wave(wave.m, wave, p0.with_(beta=float(b)))
            wave = rec.wave
        beta_now = beta
        p = p0.with_(beta=beta, domain=Domain(L=3.0, n=n))
        traj = simulate(rec, p, horizon=min(30.0, spec.scale.horizon), sampling_dt=0.1)
        _, st, skipped = track_levelset(traj, 0.1, t_window=(5.0, min(30.0, spec.scale.horizon)))
        results.append({"beta": beta, **st.to_dict(), "skipped": skipped,
                        "events": len(traj.events)})
    write_csv(out / "bump_speed_stats.csv",
              ["beta", "c_bar", "sigma_c", "c_min", "c_max"],
              [(r["beta"], r["c_bar"], r["sigma_c"], r["c_min"], r["c_max"]) for r in results])
    write_json(out / "bump_speed_stats.json", results)
    return results


def exp_fig9_composite(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Composite waves: grouped spikes travelling at a common reduced speed."""
    p = spec.params(beta=10.0)
    fam = wave_family(p, 3)
    guess = seed_composite([fam[3].wave, fam[2].wave, fam[1].wave], [4.0, 4.0])
    rec = solve_wave(guess.m, guess, p)
    write_json(out / "composite_wave.json", rec.to_dict())
    _profile_csv(out / "composite_profile.csv", rec.wave, p,
                 (-0.5, rec.wave.c * rec.wave.T[-1] + 1.0))
    gaps = np.diff(rec.wave.T)
    core = min(gaps[0], gaps[1])
    return {"m": rec.wave.m, "c": rec.wave.c, "leading_c": fam[3].wave.c,
            "validated": rec.validated,
            "slower_than_leading": bool(rec.wave.c < fam[3].wave.c),
            "grouped": bool(gaps[2] > 2 * core and gaps[4] > 2 * core)}


def exp_figS1_excitatory(spec: ExperimentSpec, out: Path, threads: int = 1):
    """Purely excitatory kernel: folds instead of grazings, speeds grow with m."""
    base = spec.params(a1=2.0, a2=0.0, b1=5.0, I=0.82, beta=5.0)
    fam = wave_family(base, min(4, spec.scale.m_max), speed_trend="up")
    rows, folds = [], {}
    for m, rec in sorted(fam.items()):
        br = continue_branch(rec, base, ContinuationOptions(
            direction=-1, step=0.2, max_points=80, beta_min=0.3, beta_max=12.0,
            stability_every=None))
        for pt in br.points:
            rows.append((m, pt.beta, pt.wave.c, int(pt.validated)))
        folds[m] = [e.beta for e in br.events if e.kind == "fold"]
    write_csv(out / "excitatory_branches.csv", ["m", "beta", "c", "validated"], rows)
    write_json(out / "excitatory_folds.json", folds)
    return {"speeds": {m: fam[m].wave.c for m in sorted(fam)}, "folds": folds}


EXPERIMENTS = {
    "fig2-bump": exp_fig2_bump,
    "fig3-waves": exp_fig3_waves,
    "fig4-profiles": exp_fig4_profiles,
    "fig5-tw3-branch": exp_fig5_tw3_branch,
    "fig6-nested": exp_fig6_nested,
    "fig7-grazing": exp_fig7_grazing,
    "fig8-bump-stats": exp_fig8_bump_stats,
    "fig9-composite": exp_fig9_composite,
    "figS1-excitatory": exp_figS1_excitatory,
}


def run_experiment(spec: ExperimentSpec, out_dir, threads: int = 1,
                   seedless: bool = False) -> dict:
    """Dispatch one experiment and write its bundle under out_dir.

    All drivers are deterministic (any randomness is fixed-seeded);
    ``seedless`` records that assertion in the manifest.
    """
    if spec.kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {spec.kind!r}; "
                          f"choose from {sorted(EXPERIMENTS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.json", spec.params(), numerics={
        "kind": spec.kind, "m_max": spec.scale.m_max,
        "n": spec.scale.n, "horizon": spec.scale.horizon,
    })
    try:
        summary = EXPERIMENTS[spec.kind](spec, out, threads)
    except Exception as exc:
        raise type(exc)(f"experiment {spec.kind} failed: {exc}") from exc
    write_json(out / "summary.json", summary)
    write_manifest(out, extra={"experiment": spec.kind, "seedless": seedless})
    return summary
