"""Command-line driver: simulate, reconstruct, tune, train, evaluate, report, run.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data or file, 5 numerical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .core import MultiCoilKSpace, ReconProblem, SamplingMask, SensitivityMaps
from .forward_model import estimate_sensitivities
from .metrics import (FULL_REFERENCE, NO_REFERENCE, MetricReport, center_crop, significant,
                      wilcoxon_signed_rank)
from .metrics.fullref import FeatureExtractor
from .metrics.stats import BONFERRONI_ALPHA
from .networks import DecoderArch, UNetArch
from .simulation import (KINDS, acquire, echo_train_schedule, make_phantom, poisson_disk_mask,
                         simulate_coils, variable_density_mask)
from .solvers import (CgConfig, CsConfig, SsduConfig, cg_sense, cs_l1wavelet, deep_decoder_fit,
                      ssdu_infer, ssdu_train)
from .solvers.cs import DEFAULT_LAMBDA
from .tuner import TuneGrid, tune_lambda

METHODS = ("cgsense", "cs", "deepdecoder", "ssdu")
MODES = ("retro", "prosp")
EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "exp1"
    phantom: str = "shepp_logan"
    size: int = 64
    coils: int = 8
    slices: int = 20
    z_range: float = 0.4
    accel: float = 5.0
    acs: int = 8
    mask: str = "poisson"
    vd_power: float = 2.0
    noise_sigma: float = 0.01
    turbo_factor: int = 16
    ordering: str = "center_out"
    decay_tau: float = 0.0  # 0 selects turbo_factor / 2
    maps: str = "true"  # or "estimated" (from each slice's ACS)
    methods: str = "cgsense,cs,deepdecoder,ssdu"
    modes: str = "retro,prosp"
    cg_iters: int = 30
    cs_lambda: float = DEFAULT_LAMBDA
    cs_iters: int = 200
    cs_levels: int = 3
    cs_wavelet: str = "db4"
    dd_layers: int = 2
    dd_channels: int = 128
    dd_latent: int = 0  # 0 selects size / 2**dd_layers
    dd_iters_first: int = 2000
    dd_iters: int = 300
    dd_lr: float = 0.01
    ssdu_unrolls: int = 5
    ssdu_epochs: int = 10
    ssdu_lr: float = 0.5e-4
    ssdu_lambda: float = 0.05
    ssdu_fraction: float = 0.6
    ssdu_depth: int = 4
    ssdu_channels: int = 12
    tune_grid: str = "log:1e-5:1e-1:20"
    tune_splits: int = 50
    tune_problems: int = 3
    crop: int = 0  # 0 keeps the full image
    extractor_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.phantom not in KINDS:
            problems.append(f"phantom must be one of {KINDS}")
        if self.mask not in ("poisson", "variable_density"):
            problems.append("mask must be poisson or variable_density")
        if self.ordering not in ("center_out", "linear", "random"):
            problems.append("ordering must be center_out, linear or random")
        if self.maps not in ("true", "estimated"):
            problems.append("maps must be true or estimated")
        bad = [m for m in self.method_list() if m not in METHODS]
        if bad:
            problems.append(f"unknown methods {bad}")
        bad = [m for m in self.mode_list() if m not in MODES]
        if bad:
            problems.append(f"unknown modes {bad}")
        for name in ("size", "coils", "slices", "turbo_factor"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if self.size < 32:
            problems.append("size must be at least 32")
        if self.accel < 1:
            problems.append("accel must be >= 1")
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be nonnegative")
        if problems:
            raise ConfigError("; ".join(problems))

    def method_list(self):
        return [m for m in self.methods.split(",") if m]

    def mode_list(self):
        return [m for m in self.modes.split(",") if m]

    @property
    def tau(self):
        return self.decay_tau if self.decay_tau > 0 else self.turbo_factor / 2

    def decoder_arch(self, seed=None):
        latent = self.dd_latent or self.size // 2 ** self.dd_layers
        return DecoderArch(self.dd_layers, self.dd_channels, (latent, latent),
                           self.seed if seed is None else seed)

    def ssdu_config(self):
        return SsduConfig(unrolls=self.ssdu_unrolls, dc_lambda_init=self.ssdu_lambda,
                          split_theta_fraction=self.ssdu_fraction, epochs=self.ssdu_epochs,
                          learning_rate=self.ssdu_lr,
                          denoiser=UNetArch(depth=self.ssdu_depth, base_channels=self.ssdu_channels))

    def cs_config(self, lam=None):
        return CsConfig(lam=self.cs_lambda if lam is None else lam, max_iters=self.cs_iters,
                        wavelet_levels=self.cs_levels, wavelet=self.cs_wavelet)

    # serialisation
    def to_text(self):
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def replace(self, **kw):
        return parse_config(kw, base=self)


def _convert(name, typ, raw):
    try:
        if typ is bool:
            return str(raw).lower() in ("1", "true", "yes")
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(pairs: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from string pairs; unknown keys are rejected."""
    base = base or RunConfig()
    types = {f.name: type(f.default) for f in fields(RunConfig)}
    unknown = sorted(set(pairs) - set(types))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kw = {k: _convert(k, types[k], v) for k, v in pairs.items()}
    return dataclasses.replace(base, **kw)


def read_pairs(text: str) -> dict:
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        pairs[k] = v
    return pairs


def load_config(path=None, overrides=(), base=None) -> RunConfig:
    pairs = {}
    if path:
        try:
            pairs.update(read_pairs(Path(path).read_text()))
        except OSError as e:
            raise DataError(f"cannot read config {path}: {e}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    return parse_config(pairs, base)


# ---
# seeds and containers

def derived_seed(base, *idx):
    """Integer seed from ``(base, *idx)``, independent of execution order."""
    return int(np.random.SeedSequence([int(base), *map(int, idx)]).generate_state(1)[0])


def problem_sections(kspace, mask: SamplingMask, maps, meta, schedule=None):
    """Container sections for a stack of slices; `kspace` is (S, C, H, W), `maps` (S, C, H, W)."""
    sec = {"KSPC": kspace, "MASK": mask.values, "MAPS": maps.data if isinstance(maps, SensitivityMaps) else maps[0],
           "SUPP": maps.support if isinstance(maps, SensitivityMaps) else maps[1]}
    if schedule is not None:
        sec["SCHD"] = {"ordering": schedule.ordering, "starts": schedule.starts,
                       "turbo_factor": np.array([schedule.turbo_factor]),
                       "decay_tau": np.array([schedule.decay_tau])}
    sec["META"] = dict(meta, acs_hy=mask.acs[0], acs_hx=mask.acs[1])
    return sec


def problems_from_sections(sec):
    for tag in ("KSPC", "MASK", "MAPS", "SUPP", "META"):
        if tag not in sec:
            raise DataError(f"container lacks a {tag} section")
    meta = sec["META"]
    mask = SamplingMask(sec["MASK"], (int(meta.get("acs_hy", 0)), int(meta.get("acs_hx", 0))))
    k = sec["KSPC"]
    maps, supp = sec["MAPS"], sec["SUPP"]
    sigma = float(meta.get("noise_sigma", 0.0))
    out = []
    for s in range(k.shape[0]):
        m = SensitivityMaps(maps[s] if maps.ndim == 4 else maps, supp[s] if supp.ndim == 3 else supp)
        out.append(ReconProblem(MultiCoilKSpace(k[s], sigma), mask, m, {"slice": s}))
    return out


def load_problems(path):
    try:
        sec = io.load(path)
    except FileNotFoundError:
        raise DataError(f"missing input {path}") from None
    return problems_from_sections(sec), sec["META"]


def load_images(path):
    try:
        sec = io.load(path)
    except FileNotFoundError:
        raise DataError(f"missing input {path}") from None
    if "IMAG" not in sec:
        raise DataError(f"{path} has no IMAG section")
    return sec["IMAG"], sec.get("META", {})


def write_manifest(out: Path):
    lines = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.txt" and not p.name.endswith(".timing"):
            lines.append(f"{io.sha256_file(p)}  {p.relative_to(out).as_posix()}\n")
    (out / "manifest.txt").write_text("".join(lines))


# ---
# simulate

def simulate(cfg: RunConfig, out: Path):
    """Ground truth plus fully sampled, retrospective and prospective containers."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    n = cfg.size
    maps = simulate_coils(cfg.coils, n, derived_seed(cfg.seed, 0))
    mask_seed = derived_seed(cfg.seed, 1)
    if cfg.mask == "poisson":
        mask = poisson_disk_mask(n, cfg.accel, cfg.acs, mask_seed)
    else:
        mask = variable_density_mask(n, cfg.accel, cfg.acs, cfg.vd_power, mask_seed)
    full_mask = SamplingMask(np.ones((n, n), bool), mask.acs)
    sched = echo_train_schedule(mask, cfg.turbo_factor, cfg.ordering, derived_seed(cfg.seed, 2), cfg.tau)
    zs = np.linspace(-cfg.z_range, cfg.z_range, cfg.slices) if cfg.slices > 1 else [0.0]
    truth, kfull, kretro, kprosp = [], [], [], []
    for s, z in enumerate(zs):
        ph = make_phantom(cfg.phantom, n, derived_seed(cfg.seed, 3, s), float(z))
        noise_seed = derived_seed(cfg.seed, 4, s)
        full = acquire(ph, maps, full_mask, cfg.noise_sigma, None, noise_seed)
        truth.append(ph.image)
        kfull.append(full.data)
        kretro.append(full.data * mask.values)
        kprosp.append(acquire(ph, maps, mask, cfg.noise_sigma, sched, noise_seed).data)
    base = {"seed": cfg.seed, "config_sha": cfg.digest(), "phantom": cfg.phantom,
            "noise_sigma": repr(cfg.noise_sigma)}

    def maps_for(stack, m):
        if cfg.maps == "true":
            return maps
        est = [estimate_sensitivities(MultiCoilKSpace(k * m.values), m.acs) for k in stack]
        return (np.stack([e.data for e in est]), np.stack([e.support for e in est]))

    io.save(out / "truth.ssrc", {"IMAG": np.stack(truth), "META": dict(base, mode="truth")})
    io.save(out / "full.ssrc", problem_sections(np.stack(kfull), full_mask, maps_for(kfull, full_mask),
                                                dict(base, mode="full")))
    io.save(out / "retro.ssrc", problem_sections(np.stack(kretro), mask, maps_for(kretro, mask),
                                                 dict(base, mode="retro")))
    io.save(out / "prosp.ssrc", problem_sections(np.stack(kprosp), mask, maps_for(kprosp, mask),
                                                 dict(base, mode="prosp"), sched))
    return out


# ---
# reconstruct

def _recon_one(args):
    method, problem, cfg, params = args
    if method == "cgsense":
        x = cg_sense(problem, CgConfig(max_iters=cfg.cg_iters))
    elif method == "cs":
        x = cs_l1wavelet(problem, cfg.cs_config())
    elif method == "ssdu":
        x = ssdu_infer(params, problem, cfg.ssdu_config())
    else:
        raise UsageError(f"unknown method {method!r}")
    return x * problem.maps.support


def reconstruct_problems(method, problems, cfg: RunConfig, params=None, workers=1):
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "ssdu" and params is None:
        raise UsageError("ssdu needs trained parameters (--params)")
    if method == "deepdecoder":
        # slices are fitted in order, each warm-started from the previous one
        arch, out, prev = cfg.decoder_arch(), [], None
        for i, p in enumerate(problems):
            iters = cfg.dd_iters_first if prev is None else cfg.dd_iters
            x, prev = deep_decoder_fit(p, arch, iters, warm_start=prev, lr=cfg.dd_lr)
            out.append(x * p.maps.support)
        return np.stack(out)
    jobs = [(method, p, cfg, params) for p in problems]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return np.stack(list(ex.map(_recon_one, jobs)))
    return np.stack([_recon_one(j) for j in jobs])


def reconstruct(method, src: Path, dst: Path, cfg: RunConfig, params_path=None, workers=1, label=None):
    problems, meta = load_problems(src)
    params = None
    if params_path is not None:
        sec = _load(params_path)
        if "PARM" not in sec:
            raise DataError(f"{params_path} has no PARM section")
        params = sec["PARM"]
    elif method == "ssdu":
        raise UsageError("ssdu needs trained parameters (--params)")
    t0 = time.perf_counter()
    images = reconstruct_problems(method, problems, cfg, params, workers)
    wall = time.perf_counter() - t0
    mode = meta.get("mode", "")
    out_meta = {"method": method, "mode": mode, "label": label or f"{method}_{mode}",
                "source_sha256": io.sha256_file(src), "config_sha": cfg.digest(), "seed": cfg.seed}
    if params_path is not None:
        out_meta["params_sha256"] = io.sha256_file(params_path)
    io.save(dst, {"IMAG": images, "META": out_meta})
    # wall time goes to a sidecar so that containers stay bit-reproducible
    Path(str(dst) + ".timing").write_text(f"wall_seconds={wall:.6f}\n")
    return images


def _load(path):
    try:
        return io.load(path)
    except FileNotFoundError:
        raise DataError(f"missing input {path}") from None


# ---
# tune / train

def collect_problems(data: Path, mode="retro"):
    files = sorted(Path(data).glob("*.ssrc")) if Path(data).is_dir() else []
    problems = []
    for f in files:
        sec = _load(f)
        if "KSPC" in sec and sec.get("META", {}).get("mode") == mode:
            problems += problems_from_sections(sec)
    if not problems:
        raise DataError(f"no {mode!r} k-space containers in {data}")
    return problems


def parse_grid(spec: str, num_splits, fraction) -> TuneGrid:
    try:
        if spec.startswith("log:"):
            lo, hi, n = spec[4:].split(":")
            return TuneGrid.log(float(lo), float(hi), int(n), num_splits=num_splits, split_fraction=fraction)
        return TuneGrid(tuple(float(v) for v in spec.split(",")), num_splits, fraction)
    except ValueError as e:
        raise ConfigError(f"bad grid {spec!r}: {e}") from None


def _cs_for(cfg):
    return _CsRecon(cfg.cs_iters, cfg.cs_levels, cfg.cs_wavelet)


@dataclass(frozen=True)
class _CsRecon:
    max_iters: int
    levels: int
    wavelet: str

    def __call__(self, problem, value):
        return cs_l1wavelet(problem, CsConfig(float(value), self.max_iters, self.levels, wavelet=self.wavelet))


def tune(cfg: RunConfig, data: Path, out: Path, grid_spec=None, workers=1):
    problems = collect_problems(data)[:cfg.tune_problems]
    grid = parse_grid(grid_spec or cfg.tune_grid, cfg.tune_splits, cfg.ssdu_fraction)
    res = tune_lambda(problems, grid, cfg.seed, reconstruct=_cs_for(cfg), workers=workers)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "tune.csv")
    (out / "tune_selected.txt").write_text(f"cs_lambda={res.selected!r}\n")
    return res


def train(cfg: RunConfig, data: Path, dst: Path):
    problems = collect_problems(data)
    params = ssdu_train(problems, cfg.ssdu_config(), cfg.seed)
    meta = {"method": "ssdu", "config_sha": cfg.digest(), "seed": cfg.seed,
            "epochs": cfg.ssdu_epochs, "lr": repr(cfg.ssdu_lr)}
    io.save(dst, {"PARM": params, "META": meta})
    io.write_csv(Path(str(dst).removesuffix(".ssrc") + "_losses.csv"), ["epoch", "loss"],
                 [(i + 1, repr(v)) for i, v in enumerate(params.meta["epoch_losses"])])
    return params


# ---
# evaluate / report

def _label(path, meta):
    return meta.get("label") or Path(path).stem


def evaluate(recons, out: Path, ref=None, noref=False, crop=0, extractor_seed=0):
    """Per-slice metric CSVs for every reconstruction and a pairwise Wilcoxon table."""
    out.mkdir(parents=True, exist_ok=True)
    truth = load_images(ref)[0] if ref is not None else None
    if truth is None and not noref:
        raise UsageError("full-reference evaluation needs --ref (or pass --noref)")
    extractor = FeatureExtractor(extractor_seed)
    crop = crop or None
    reports = {}
    for path in recons:
        imgs, meta = load_images(path)
        label = _label(path, meta)
        if truth is not None and imgs.shape != truth.shape:
            raise DataError(f"{path}: shape {imgs.shape} does not match reference {truth.shape}")
        metrics = NO_REFERENCE if noref else FULL_REFERENCE
        for name, fn in metrics.items():
            vals = []
            for s in range(imgs.shape[0]):
                x = center_crop(np.abs(imgs[s]), crop)
                if noref:
                    vals.append(fn(x))
                else:
                    r = center_crop(np.abs(truth[s]), crop)
                    vals.append(fn(x, r, extractor) if name == "perc_dis" else fn(x, r))
            rep = MetricReport.of(name, vals, crop)
            rep.write_csv(out / f"{name}_{label}.csv")
            reports[(name, label)] = rep
    rows = []
    labels = list(dict.fromkeys(lab for _, lab in reports))
    names = list(dict.fromkeys(n for n, _ in reports))
    for name in names:
        for a, b in itertools.combinations(labels, 2):
            va, vb = np.array(reports[(name, a)].values), np.array(reports[(name, b)].values)
            finite = np.isfinite(va) & np.isfinite(vb)
            try:
                p = wilcoxon_signed_rank(va[finite], vb[finite])
            except ValueError:
                p = float("nan")
            rows.append((name, a, b, repr(p), "yes" if p == p and significant(p) else "no"))
    io.write_csv(out / ("wilcoxon_noref.csv" if noref else "wilcoxon.csv"),
                 ["metric", "a", "b", "p_value", f"significant_at_{BONFERRONI_ALPHA:.6f}"], rows)
    return reports


def report(src: Path, out: Path):
    """PGM panels of the middle slice and a mean/std summary table from the evaluation CSVs."""
    truth_path = src / "truth.ssrc"
    recons = sorted(src.glob("recon_*.ssrc"))
    if not truth_path.exists() or not recons:
        raise DataError(f"{src} needs truth.ssrc and recon_*.ssrc")
    out.mkdir(parents=True, exist_ok=True)
    truth = load_images(truth_path)[0]
    mid = truth.shape[0] // 2
    window = (0.0, float(np.abs(truth[mid]).max()) or 1.0)
    io.export_pgm(truth[mid], out / "truth.pgm", window)
    labels = []
    for path in recons:
        imgs, meta = load_images(path)
        label = _label(path, meta)
        labels.append(label)
        io.export_pgm(imgs[mid], out / f"{label}.pgm", window)
    lines = []
    evald = src / "eval"
    names = [n for n in list(FULL_REFERENCE) + list(NO_REFERENCE) if any(evald.glob(f"{n}_*.csv"))]
    header = ["method"] + names
    lines.append("\t".join(header))
    for label in labels:
        cells = [label]
        for n in names:
            f = evald / f"{n}_{label}.csv"
            if f.exists():
                _, summ = MetricReport.read_csv(f, n)
                cells.append(f"{summ['mean']:.4f} +/- {summ['std']:.4f}")
            else:
                cells.append("-")
        lines.append("\t".join(cells))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return out


# ---
# experiments

EXP2_COILS = (8, 20, 32)
EXP2_ACCEL = (4, 5, 6, 7)
EXP2_NOISE = (0.01, 0.02)
EXP1_KINDS = ("shepp_logan", "textured_produce")


def run_exp1(cfg: RunConfig, out: Path, workers=1, kinds=EXP1_KINDS):
    """Prospective vs retrospective vs fully sampled on each phantom kind."""
    for kind in kinds:
        d = out / kind
        kcfg = cfg.replace(phantom=kind)
        simulate(kcfg, d)
        run_methods(kcfg, d, workers)
        recons = sorted(d.glob("recon_*.ssrc"))
        evaluate(recons, d / "eval", ref=d / "truth.ssrc", crop=kcfg.crop, extractor_seed=kcfg.extractor_seed)
        if _noref_ok(kcfg):
            evaluate(recons, d / "eval", noref=True, crop=kcfg.crop)
        report(d, d / "report")
    write_manifest(out)


def _noref_ok(cfg):
    return (cfg.crop or cfg.size) >= 64  # PIQE works on 64x64 and larger


def run_methods(cfg: RunConfig, d: Path, workers=1):
    methods = cfg.method_list()
    params_path = None
    if "ssdu" in methods:
        params_path = d / "ssdu_params.ssrc"
        train(cfg, d, params_path)
    for mode in cfg.mode_list():
        for m in methods:
            reconstruct(m, d / f"{mode}.ssrc", d / f"recon_{m}_{mode}.ssrc", cfg,
                        params_path if m == "ssdu" else None, workers)


def run_exp2(cfg: RunConfig, out: Path, workers=1, kinds=EXP1_KINDS):
    """No-reference sweep over phantom kind, coils, noise level and acceleration."""
    rows = []
    for kind, coils, sigma, accel in itertools.product(kinds, EXP2_COILS, EXP2_NOISE, EXP2_ACCEL):
        d = out / f"{kind}_c{coils}_n{sigma}_a{accel}"
        ccfg = cfg.replace(phantom=kind, coils=coils, noise_sigma=sigma, accel=accel, modes="retro")
        simulate(ccfg, d)
        run_methods(ccfg, d, workers)
        if not _noref_ok(ccfg):
            raise ConfigError("exp2 scores with no-reference metrics and needs images of at least 64x64")
        reps = evaluate(sorted(d.glob("recon_*.ssrc")), d / "eval", noref=True, crop=ccfg.crop)
        for (name, label), rep in reps.items():
            rows.append((kind, coils, repr(sigma), accel, label, name, repr(rep.mean), repr(rep.std)))
    io.write_csv(out / "exp2_summary.csv",
                 ["phantom", "coils", "noise_sigma", "accel", "method", "metric", "mean", "std"], rows)
    write_manifest(out)


PRESETS = {
    "exp1": {},
    "exp2": {"slices": "2", "dd_iters_first": "500", "dd_iters": "100", "ssdu_epochs": "3"},
}


# ---
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="ssrecon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", required=out_required)

    s = sub.add_parser("simulate", help="simulate phantoms and acquisitions")
    common(s)
    s = sub.add_parser("reconstruct", help="reconstruct a k-space container")
    common(s)
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--params")
    s = sub.add_parser("tune", help="self-supervised CS lambda selection")
    common(s)
    s.add_argument("--method", required=True, choices=("cs",))
    s.add_argument("--data", required=True)
    s.add_argument("--grid")
    s = sub.add_parser("train", help="train SSDU on undersampled data")
    common(s)
    s.add_argument("--method", required=True, choices=("ssdu",))
    s.add_argument("--data", required=True)
    s = sub.add_parser("evaluate", help="image quality metrics and Wilcoxon tests")
    common(s)
    s.add_argument("--recon", nargs="+", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--ref")
    g.add_argument("--noref", action="store_true")
    s.add_argument("--crop", type=int)
    s = sub.add_parser("report", help="image panels and summary table")
    common(s)
    s.add_argument("--in", dest="inp", required=True)
    s = sub.add_parser("run", help="run an experiment preset end to end")
    common(s)
    s.add_argument("--preset", required=True, choices=sorted(PRESETS))
    return p


def _dispatch(a):
    if a.cmd == "run":
        base = parse_config(dict(PRESETS[a.preset], experiment=a.preset))
        cfg = load_config(a.config, a.set, base)
    else:
        cfg = load_config(a.config, a.set)
    out = Path(a.out)
    if a.cmd == "simulate":
        simulate(cfg, out)
        write_manifest(out)
    elif a.cmd == "reconstruct":
        out.parent.mkdir(parents=True, exist_ok=True)
        reconstruct(a.method, Path(a.inp), out, cfg, a.params, a.workers)
    elif a.cmd == "tune":
        res = tune(cfg, Path(a.data), out, a.grid, a.workers)
        print(f"cs_lambda={res.selected!r}")
    elif a.cmd == "train":
        out.parent.mkdir(parents=True, exist_ok=True)
        train(cfg, Path(a.data), out)
    elif a.cmd == "evaluate":
        crop = cfg.crop if a.crop is None else a.crop
        evaluate([Path(r) for r in a.recon], out, ref=a.ref, noref=a.noref, crop=crop,
                 extractor_seed=cfg.extractor_seed)
    elif a.cmd == "report":
        report(Path(a.inp), out)
    elif a.cmd == "run":
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
        (run_exp1 if a.preset == "exp1" else run_exp2)(cfg, out, a.workers)


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        _dispatch(a)
    except UsageError as e:
        print(f"ssrecon: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"ssrecon: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, io.ContainerError, OSError) as e:
        print(f"ssrecon: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"ssrecon: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        # remaining ValueErrors come from parameter validation (masks, shapes, grids)
        print(f"ssrecon: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
