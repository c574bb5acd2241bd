"""Command-line interface.

Each subcommand resolves its settings from built-in defaults, then an
optional TOML file (top-level keys plus a table named after the
subcommand, e.g. ``[ber]``) or an earlier ``manifest.json``, then explicit
flags.  Results go to an output directory together with ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .codec import DecoderSchedule, SectionObs, decode_chain, decode_scc_block, write_trace_csv
from .codeword_io import from_messages, read_bits, to_messages, write_bits
from .construction import CouplingConfig, Puncturing, build_chain, encode_chain, encode_scc_block
from .density import (DEConfig, bp_threshold, de_iterate, exit_curve_de, init_de, map_threshold,
                      optimize_rho2, parse_rate, rho_for_rate, table_config)
from .errors import ConfigError, InconsistentObservation
from .sim import BlockCode, ChainCode, DecodingError, StopRule, run_ber_sweep, write_ber_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("sctc")

OUTPUT_ENV = "SCTC_OUTPUT_DIR"

_DE = {"ensemble": "scc", "rate": "1/3", "rho2": None, "m": 0, "L": 100}
_CODE = {"kind": "chain", "K": 1024, "L": 100, "rate": None, "rho1": 1.0, "rho2": 1.0,
         "spread": 0, "mode": "simplified", "split": "alternate", "generator": "1,5/7",
         "code_seed": 1, "decoder": "full", "window": 3}

DEFAULTS = {
    "threshold": {**_DE, "tol": 1e-4},
    "map-threshold": {**_DE, "grid_step": 1e-3},
    "exit-curve": {**_DE, "eps_min": 0.0, "eps_max": 1.0, "eps_step": 0.01},
    "de-trace": {**_DE, "epsilon": 0.5, "max_iters": 100_000, "profile_every": 0},
    "optimize-rho2": {"rate": "1/2", "grid_step": 0.05, "map_grid_step": 2e-3},
    "ber": {**_CODE, "epsilon": "0.5", "seed": 1000, "min_errors": 100, "max_trials": 10_000,
            "workers": 1},
    "encode": {**_CODE, "seed": 1000, "epsilon": None, "channel_seed": None},
    "decode": {"input": None, "reference": None, "decoder": None, "window": None, "trace": False},
}


# -- configuration ---------------------------------------------------------

def load_config(cmd: str, path, flags: dict) -> dict:
    """Defaults, then the config file, then flags.

    ``path`` is a TOML file or the ``manifest.json`` of an earlier run of
    the same subcommand, which replays that run exactly.
    """
    cfg = dict(DEFAULTS[cmd])
    if path:
        if str(path).endswith(".json"):
            try:
                with open(path) as fh:
                    manifest = json.load(fh)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
            if manifest.get("command") != cmd:
                raise ConfigError(f"manifest {path} belongs to {manifest.get('command')!r}, not {cmd!r}")
            values = manifest.get("config", {})
        else:
            try:
                with open(path, "rb") as fh:
                    data = tomllib.load(fh)
            except (OSError, tomllib.TOMLDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            values = {k: v for k, v in data.items() if not isinstance(v, dict)}
            values.update(data.get(cmd, {}))
        for k, v in values.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise ConfigError(f"unknown config key {k!r} for {cmd}")
            cfg[key] = v
    cfg.update(flags)
    return cfg


def config_hash(cmd: str, cfg: dict) -> str:
    blob = json.dumps({"command": cmd, "config": cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def output_dir(cmd: str, flag, chash: str) -> Path:
    base = flag or os.environ.get(OUTPUT_ENV)
    out = Path(base) if base else Path("runs") / f"{cmd}-{chash[:8]}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, cmd: str, cfg: dict, chash: str, seeds: dict, outputs: list[str]):
    manifest = {
        "command": cmd,
        "config": cfg,
        "config_hash": chash,
        "seeds": seeds,
        "outputs": sorted(outputs),
        "versions": {
            "sctc": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def parse_eps_list(spec) -> list[float]:
    """``0.4,0.45`` or ``start:stop:step`` (inclusive) or a list."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, list):
        return [float(x) for x in spec]
    text = str(spec).strip()
    if ":" in text:
        try:
            a, b, s = (float(x) for x in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}; expected start:stop:step") from exc
        if s <= 0:
            raise ConfigError("range step must be positive")
        n = int(np.floor((b - a) / s + 1e-9))
        return [round(a + k * s, 10) for k in range(n + 1)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad epsilon list {text!r}") from exc


def _rate(value) -> float:
    try:
        return parse_rate(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad rate {value!r}") from exc


def de_config(c: dict) -> DEConfig:
    rate = _rate(c["rate"])
    coupled = int(c["m"]) > 0
    if c["ensemble"] not in ("scc", "pcc"):
        raise ConfigError(f"unknown ensemble {c['ensemble']!r}")
    if c.get("rho2") is None:
        return table_config(c["ensemble"], rate, coupled=coupled, L=int(c["L"]), m=int(c["m"]))
    if c["ensemble"] == "pcc":
        raise ConfigError("the PCC family fixes rho2 from the rate; drop --rho2")
    rho2 = float(c["rho2"])
    rho1 = rho_for_rate(rate, rho2)
    if not (-1e-12 <= rho1 <= 1.0 + 1e-12):
        raise ConfigError(f"rate {c['rate']} is infeasible with rho2={rho2}")
    rho1 = min(1.0, max(0.0, rho1))
    if coupled:
        return DEConfig("scc", True, int(c["L"]), int(c["m"]), rho1=rho1, rho2=rho2)
    return DEConfig("scc", rho1=rho1, rho2=rho2)


def code_puncturing(c: dict) -> Puncturing:
    rho1, rho2 = float(c["rho1"]), float(c["rho2"])
    if c.get("rate") is not None:
        rho1 = rho_for_rate(_rate(c["rate"]), rho2)
        if not (-1e-12 <= rho1 <= 1.0 + 1e-12):
            raise ConfigError(f"rate {c['rate']} is infeasible with rho2={rho2}")
        rho1 = min(1.0, max(0.0, rho1))
    return Puncturing.for_rates(rho1, rho2)


def coupling_config(c: dict) -> CouplingConfig:
    return CouplingConfig(K=int(c["K"]), L=int(c["L"]), seed=int(c["code_seed"]),
                          spread=int(c["spread"]), mode=c["mode"], split=c["split"],
                          generator=c["generator"], puncturing=code_puncturing(c))


def schedule(c: dict) -> DecoderSchedule:
    return DecoderSchedule(mode=c["decoder"], window=int(c["window"]))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- subcommands -----------------------------------------------------------

def cmd_threshold(c, out, chash):
    cfg = de_config(c)
    lo = 0.0
    if cfg.coupled:
        lo = bp_threshold(replace(cfg, coupled=False, m=0), c["tol"])
        lo = max(0.0, lo - 2 * c["tol"])
    eps = bp_threshold(cfg, c["tol"], lo=lo)
    _write_rows(out / "threshold.csv",
                ("config_hash", "ensemble", "rate", "rho1", "rho2", "m", "L", "eps_bp"),
                [(chash, cfg.ensemble, _fmt(cfg.rate), _fmt(cfg.rho1), _fmt(cfg.rho2),
                  cfg.m, cfg.L if cfg.coupled else 1, f"{eps:.4f}")])
    print(f"{cfg.ensemble} R={cfg.rate:.4f} m={cfg.m}: eps_BP = {eps:.4f}")
    return ["threshold.csv"], {}


def cmd_map_threshold(c, out, chash):
    cfg = de_config(c)
    if cfg.coupled:
        raise ConfigError("map-threshold applies to the uncoupled ensemble; use --m 0")
    eps_bp = bp_threshold(cfg)
    eps_map = map_threshold(cfg, c["grid_step"])
    gap = 1.0 - cfg.rate - eps_map
    _write_rows(out / "map_threshold.csv",
                ("config_hash", "ensemble", "rate", "rho1", "rho2", "eps_bp", "eps_map", "shannon_gap"),
                [(chash, cfg.ensemble, _fmt(cfg.rate), _fmt(cfg.rho1), _fmt(cfg.rho2),
                  f"{eps_bp:.4f}", f"{eps_map:.4f}", f"{gap:.4f}")])
    print(f"{cfg.ensemble} R={cfg.rate:.4f}: eps_BP = {eps_bp:.4f}, eps_MAP = {eps_map:.4f}, gap = {gap:.4f}")
    return ["map_threshold.csv"], {}


def cmd_exit_curve(c, out, chash):
    cfg = de_config(c)
    if cfg.coupled:
        raise ConfigError("exit-curve applies to the uncoupled ensemble; use --m 0")
    grid = np.array(parse_eps_list(f"{c['eps_min']}:{c['eps_max']}:{c['eps_step']}"))
    h = exit_curve_de(cfg, grid)
    _write_rows(out / "exit_curve.csv", ("config_hash", "epsilon", "h"),
                [(chash, _fmt(e), f"{v:.8f}") for e, v in zip(grid, h)])
    return ["exit_curve.csv"], {}


def cmd_de_trace(c, out, chash):
    cfg = replace(de_config(c), epsilon=float(c["epsilon"]))
    st = init_de(cfg)
    rows, prof = [], []
    every = int(c["profile_every"])
    for _ in range(int(c["max_iters"])):
        st = de_iterate(cfg, st)
        mx = float(st.p_app.max())
        rows.append((chash, st.iteration, f"{mx:.10e}", f"{float(st.p_app.sum()):.10e}"))
        if every and st.iteration % every == 0:
            prof.extend((chash, st.iteration, t, f"{v:.10e}") for t, v in enumerate(st.p_app))
        if mx < cfg.conv_tol:
            break
    _write_rows(out / "de_trace.csv", ("config_hash", "iteration", "max_p_app", "sum_p_app"), rows)
    files = ["de_trace.csv"]
    if every:
        _write_rows(out / "de_profile.csv", ("config_hash", "iteration", "index", "p_app"), prof)
        files.append("de_profile.csv")
    return files, {}


def cmd_optimize_rho2(c, out, chash):
    rate = _rate(c["rate"])
    rho2, rho1, eps_map = optimize_rho2(rate, c["grid_step"], c["map_grid_step"])
    _write_rows(out / "optimize_rho2.csv", ("config_hash", "rate", "rho1", "rho2", "eps_map"),
                [(chash, _fmt(rate), _fmt(rho1), _fmt(rho2), f"{eps_map:.4f}")])
    print(f"R={rate:.4f}: rho2 = {rho2:.3f}, rho1 = {rho1:.3f}, eps_MAP = {eps_map:.4f}")
    return ["optimize_rho2.csv"], {}


def _build_code(c):
    if c["kind"] == "block":
        return BlockCode(int(c["K"]), int(c["code_seed"]), int(c["spread"]), c["generator"],
                         code_puncturing(c))
    if c["kind"] == "chain":
        return ChainCode(coupling_config(c), schedule(c))
    raise ConfigError(f"unknown code kind {c['kind']!r}")


def cmd_ber(c, out, chash):
    code = _build_code(c)
    eps = parse_eps_list(c["epsilon"])
    stop = StopRule(int(c["min_errors"]), int(c["max_trials"]))
    points = run_ber_sweep(code, eps, stop, int(c["seed"]), int(c["workers"]))
    write_ber_csv(out / "ber.csv", points, {"config_hash": chash, "seed_base": int(c["seed"])})
    for p in points:
        print(f"eps={p.epsilon:.4f} trials={p.trials} BER={p.ber:.3e} +- {p.half_width:.1e}")
    return ["ber.csv"], {"seed_base": int(c["seed"]), "code_seed": int(c["code_seed"])}


def _sections_stream(sections):
    return np.concatenate([np.concatenate([s.sys, s.outer_par, s.inner_par,
                                           s.outer_tail.ravel(), s.inner_tail.ravel()])
                           for s in sections])


def cmd_encode(c, out, chash):
    rng = np.random.default_rng(int(c["seed"]))
    K = int(c["K"])
    if c["kind"] == "block":
        code = BlockCode(K, int(c["code_seed"]), int(c["spread"]), c["generator"], code_puncturing(c))
        info = [rng.integers(0, 2, K, dtype=np.int8)]
        sections = [encode_scc_block(info[0], code.perm, code.puncturing, code.trellis)]
    elif c["kind"] == "chain":
        chain = build_chain(coupling_config(c))
        info = [rng.integers(0, 2, K, dtype=np.int8) for _ in range(int(c["L"]) - 1)]
        sections = encode_chain(info, chain).sections
    else:
        raise ConfigError(f"unknown code kind {c['kind']!r}")
    stream = _sections_stream(sections)
    meta = {"config": c, "config_hash": chash, "positions": len(sections),
            "section_bits": int(stream.size // len(sections)),
            "classes": ["sys", "outer_par", "inner_par", "outer_tail", "inner_tail"]}
    write_bits(out / "codeword.bin", {"info": np.concatenate(info), "stream": stream}, meta)
    files = ["codeword.bin"]
    seeds = {"info_seed": int(c["seed"]), "code_seed": int(c["code_seed"])}
    if c.get("epsilon") is not None:
        cs = int(c["channel_seed"] if c["channel_seed"] is not None else c["seed"] + 1)
        eps = float(c["epsilon"])
        keep = np.concatenate([np.concatenate([s.keep_sys, s.keep_outer_par, s.keep_inner_par,
                                               np.ones(s.outer_tail.size + s.inner_tail.size, bool)])
                               for s in sections])
        erased_ch = np.random.default_rng(cs).random(stream.size) < eps
        msgs = stream.copy()
        msgs[~keep | erased_ch] = -1
        vals, er = from_messages(msgs)
        write_bits(out / "received.bin", {"stream": vals, "erasure": er},
                   {**meta, "epsilon": eps, "channel_seed": cs})
        files.append("received.bin")
        seeds["channel_seed"] = cs
    print(f"wrote {len(sections)} section(s), {stream.size} stream bits")
    return files, seeds


def cmd_decode(c, out, chash):
    if not c.get("input"):
        raise ConfigError("decode needs --input")
    planes, header = read_bits(c["input"])
    if "erasure" not in planes:
        raise ConfigError("input has no erasure plane; pass a received file")
    code_cfg = header["config"]
    if c.get("decoder"):
        code_cfg = {**code_cfg, "decoder": c["decoder"]}
    if c.get("window"):
        code_cfg = {**code_cfg, "window": c["window"]}
    msgs = to_messages(planes["stream"], planes["erasure"])
    K = int(code_cfg["K"])
    parts = np.split(msgs, header["positions"])
    trace_rows = []
    if code_cfg["kind"] == "block":
        code = BlockCode(K, int(code_cfg["code_seed"]), int(code_cfg["spread"]),
                         code_cfg["generator"], code_puncturing(code_cfg))
        obs = _obs_from_stream(K, code.trellis.generator.memory, parts[0])
        res = decode_scc_block(obs, code.perm, code.trellis)
        u_hat, iters = res.u_hat, res.iterations
    else:
        chain = build_chain(coupling_config(code_cfg))
        nu = chain.outer.generator.memory
        obs = [_obs_from_stream(K, nu, p) for p in parts]
        res = decode_chain(chain, obs, schedule(code_cfg), trace=bool(c.get("trace")))
        u_hat, iters, trace_rows = np.concatenate(res.u_hat), res.iterations, res.trace
    vals, er = from_messages(u_hat)
    write_bits(out / "decoded.bin", {"info": vals, "erasure": er},
               {"config_hash": chash, "source_config_hash": header.get("config_hash")})
    errors = ""
    if c.get("reference"):
        ref, _ = read_bits(c["reference"])
        known = u_hat >= 0
        if np.any(u_hat[known] != ref["info"][known]):
            raise DecodingError("decoded bit disagrees with the reference codeword")
        errors = int(np.count_nonzero(~known))
    _write_rows(out / "decode.csv",
                ("config_hash", "info_bits", "erased_info_bits", "bit_errors", "iterations"),
                [(chash, u_hat.size, int(er.sum()), errors, iters)])
    files = ["decoded.bin", "decode.csv"]
    if trace_rows:
        write_trace_csv(out / "decoder_trace.csv", trace_rows)
        files.append("decoder_trace.csv")
    print(f"{u_hat.size - int(er.sum())}/{u_hat.size} information bits resolved in {iters} iterations")
    return files, {}


def _obs_from_stream(K: int, nu: int, msgs: np.ndarray) -> SectionObs:
    """Split one section of a received stream (punctured bits already erased)."""
    sizes = (K, K, 2 * K, 2 * nu, 2 * nu)
    if msgs.size != sum(sizes):
        raise ConfigError("stream length does not match the code configuration")
    s, op, ip, ot, it = np.split(msgs, np.cumsum(sizes)[:-1])
    return SectionObs(s, op, ip, ot.reshape(-1, 2), it.reshape(-1, 2))


COMMANDS = {
    "threshold": cmd_threshold,
    "map-threshold": cmd_map_threshold,
    "exit-curve": cmd_exit_curve,
    "de-trace": cmd_de_trace,
    "optimize-rho2": cmd_optimize_rho2,
    "ber": cmd_ber,
    "encode": cmd_encode,
    "decode": cmd_decode,
}


# -- argument parsing ------------------------------------------------------

def _de_flags(p):
    p.add_argument("--ensemble", choices=("scc", "pcc"))
    p.add_argument("--rate", help="code rate, e.g. 1/2")
    p.add_argument("--rho2", type=float, help="inner parity permeability (default: table family)")
    p.add_argument("--m", type=int, help="coupling memory (0 = uncoupled)")
    p.add_argument("--L", type=int, help="coupling length")


def _code_flags(p):
    p.add_argument("--kind", choices=("block", "chain"))
    p.add_argument("--K", type=int, help="information bits per block")
    p.add_argument("--L", type=int, help="chain length")
    p.add_argument("--rate", help="target rate (sets rho1 from --rho2)")
    p.add_argument("--rho1", type=float)
    p.add_argument("--rho2", type=float)
    p.add_argument("--spread", type=int, help="S-random spread (0 = automatic)")
    p.add_argument("--mode", choices=("simplified", "random"))
    p.add_argument("--split", choices=("alternate", "random"))
    p.add_argument("--generator", help="component code, e.g. 1,5/7")
    p.add_argument("--code-seed", type=int, dest="code_seed")
    p.add_argument("--decoder", choices=("full", "window"))
    p.add_argument("--window", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sctc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="TOML config file, or manifest.json of a previous run")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or runs/)")
        return p

    p = add("threshold", "BP threshold by density evolution")
    _de_flags(p)
    p.add_argument("--tol", type=float)
    p = add("map-threshold", "MAP threshold via the area theorem")
    _de_flags(p)
    p.add_argument("--grid-step", type=float, dest="grid_step")
    p = add("exit-curve", "BP EXIT curve of an uncoupled ensemble")
    _de_flags(p)
    p.add_argument("--eps-min", type=float, dest="eps_min")
    p.add_argument("--eps-max", type=float, dest="eps_max")
    p.add_argument("--eps-step", type=float, dest="eps_step")
    p = add("de-trace", "per-iteration density evolution trace")
    _de_flags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--profile-every", type=int, dest="profile_every")
    p = add("optimize-rho2", "rho2 maximizing the SCC MAP threshold")
    p.add_argument("--rate")
    p.add_argument("--grid-step", type=float, dest="grid_step")
    p.add_argument("--map-grid-step", type=float, dest="map_grid_step")
    p = add("ber", "Monte Carlo BER sweep")
    _code_flags(p)
    p.add_argument("--epsilon", help="list 0.4,0.45 or range start:stop:step")
    p.add_argument("--seed", type=int, help="first trial seed")
    p.add_argument("--min-errors", type=int, dest="min_errors")
    p.add_argument("--max-trials", type=int, dest="max_trials")
    p.add_argument("--workers", type=int)
    p = add("encode", "encode random information and optionally pass it through the BEC")
    _code_flags(p)
    p.add_argument("--seed", type=int, help="information-bit seed")
    p.add_argument("--epsilon", type=float, help="also write a received file")
    p.add_argument("--channel-seed", type=int, dest="channel_seed")
    p = add("decode", "decode a received file")
    p.add_argument("--input")
    p.add_argument("--reference", help="codeword file for error counting")
    p.add_argument("--decoder", choices=("full", "window"))
    p.add_argument("--window", type=int)
    p.add_argument("--trace", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.pop("command")
    cfg_path = args.pop("config", None)
    out_flag = args.pop("out", None)
    try:
        cfg = load_config(cmd, cfg_path, args)
        chash = config_hash(cmd, cfg)
        out = output_dir(cmd, out_flag, chash)
        t0 = time.perf_counter()
        files, seeds = COMMANDS[cmd](cfg, out, chash)
        write_manifest(out, cmd, cfg, chash, seeds, files)
        log.info("%s finished in %.1f s; output in %s", cmd, time.perf_counter() - t0, out)
    except (ConfigError, InconsistentObservation) as exc:
        print(f"sctc {cmd}: error: {exc}", file=sys.stderr)
        return 2
    except DecodingError as exc:
        print(f"sctc {cmd}: decoder bug: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
