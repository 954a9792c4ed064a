"""Command-line client for the reftrack service.

Every subcommand issues one request against the HTTP API. Without
--server the app is instantiated in-process and spoken to over an ASGI
transport, so offline runs need no daemon and stay byte-reproducible;
with --server the same requests go to a remote instance.

Exit codes: 0 success, 1 usage error, 2 input error, 3 runtime/backend
failure.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import httpx

from .perception import ENDPOINT_ENV, TIMEOUT_ENV

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_RUNTIME = 3

log = logging.getLogger("reftrack")

METRIC_COLUMNS = ("HOTA", "DetA", "AssA", "DetRe", "DetPr", "AssRe", "AssPr", "LocA")


class _UsageExit(Exception):
    def __init__(self, message: str):
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; this toolkit reserves 1."""

    def error(self, message):
        raise _UsageExit(message)


def _build_parser() -> tuple[_Parser, dict[str, set[str]]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (all randomness derives from it)")
    common.add_argument("--config", type=Path, default=None,
                        help="JSON config file mirroring flag names; explicit flags win")
    common.add_argument("--output-dir", type=Path, default=None, help="where result files are written")
    common.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    common.add_argument("--server", default=None,
                        help="base URL of a running reftrack service (default: in-process)")

    parser = _Parser(prog="reftrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    known: dict[str, set[str]] = {}

    def register(name: str, p: argparse.ArgumentParser):
        known[name] = {a.dest for a in p._actions if a.dest != "help"}

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic sequence")
    p.add_argument("--name", default="synth")
    p.add_argument("--targets", type=int, default=3)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--velocity-min", type=float, default=1.0)
    p.add_argument("--velocity-max", type=float, default=4.0)
    p.add_argument("--size-min", type=float, default=20.0)
    p.add_argument("--size-max", type=float, default=60.0)
    register("synth", p)

    p = sub.add_parser("track", parents=[common], help="track every expression of a dataset")
    p.add_argument("dataset_root", type=Path)
    p.add_argument("--backend", choices=("oracle", "cache", "remote"), default="oracle")
    p.add_argument("--expression", default=None,
                   help="expression filter: 1-based index or substring")
    p.add_argument("--tau-iou", type=float, default=0.3)
    p.add_argument("--delta-max", type=int, default=30)
    p.add_argument("--emit-temporary", action="store_true")
    p.add_argument("--min-hits", type=int, default=1)
    p.add_argument("--p-miss", type=float, default=0.0)
    p.add_argument("--jitter-sigma", type=float, default=0.0)
    p.add_argument("--scale-sigma", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--cache-dir", type=Path, default=None,
                   help="completion cache root for --backend cache")
    p.add_argument("--endpoint", default=None,
                   help=f"inference bridge URL for --backend remote (or ${ENDPOINT_ENV})")
    p.add_argument("--timeout-ms", type=int, default=None,
                   help=f"per-request timeout for the remote backend (or ${TIMEOUT_ENV})")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--max-frame-failures", type=int, default=None,
                   help="exit 3 when per-frame backend failures exceed this count")
    register("track", p)

    p = sub.add_parser("eval", parents=[common], help="HOTA-family evaluation of predictions")
    p.add_argument("predictions_dir", type=Path)
    p.add_argument("dataset_root", type=Path)
    p.add_argument("--per-expression", action="store_true", help="dump the per-expression breakdown")
    register("eval", p)

    p = sub.add_parser("reward", parents=[common], help="score a completions file")
    p.add_argument("completions", type=Path, help="JSONL records {sequence, frame, completion[, length]}")
    p.add_argument("dataset_root", type=Path)
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--expression-index", type=int, default=None)
    p.add_argument("--det-width", type=int, default=None)
    p.add_argument("--det-height", type=int, default=None)
    p.add_argument("--tau-match", type=float, default=0.5)
    p.add_argument("--phase-switch", type=float, default=0.5)
    register("reward", p)

    p = sub.add_parser("parse", parents=[common], help="parse diagnostics for completions, one per line")
    p.add_argument("text_file", type=Path)
    register("parse", p)

    p = sub.add_parser("gspo-demo", parents=[common],
                       help="toy-policy hill-climb with stability and gradient reports")
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--group-size", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--beta-kl", type=float, default=0.001)
    p.add_argument("--scale-max", type=float, default=3.0)
    p.add_argument("--no-cas", action="store_true",
                   help="raw reward standardization instead of clipped advantage scaling")
    p.add_argument("--vocab", type=int, default=8)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--learning-rate", type=float, default=0.8)
    register("gspo-demo", p)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    register("serve", p)

    return parser, known


def _find_config_path(argv: list[str]) -> Path | None:
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                raise _UsageExit("--config expects a file path")
            return Path(argv[i + 1])
        if token.startswith("--config="):
            return Path(token.split("=", 1)[1])
    return None


def _apply_config(parser: _Parser, known: dict[str, set[str]], argv: list[str]) -> None:
    """Seed subparser defaults from --config so explicit flags still win."""
    cfg_path = _find_config_path(argv)
    if cfg_path is None:
        return
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in known:
        return
    try:
        payload = json.loads(cfg_path.read_text())
    except OSError as exc:
        raise _UsageExit(f"cannot read config file {cfg_path}: {exc}")
    except json.JSONDecodeError as exc:
        raise _UsageExit(f"config file {cfg_path} is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise _UsageExit(f"config file {cfg_path} must hold a JSON object")
    defaults = {}
    for key, value in payload.items():
        dest = key.replace("-", "_")
        if dest not in known[command]:
            raise _UsageExit(f"unknown config key {key!r} for subcommand {command!r}")
        defaults[dest] = value
    for action in parser._subparsers._group_actions:
        sp = action.choices.get(command)
        if sp is not None:
            sp.set_defaults(**defaults)


def _request(server: str | None, method: str, path: str, payload: dict | None) -> httpx.Response:
    if server:
        try:
            with httpx.Client(base_url=server, timeout=600.0) as client:
                return client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise ConnectionError(f"cannot reach server {server}: {exc}") from None

    async def _run() -> httpx.Response:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://reftrack.local",
                                     timeout=600.0) as client:
            return await client.request(method, path, json=payload)

    return asyncio.run(_run())


def _fail(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = resp.text
    if isinstance(detail, dict):
        print(f"error[{detail.get('kind', '?')}]: {detail.get('message', '')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)
    return EXIT_RUNTIME if resp.status_code >= 500 else EXIT_INPUT


def _pct(v: float) -> str:
    return f"{100.0 * v:.2f}"


def _print_metric_table(rows: list[tuple[str, dict]]) -> None:
    label_w = max(12, max(len(r[0]) for r in rows) + 2)
    header = "".join(f"{c:>8}" for c in METRIC_COLUMNS)
    print(f"{'':<{label_w}}{header}")
    for label, values in rows:
        cells = "".join(f"{_pct(values[c]):>8}" for c in METRIC_COLUMNS)
        print(f"{label:<{label_w}}{cells}")


def _cmd_synth(args) -> int:
    out = args.output_dir or Path("out")
    payload = {
        "output_dir": str(out),
        "name": args.name,
        "n_targets": args.targets,
        "n_frames": args.frames,
        "width": args.width,
        "height": args.height,
        "velocity_min": args.velocity_min,
        "velocity_max": args.velocity_max,
        "size_min": args.size_min,
        "size_max": args.size_max,
        "seed": args.seed,
    }
    resp = _request(args.server, "POST", "/synth", payload)
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    print(f"wrote {body['targets']} targets x {body['frames']} frames to {body['root']}")
    return EXIT_OK


def _cmd_track(args) -> int:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV) or None
    timeout_ms = args.timeout_ms
    if timeout_ms is None and os.environ.get(TIMEOUT_ENV):
        try:
            timeout_ms = int(os.environ[TIMEOUT_ENV])
        except ValueError:
            raise _UsageExit(f"${TIMEOUT_ENV} must be an integer")
    if args.backend == "remote" and not endpoint:
        raise _UsageExit(f"--backend remote requires --endpoint or ${ENDPOINT_ENV}")
    if args.backend == "cache" and args.cache_dir is None:
        raise _UsageExit("--backend cache requires --cache-dir")
    out = args.output_dir or Path("results")
    payload = {
        "dataset_root": str(args.dataset_root),
        "output_dir": str(out),
        "backend": args.backend,
        "expression_filter": args.expression,
        "tau_iou": args.tau_iou,
        "delta_max": args.delta_max,
        "emit_temporary": args.emit_temporary,
        "min_hits": args.min_hits,
        "jitter_sigma": args.jitter_sigma,
        "scale_sigma": args.scale_sigma,
        "p_miss": args.p_miss,
        "fp_rate": args.fp_rate,
        "seed": args.seed,
        "cache_root": str(args.cache_dir) if args.cache_dir else None,
        "endpoint": endpoint,
        "timeout_ms": timeout_ms,
        "retries": args.retries,
    }
    resp = _request(args.server, "POST", "/track", payload)
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    print(f"{'sequence':<16}{'expr':>5}  {'tracks':>6}{'boxes':>8}{'fails':>6}  file")
    for row in body["rows"]:
        print(f"{row['sequence']:<16}{row['expression_index']:>5}  "
              f"{row['tracks']:>6}{row['boxes']:>8}{row['backend_failures']:>6}  {row['result_file']}")
    for warning in body["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    failures = body["total_backend_failures"]
    if args.max_frame_failures is not None and failures > args.max_frame_failures:
        print(f"error: {failures} backend failures exceed tolerance {args.max_frame_failures}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_eval(args) -> int:
    payload = {
        "predictions_dir": str(args.predictions_dir),
        "dataset_root": str(args.dataset_root),
        "per_expression": args.per_expression,
    }
    resp = _request(args.server, "POST", "/eval", payload)
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    rows = [("COMBINED", body["combined"])]
    if args.per_expression:
        rows.append(("MACRO", body["macro"]))
    _print_metric_table(rows)
    if args.per_expression:
        print()
        breakdown = [
            (f"{e['sequence']}/{e['expression_index']}", e["metrics"])
            for e in body["per_expression"]
        ]
        if breakdown:
            _print_metric_table(breakdown)
    for warning in body["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    if args.output_dir:
        report_path = Path(args.output_dir) / "eval_report.json"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        print(f"report written to {report_path}", file=sys.stderr)
    return EXIT_OK


def _read_completion_records(path: Path) -> list[dict]:
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            records.append({
                "sequence": str(rec["sequence"]),
                "frame": int(rec["frame"]),
                "completion": str(rec["completion"]),
                "length": rec.get("length"),
            })
        except (ValueError, KeyError, TypeError) as exc:
            print(f"error: {path}:{lineno}: bad record ({exc})", file=sys.stderr)
            raise ValueError from None
    return records


def _cmd_reward(args) -> int:
    try:
        records = _read_completion_records(args.completions)
    except (OSError, ValueError):
        return EXIT_INPUT
    payload = {
        "dataset_root": str(args.dataset_root),
        "records": records,
        "phase": args.phase,
        "expression_index": args.expression_index,
        "det_width": args.det_width,
        "det_height": args.det_height,
        "config": {"tau_match": args.tau_match, "phase_switch": args.phase_switch},
    }
    resp = _request(args.server, "POST", "/reward", payload)
    if resp.status_code != 200:
        return _fail(resp)
    for record in resp.json()["records"]:
        print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def _cmd_parse(args) -> int:
    try:
        lines = args.text_file.read_text().splitlines()
    except OSError as exc:
        print(f"error: cannot read {args.text_file}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    resp = _request(args.server, "POST", "/parse", {"texts": lines})
    if resp.status_code != 200:
        return _fail(resp)
    for lineno, record in enumerate(resp.json()["records"], start=1):
        record = {"line": lineno, **record}
        print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def _cmd_gspo_demo(args) -> int:
    payload = {
        "steps": args.steps,
        "group_size": args.group_size,
        "epsilon": args.epsilon,
        "beta_kl": args.beta_kl,
        "scale_max": args.scale_max,
        "seed": args.seed,
        "use_cas": not args.no_cas,
        "vocab": args.vocab,
        "max_len": args.max_len,
        "learning_rate": args.learning_rate,
    }
    resp = _request(args.server, "POST", "/gspo-demo", payload)
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    mode = "CAS" if body["use_cas"] else "raw standardization"
    print(f"advantage mode: {mode}")
    print(f"{'step':>5}{'reward':>9}{'objective':>12}{'max|A|':>9}{'ratio range':>22}{'clip%':>7}")
    for st in body["steps"]:
        ratio_range = f"[{st['min_ratio']:.4f}, {st['max_ratio']:.4f}]"
        print(f"{st['step']:>5}{st['mean_reward']:>9.4f}{st['objective']:>12.6f}"
              f"{st['max_abs_advantage']:>9.4f}{ratio_range:>22}{100 * st['clipped_fraction']:>6.1f}%")
    gc = body["gradient_check"]
    print(f"gradient check: max relative error {gc['max_rel_error']:.3e} "
          f"over {gc['instances']} instances")
    stab = body["stability"]
    print(
        "stability probe (injected sigma = {:.0e}, max|r-mu| = {:.3g}):\n"
        "  raw standardized max|A| = {:.6g}\n"
        "  CAS max|A|              = {:.6g} (bound {:.6g})".format(
            stab["injected_sigma"], stab["max_abs_deviation"],
            stab["raw_max_abs"], stab["cas_max_abs"], stab["cas_bound"],
        )
    )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level=args.log_level)
    return EXIT_OK


_HANDLERS = {
    "synth": _cmd_synth,
    "track": _cmd_track,
    "eval": _cmd_eval,
    "reward": _cmd_reward,
    "parse": _cmd_parse,
    "gspo-demo": _cmd_gspo_demo,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, known = _build_parser()
    try:
        _apply_config(parser, known, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        logging.basicConfig(level=args.log_level.upper())
        return _HANDLERS[args.command](args)
    except _UsageExit as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConnectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
