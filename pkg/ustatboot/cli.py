"""
Command line front end: ``ustat-boot {ustat,boot,threshold,test,simulate,replay}``.

Every command prints JSON on standard output and writes a run manifest that
``replay`` can re-execute. Errors are reported as one line on standard error
with exit code 2 (bad input), 3 (numerical failure) or 4 (resource limit).
"""

import argparse
import hashlib
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .applications import MASKS, CovarianceInference
from .bootstrap import BootstrapEngine, BootstrapMethod, StatFunctional, StatKind, StatScale
from .config import EngineSettings
from .exceptions import InvalidArgumentError, UStatBootError
from .kernels import DataMatrix, KernelKind, KernelSpec
from .simulation import DepKind, ModelKind, SimConfig, SimulationLab
from .ustat import UStatCalculator

logger = logging.getLogger(__name__)

PROG = "ustat-boot"
DEFAULT_MANIFEST = "ustat-boot-manifest.json"
SIM_MANIFEST = "manifest.json"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_numeric_csv(path) -> np.ndarray:
    """
    Read a comma-separated numeric table with an optional header row.

    The first row is taken as a header when any of its cells is not a
    number. Ragged rows and non-numeric cells raise InvalidArgumentError
    naming the 1-based line and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as err:
        raise InvalidArgumentError(f"cannot read '{path}': {err}")
    lines = [(number, line) for number, line in enumerate(text.splitlines(), start=1)
             if line.strip()]
    if not lines:
        raise InvalidArgumentError(f"'{path}' is empty")
    width = len(lines[0][1].split(","))
    for number, line in lines:
        fields = len(line.split(","))
        if fields != width:
            raise InvalidArgumentError(
                f"'{path}' row {number} has {fields} fields, expected {width}"
            )
    has_header = not all(_is_number(cell) for cell in lines[0][1].split(","))
    body = lines[1:] if has_header else lines
    if not body:
        raise InvalidArgumentError(f"'{path}' has no data rows")
    frame = pd.read_csv(io.StringIO("\n".join(line for _, line in body)), header=None,
                        dtype=str, keep_default_na=False)
    numeric = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InvalidArgumentError(
            f"'{path}' row {body[row][0]}, column {col + 1}: "
            f"non-numeric cell '{frame.iat[row, col]}'"
        )
    return numeric.to_numpy(dtype=float)


def read_data(path) -> DataMatrix:
    values = read_numeric_csv(path)
    try:
        return DataMatrix(values)
    except InvalidArgumentError as err:
        raise InvalidArgumentError(f"'{path}': {err}")


def file_digest(path) -> str:
    """64-bit BLAKE2b content hash of a file, as hex."""
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=8).hexdigest()


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    pd.DataFrame(matrix).to_csv(path, header=False, index=False)


def _emit(payload: Dict) -> None:
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")


def _settings(args) -> EngineSettings:
    return EngineSettings.from_env(threads=args.threads)


def _kernel(args, data: DataMatrix) -> KernelSpec:
    return KernelSpec.from_name(args.kernel, data.p)


def cmd_ustat(args) -> Dict:
    data = read_data(args.data)
    kernel = _kernel(args, data)
    summary = UStatCalculator(_settings(args)).compute_ustat(data, kernel)
    if args.matrix_out:
        write_matrix_csv(kernel.to_matrix(summary.u), args.matrix_out)
    return {"n": data.n, "p": data.p, "d": kernel.output_dim, "kernel": kernel.name,
            "u": summary.u.tolist(), "v": summary.v.tolist()}


def cmd_boot(args) -> Dict:
    data = read_data(args.data)
    kernel = _kernel(args, data)
    engine = BootstrapEngine(_settings(args))
    functional = StatFunctional(StatKind(args.stat), StatScale(args.scale))
    draws = engine.run_bootstrap(data, kernel, BootstrapMethod(args.method), functional,
                                 B=args.B, seed=args.seed)
    quantiles = engine.quantiles(draws, args.alpha)
    if args.dump_draws:
        Path(args.dump_draws).write_text("".join(f"{value!r}\n" for value in draws.values.tolist()))
    return {"n": data.n, "p": data.p, "d": kernel.output_dim, "kernel": kernel.name,
            "method": draws.method.value, "stat": args.stat, "scale": args.scale,
            "B": draws.B, "seed": draws.seed,
            "quantiles": [{"alpha": q.level, "value": q.value} for q in quantiles],
            "summary": draws.summary()}


def cmd_threshold(args) -> Dict:
    data = read_data(args.data)
    result = CovarianceInference(_settings(args)).select_threshold(
        data, alpha=args.alpha, beta=args.beta, B=args.B, seed=args.seed,
        keep_diag=args.keep_diag,
    )
    write_matrix_csv(result.thresholded, args.matrix_out)
    payload = result.to_dict()
    payload["matrix"] = str(args.matrix_out)
    return payload


def cmd_test(args) -> Dict:
    data = read_data(args.data)
    null = read_numeric_csv(args.null)
    inference = CovarianceInference(_settings(args))
    test = inference.simultaneous_cov_test if args.target == "cov" else inference.kendall_test
    outcome = test(data, null, alpha=args.alpha, B=args.B, seed=args.seed, mask=args.mask)
    payload = outcome.to_dict()
    payload["target"] = args.target
    return payload


def _sim_config(args) -> SimConfig:
    return SimConfig(model=ModelKind(args.model), dep=DepKind(args.dep), n=args.n, p=args.p,
                     reps=args.reps, seed=args.seed, epsilon=args.epsilon, nu=args.nu,
                     L=args.L, m=args.m, sanity=args.sanity, size_B=args.size_B,
                     alpha=args.alpha)


def cmd_simulate(args) -> Dict:
    config = _sim_config(args)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise InvalidArgumentError(f"output directory '{out}' is not empty; use --force")
    lab = SimulationLab(_settings(args))
    report = lab.run_gaussian_approx_experiment(config)
    paths = lab.write_report(report, out, force=True)
    payload = report.summary()
    payload["artifacts"] = {name: str(path) for name, path in paths.items()}
    return payload


def cmd_replay(args) -> Dict:
    manifest_path = Path(args.manifest_file)
    try:
        manifest = json.loads(manifest_path.read_text())
        argv = list(manifest["argv"])
        inputs = dict(manifest.get("inputs", {}))
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise InvalidArgumentError(f"cannot read manifest '{manifest_path}': {err}")
    for path, digest in inputs.items():
        if not Path(path).exists() or file_digest(path) != digest:
            raise InvalidArgumentError(f"input '{path}' changed since the manifest was written")
    if args.force and manifest.get("command") == "simulate" and "--force" not in argv:
        argv.append("--force")
    logger.info("replaying %s", " ".join(argv))
    return {"replay": argv}


COMMANDS = {
    "ustat": cmd_ustat,
    "boot": cmd_boot,
    "threshold": cmd_threshold,
    "test": cmd_test,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker count (default: $USTAT_BOOT_THREADS or 1)")
    common.add_argument("--manifest", default=None,
                        help=f"run manifest path (default: {DEFAULT_MANIFEST})")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog=PROG, description="Bootstrap inference for "
                                     "high-dimensional U-statistics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kernels = [KernelKind.MEAN.value, KernelKind.COVARIANCE.value, KernelKind.KENDALL.value]

    ustat = sub.add_parser("ustat", parents=[common], help="U- and V-statistics")
    ustat.add_argument("data")
    ustat.add_argument("--kernel", choices=kernels, required=True)
    ustat.add_argument("--matrix-out", default=None)

    boot = sub.add_parser("boot", parents=[common], help="bootstrap quantiles")
    boot.add_argument("data")
    boot.add_argument("--kernel", choices=kernels, required=True)
    boot.add_argument("--method", choices=[m.value for m in BootstrapMethod], default="mult")
    boot.add_argument("--B", type=int, default=None)
    boot.add_argument("--stat", choices=["max", "absmax", "offabsmax"], default="absmax")
    boot.add_argument("--scale", choices=[s.value for s in StatScale], default="raw")
    boot.add_argument("--alpha", type=float, nargs="+", default=[0.95])
    boot.add_argument("--seed", type=int, default=0)
    boot.add_argument("--dump-draws", default=None)

    threshold = sub.add_parser("threshold", parents=[common], help="thresholded covariance")
    threshold.add_argument("data")
    threshold.add_argument("--alpha", type=float, default=0.05)
    threshold.add_argument("--beta", type=float, default=1.0)
    threshold.add_argument("--B", type=int, default=None)
    threshold.add_argument("--seed", type=int, default=0)
    threshold.add_argument("--keep-diag", action="store_true")
    threshold.add_argument("--matrix-out", default="thresholded.csv")

    test = sub.add_parser("test", parents=[common], help="simultaneous tests")
    test.add_argument("target", choices=["cov", "kendall"])
    test.add_argument("data")
    test.add_argument("--null", required=True)
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--B", type=int, default=None)
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--mask", choices=MASKS, default="off")

    simulate = sub.add_parser("simulate", parents=[common], help="Gaussian approximation experiment")
    simulate.add_argument("--model", choices=[m.value for m in ModelKind], required=True)
    simulate.add_argument("--dep", choices=[d.value for d in DepKind if d != DepKind.CUSTOM],
                          default="d2")
    simulate.add_argument("--n", type=int, default=500)
    simulate.add_argument("--p", type=int, default=40)
    simulate.add_argument("--reps", type=int, default=5000)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--epsilon", type=float, default=0.2)
    simulate.add_argument("--nu", type=float, default=None)
    simulate.add_argument("--L", type=int, default=None)
    simulate.add_argument("--m", type=int, default=None)
    simulate.add_argument("--sanity", action="store_true")
    simulate.add_argument("--size-B", type=int, default=0)
    simulate.add_argument("--alpha", type=float, default=0.05)
    simulate.add_argument("--force", action="store_true")

    replay = sub.add_parser("replay", help="re-run a stored manifest")
    replay.add_argument("manifest_file")
    replay.add_argument("--force", action="store_true")
    replay.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _manifest_path(args) -> Path:
    if args.command == "simulate":
        return Path(args.out) / SIM_MANIFEST
    return Path(args.manifest or DEFAULT_MANIFEST)


def _write_manifest(args, argv: List[str], started: str) -> None:
    parameters = {key: value for key, value in vars(args).items()
                  if key not in ("command", "verbose", "manifest")}
    inputs = {}
    for key in ("data", "null"):
        if getattr(args, key, None):
            inputs[getattr(args, key)] = file_digest(getattr(args, key))
    manifest = {
        "command": args.command,
        "argv": argv,
        "parameters": parameters,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": inputs,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    _manifest_path(args).write_text(json.dumps(manifest, indent=2) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line and return the process exit code.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv[1:]``
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.command == "replay":
            argv = cmd_replay(args)["replay"]
            args = build_parser().parse_args(argv)
        started = datetime.now(timezone.utc).isoformat()
        payload = COMMANDS[args.command](args)
        _emit(payload)
        _write_manifest(args, argv, started)
    except UStatBootError as err:
        sys.stderr.write(f"{PROG}: error: {err}\n")
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
