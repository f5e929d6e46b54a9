import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, TypeVar

import click
import numpy as np
from attrs import frozen

# Initialize Colorama to ensure ANSI codes work on Windows terminals
# Import dynamically to avoid type-stub issues in linting environments
try:  # pragma: no cover
    import importlib

    _cm = importlib.import_module("colorama")
    Fore = _cm.Fore  # type: ignore[assignment]
    Style = _cm.Style  # type: ignore[assignment]
    colorama_init = _cm.init  # type: ignore[assignment]
except Exception:  # pragma: no cover

    class _NoColor:
        def __getattr__(self, _: str) -> str:
            return ""

    Fore = _NoColor()  # type: ignore[assignment]
    Style = _NoColor()  # type: ignore[assignment]

    # Keep signature simple to satisfy linters formatting
    def colorama_init(*_: object, **__: object) -> None:
        return None


from qcorr.__version__ import __version__
from qcorr.channels import (
    decomposition_residuals,
    expectation_value,
    statistical_decomposition,
)
from qcorr.correlator import exact_correlation, universal_correlator
from qcorr.dilation import (
    dilate,
    embed_input,
    partial_expectation,
    reduced_map,
)
from qcorr.errors import InvalidInputError, NumericalFailureError
from qcorr.linalg import ComplexMatrix, max_norm
from qcorr.models import (
    Document,
    dump_document,
    load_matrix_file,
    map_to_document,
    matrix_to_document,
)
from qcorr.simulate import (
    analytic_variance,
    estimate_correlation,
    estimate_hp_expectation,
    uncertainty_check,
)
from qcorr.validation import (
    Tolerances,
    ValidationReport,
    random_hermitian,
    random_state,
    run_validation,
)

EXIT_VALIDATION_FAILURE = 1
EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL_FAILURE = 3

F = TypeVar("F", bound=Callable[..., Any])

_COLOR_FORCE_DISABLE: bool = False


@frozen
class RunConfig:
    """Options shared by the commands.

    Attributes:
        command: Name of the command being run.
        shots: Number of shots of sampling commands.
        seed: Seed of the random streams.
        workers: Threads running shot blocks; never part of the output.
        real_fraction: Share of correlation shots given to the real part.
        tolerances: Threshold overrides for ``validate``.
        out: File receiving the result document, stdout when missing.
    """

    command: str
    shots: int = 100_000
    seed: int = 0
    workers: int = 1
    real_fraction: float = 0.5
    tolerances: Tuple[Tuple[str, float], ...] = ()
    out: Optional[Path] = None

    def metadata(self) -> Document:
        """Reproducibility fields copied into sampling documents."""

        return {
            "command": self.command,
            "shots": self.shots,
            "seed": self.seed,
        }


def _exit_codes(func: F) -> F:
    """Map library exceptions to the exit-code contract of the tool."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except InvalidInputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INVALID_INPUT)
        except NumericalFailureError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL_FAILURE)

    return wrapper  # type: ignore[return-value]


def _emit(config: RunConfig, document: Document) -> None:
    """Write the result document to ``--out`` or stdout."""

    if config.out is None:
        dump_document(document, sys.stdout)
        return
    with config.out.open("w", encoding="utf-8") as fh:
        dump_document(document, fh)
    logging.debug("wrote %s document to %s", config.command, config.out)


def _complex_doc(value: complex) -> Dict[str, float]:
    return {"re": float(value.real), "im": float(value.imag)}


def _load_operator(path: Path, name: str) -> ComplexMatrix:
    return load_matrix_file(path).as_operator(name)


def _colors_supported() -> bool:
    """Return True if ANSI colors are likely supported for stderr."""

    try:
        import os

        if _COLOR_FORCE_DISABLE:
            return False
        if os.environ.get("NO_COLOR") is not None:
            return False
        term = os.environ.get("TERM", "")
        if term.lower() == "dumb":
            return False
        return bool(getattr(sys.stderr, "isatty", lambda: False)())
    except Exception:
        return False


def _c(text: str, fg: Optional[str] = None, bold: bool = False) -> str:
    """Colorize text using Colorama if supported; otherwise return as-is."""

    if not _colors_supported() or (fg is None and not bold):
        return text

    color_map = {
        "red": Fore.RED,
        "green": Fore.GREEN,
        "yellow": Fore.YELLOW,
        "cyan": Fore.CYAN,
    }

    parts: list[str] = []
    if bold:
        parts.append(Style.BRIGHT)
    if fg is not None:
        parts.append(color_map.get(fg.lower(), ""))
    parts.append(text)
    parts.append(Style.RESET_ALL)
    return "".join(parts)


def _print_summary(report: ValidationReport) -> None:
    """Print the table of maximum residuals to stderr."""

    header = "module      invariant       d   max residual  tol"
    click.echo(_c(header, "cyan", True), err=True)
    for r in report.results:
        verdict = _c("pass", "green", True) if r.passed else _c(
            "FAIL", "red", True
        )
        click.echo(
            f"{r.module:<11} {r.name:<15} {r.dim:<3} "
            f"{r.max_residual:<13.3e} {r.tolerance:<9.1e} {verdict}",
            err=True,
        )


def _parse_tolerances(raw: Tuple[str, ...]) -> Tuple[Tuple[str, float], ...]:
    """Turn ``NAME=VALUE`` strings into pairs."""

    pairs = []
    for item in raw:
        name, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError(item)
            pairs.append((name.strip(), float(value)))
        except ValueError as exc:
            raise InvalidInputError(
                f"tolerance override {item!r} is not NAME=VALUE"
            ) from exc
    return tuple(pairs)


def _shots_option(func: F) -> F:
    func = click.option(
        "--shots",
        type=int,
        default=100_000,
        show_default=True,
        help="Number of shots.",
    )(func)
    func = click.option(
        "--workers",
        type=int,
        default=1,
        show_default=True,
        help="Threads running shot blocks (does not change results).",
    )(func)
    return func


def _seed_option(func: F) -> F:
    return click.option(
        "--seed",
        type=int,
        default=0,
        show_default=True,
        help="Seed of the random streams.",
    )(func)


def _out_option(func: F) -> F:
    return click.option(
        "--out",
        type=click.Path(
            file_okay=True, dir_okay=False, writable=True, path_type=Path
        ),
        default=None,
        help="Write the result document here instead of stdout.",
    )(func)


def _file_option(
    name: str, dest: str, help_text: str
) -> Callable[[F], F]:
    return click.option(
        name,
        dest,
        type=click.Path(
            file_okay=True, dir_okay=False, exists=True, path_type=Path
        ),
        required=True,
        help=help_text,
    )


@click.group()
@click.option(
    "--debug/--no-debug", default=False, help="Enable verbose debug logging."
)
@click.option(
    "--trace/--no-trace", default=False, help="Enable trace level logging."
)
@click.option(
    "--log-file",
    type=click.Path(file_okay=True, dir_okay=False),
    help=("Path to write log output to instead of stderr."),
)
@click.version_option(__version__, prog_name="qcorr")
def cli(debug: bool, trace: bool, log_file: Optional[str] = None) -> None:
    """Access two-point quantum correlation functions Tr[A rho B]."""
    # Ensure Colorama is initialized so ANSI colors render on Windows
    try:
        colorama_init()
    except Exception:
        pass
    if trace:
        level = 1
    elif debug:
        level = logging.DEBUG
    else:
        level = logging.INFO

    logging.basicConfig(
        filename=log_file,
        level=level,
        format="[%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    if trace:
        logging.debug("Trace mode is on")
    if debug:
        logging.debug("Debug mode is on")


@cli.command(name="correlate")
@_file_option("--state", "state_path", "Matrix document of the state rho.")
@_file_option("--obsA", "obs_a_path", "Matrix document of the observable A.")
@_file_option("--obsB", "obs_b_path", "Matrix document of the observable B.")
@click.option(
    "--mode",
    type=click.Choice(["exact", "simulate"]),
    default="exact",
    show_default=True,
    help="Exact oracle or sampled estimate.",
)
@click.option(
    "--real-fraction",
    type=float,
    default=0.5,
    show_default=True,
    help="Share of the shots spent on the real part.",
)
@_shots_option
@_seed_option
@_out_option
@_exit_codes
def cli_correlate(
    state_path: Path,
    obs_a_path: Path,
    obs_b_path: Path,
    mode: str,
    real_fraction: float,
    shots: int,
    workers: int,
    seed: int,
    out: Optional[Path],
) -> None:
    """Compute or estimate Tr[A rho B].

    Both modes emit the run metadata and the l1 costs of the two
    decompositions; shots and seed only drive the simulate mode.

    Args:
        state_path: State document.
        obs_a_path: Observable A document.
        obs_b_path: Observable B document.
        mode: ``exact`` or ``simulate``.
        real_fraction: Shot split between real and imaginary parts.
        shots: Number of shots in simulate mode.
        workers: Threads running shot blocks.
        seed: Seed of the random streams.
        out: Optional output file.
    """

    config = RunConfig(
        "correlate", shots, seed, workers, real_fraction, out=out
    )
    rho = _load_operator(state_path, "state")
    a = _load_operator(obs_a_path, "observable A")
    b = _load_operator(obs_b_path, "observable B")
    exact = exact_correlation(rho, a, b)
    d = rho.shape[0]
    realization = universal_correlator(d)

    document = config.metadata()
    document.update(
        {
            "mode": mode,
            "dim": d,
            "l1_cost": {
                "re": realization.real_decomposition.l1_cost,
                "im": realization.imag_decomposition.l1_cost,
            },
        }
    )
    if mode == "exact":
        document["result"] = _complex_doc(exact)
        _emit(config, document)
        return

    estimate = estimate_correlation(
        rho,
        a,
        b,
        shots,
        seed,
        real_fraction=real_fraction,
        workers=workers,
    )
    document.update(
        {
            "real_fraction": real_fraction,
            "result": {
                "re": estimate.real.estimate,
                "im": estimate.imag.estimate,
                "std_error_re": estimate.real.std_error,
                "std_error_im": estimate.imag.std_error,
            },
            "oracle": _complex_doc(exact),
        }
    )
    _emit(config, document)


@cli.command(name="decompose")
@_file_option("--map", "map_path", "Matrix document of the map's Choi matrix.")
@_out_option
@_exit_codes
def cli_decompose(map_path: Path, out: Optional[Path]) -> None:
    """Statistically decompose a Hermiticity preserving map."""

    config = RunConfig("decompose", out=out)
    lmap = load_matrix_file(map_path).as_map()
    dec = statistical_decomposition(lmap)
    res = decomposition_residuals(dec, lmap)
    _emit(
        config,
        {
            "command": "decompose",
            "dim_in": lmap.dim_in,
            "dim_out": lmap.dim_out,
            "coefficients": list(dec.coefficients),
            "parts": [map_to_document(p) for p in dec.parts],
            "l1_cost": dec.l1_cost,
            "max_abs_coefficient": dec.max_abs_coefficient,
            "residuals": {
                "reconstruction": res.reconstruction,
                "trace_preservation": res.trace_preservation,
                "min_cp_eigenvalues": list(res.min_cp_eigenvalues),
            },
        },
    )


@cli.command(name="dilate")
@_file_option("--map", "map_path", "Matrix document of the map's Choi matrix.")
@click.option(
    "--probes",
    type=int,
    default=20,
    show_default=True,
    help="Random (state, observable) probes of the partial expectation.",
)
@_seed_option
@_out_option
@_exit_codes
def cli_dilate(
    map_path: Path, probes: int, seed: int, out: Optional[Path]
) -> None:
    """Build the isometry, ancilla observable and unitary of a map."""

    config = RunConfig("dilate", seed=seed, out=out)
    if probes < 1:
        raise InvalidInputError("probes must be >= 1")
    lmap = load_matrix_file(map_path).as_map()
    dec = statistical_decomposition(lmap)
    dil = dilate(dec)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    partial = 0.0
    embedding = 0.0
    for _ in range(probes):
        rho = random_state(rng, lmap.dim_in)
        a = random_hermitian(rng, lmap.dim_out)
        exact = expectation_value(lmap, rho, a).real
        partial = max(partial, abs(partial_expectation(dil, rho, a) - exact))
        image = dil.u @ embed_input(dil, rho) @ dil.u.conj().T
        embedding = max(
            embedding, max_norm(image - dil.v @ rho @ dil.v.conj().T)
        )

    _emit(
        config,
        {
            "command": "dilate",
            "dim_in": dil.dim_in,
            "dim_out": dil.dim_out,
            "ancilla_dim": dil.ancilla_dim,
            "coefficients": list(dil.coefficients),
            "v": matrix_to_document(dil.v, dil.dim_in, dil.joint_dim),
            "z": matrix_to_document(dil.z),
            "u": matrix_to_document(dil.u),
            "residuals": {
                "isometry": max_norm(
                    dil.v.conj().T @ dil.v - np.eye(dil.dim_in)
                ),
                "unitary": max_norm(
                    dil.u.conj().T @ dil.u - np.eye(dil.joint_dim)
                ),
                "embedding": embedding,
                "partial_expectation": partial,
                "reduced_map": max_norm(reduced_map(dil).choi - lmap.choi),
                "probes": probes,
            },
        },
    )


@cli.command(name="simulate")
@_file_option("--map", "map_path", "Matrix document of the map's Choi matrix.")
@_file_option("--state", "state_path", "Matrix document of the input state.")
@_file_option("--obsA", "obs_a_path", "Matrix document of the observable.")
@_shots_option
@_seed_option
@_out_option
@_exit_codes
def cli_simulate(
    map_path: Path,
    state_path: Path,
    obs_a_path: Path,
    shots: int,
    workers: int,
    seed: int,
    out: Optional[Path],
) -> None:
    """Estimate Tr[L(rho) A] with the instrument protocol."""

    config = RunConfig("simulate", shots, seed, workers, out=out)
    lmap = load_matrix_file(map_path).as_map()
    rho = _load_operator(state_path, "state")
    a = _load_operator(obs_a_path, "observable A")
    dec = statistical_decomposition(lmap)
    result = estimate_hp_expectation(
        dec, rho, a, shots, seed, workers=workers
    )
    oracle = expectation_value(lmap, rho, a).real
    z_score = (
        (result.estimate - oracle) / result.std_error
        if result.std_error > 0.0
        else 0.0
    )

    document = config.metadata()
    document.update(
        {
            "dim_in": lmap.dim_in,
            "dim_out": lmap.dim_out,
            "coefficients": list(dec.coefficients),
            "l1_cost": dec.l1_cost,
            "estimate": result.estimate,
            "std_error": result.std_error,
            "variance": result.variance,
            "analytic_variance": analytic_variance(dec, rho, a),
            "oracle": oracle,
            "z_score": z_score,
            "per_outcome": [
                {
                    "outcome": s.outcome,
                    "frequency": s.frequency,
                    "mean_eigenvalue": s.mean_eigenvalue,
                }
                for s in result.per_outcome
            ],
        }
    )
    _emit(config, document)


@cli.command(name="uncertainty")
@_file_option("--state", "state_path", "Matrix document of the state rho.")
@_file_option("--obsA", "obs_a_path", "Matrix document of the observable A.")
@_file_option("--obsB", "obs_b_path", "Matrix document of the observable B.")
@_shots_option
@_seed_option
@_out_option
@_exit_codes
def cli_uncertainty(
    state_path: Path,
    obs_a_path: Path,
    obs_b_path: Path,
    shots: int,
    workers: int,
    seed: int,
    out: Optional[Path],
) -> None:
    """Test the Robertson uncertainty relation from sampled data."""

    config = RunConfig("uncertainty", shots, seed, workers, out=out)
    rho = _load_operator(state_path, "state")
    a = _load_operator(obs_a_path, "observable A")
    b = _load_operator(obs_b_path, "observable B")
    report = uncertainty_check(rho, a, b, shots, seed, workers=workers)

    document = config.metadata()
    document.update(
        {
            "commutator": _complex_doc(report.commutator),
            "commutator_std_error": _complex_doc(
                report.commutator_std_error
            ),
            "bound": report.bound,
            "bound_std_error": report.bound_std_error,
            "delta_a": report.delta_a,
            "delta_b": report.delta_b,
            "product": report.product,
            "product_std_error": report.product_std_error,
            "holds": report.holds,
            "saturated": report.saturated,
            "status": report.status,
        }
    )
    _emit(config, document)


@cli.command(name="validate")
@click.option(
    "--dim",
    "dims",
    type=int,
    multiple=True,
    help="Dimension to validate (repeatable, 2-4). Default: 2 and 3.",
)
@click.option(
    "--instances",
    type=int,
    default=100,
    show_default=True,
    help="Random instances per suite and dimension.",
)
@click.option(
    "--tol",
    "tols",
    multiple=True,
    help="Tolerance override NAME=VALUE (repeatable).",
)
@click.option(
    "--color/--no-color",
    default=True,
    help="Enable or disable ANSI colors in the summary table.",
)
@_seed_option
@_out_option
@_exit_codes
def cli_validate(
    dims: Tuple[int, ...],
    instances: int,
    tols: Tuple[str, ...],
    color: bool,
    seed: int,
    out: Optional[Path],
) -> None:
    """Run the invariant suites on random instances.

    Exits with 1 when any invariant exceeds its tolerance.
    """

    config = RunConfig(
        "validate", seed=seed, tolerances=_parse_tolerances(tols), out=out
    )
    tolerances = Tolerances().override(dict(config.tolerances))
    report = run_validation(
        list(dims) if dims else [2, 3], instances, seed, tolerances
    )

    prev_disable = _COLOR_FORCE_DISABLE
    try:
        globals()["_COLOR_FORCE_DISABLE"] = not color
        _print_summary(report)
    finally:
        globals()["_COLOR_FORCE_DISABLE"] = prev_disable

    _emit(
        config,
        {
            "command": "validate",
            "seed": seed,
            "instances": instances,
            "passed": report.passed,
            "tolerances": tolerances.as_dict(),
            "results": [
                {
                    "module": r.module,
                    "invariant": r.name,
                    "dim": r.dim,
                    "instances": r.instances,
                    "max_residual": r.max_residual,
                    "tolerance": r.tolerance,
                    "passed": r.passed,
                }
                for r in report.results
            ],
        },
    )
    if not report.passed:
        sys.exit(EXIT_VALIDATION_FAILURE)
