"""
Command-Line Interface

One click group with a subcommand per experiment. Each subcommand resolves
a RunConfig (flags over params.yaml over defaults), runs the library,
writes JSON/CSV/SVG artifacts plus manifest.json, and exits with the code
of any library error (2 usage, 3 certification, 4 indeterminacy, 1 other).
"""

import functools
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd

from src.artifacts import ArtifactWriter, dumps, ledger_dict, plot_domain, plot_trend
from src.augment import (
    ahlfors_audit,
    build_augmented,
    cantor_disc_augmentation,
    corona_comparison,
    upper_density_audit,
)
from src.carleson import (
    HarmonicFunctionHandle,
    carleson_functional,
    checkerboard_region,
    dist_integral,
    eps_approximant,
)
from src.config import RunConfig, get_settings, resolve_config
from src.corona import CoronaParams, generations, interlacing
from src.cubes import attach_corkscrew_balls, audit_family, build_cubes, small_boundary_stats
from src.errors import CoronaError, ParameterError
from src.geometry import Ball, CantorSpec, Domain, domain_from_spec, domain_to_spec, make_cantor
from src.ledger import ConstantsLedger
from src.logging_setup import setup_logging
from src.whitney import check_dilations, check_disjoint, overlap_multiplicity, whitney_decompose

logger = logging.getLogger(__name__)


# ============================================================================
# Option plumbing
# ============================================================================


def _parse_domain(value: Optional[str]) -> Optional[Dict[str, Any]]:
    if value is None:
        return None
    path = Path(value)
    text = path.read_text(encoding="utf-8") if path.suffix == ".json" and path.exists() else value
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise click.BadParameter(f"not a JSON domain spec: {exc}") from exc
    if not isinstance(spec, dict):
        raise click.BadParameter("domain spec must be a JSON object")
    return spec


def common_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""
    options = [
        click.option("--domain", "domain_spec", default=None, help="Domain spec as JSON text or a .json file."),
        click.option("--lam", type=float, default=None, help="Cantor ratio (shorthand for a Cantor domain)."),
        click.option("--level", type=int, default=None, help="Cantor level (with --lam)."),
        click.option("--seed", type=int, default=None, help="Master seed (mandatory via flag or params.yaml)."),
        click.option("--output-dir", type=click.Path(path_type=Path), default=None, help="Artifact directory."),
        click.option("--budget", type=int, default=None, help="Walk paths per estimate."),
        click.option("--shell", type=float, default=None, help="Walk termination shell width."),
        click.option("--progress/--no-progress", default=False, help="Show progress bars."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def guarded(func: Callable) -> Callable:
    """Map library errors to their exit codes with a JSON diagnostic on stderr."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        ctx = click.get_current_context()
        try:
            func(*args, **kwargs)
        except CoronaError as exc:
            logger.error(f"{type(exc).__name__}: {exc.message}")
            click.echo(dumps(exc.to_dict()), err=True)
            ctx.exit(exc.exit_code)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as exc:  # noqa: BLE001
            logger.exception(f"Unexpected failure: {exc}")
            click.echo(dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": 1}), err=True)
            ctx.exit(1)

    return wrapper


def _config(command: str, kwargs: Dict[str, Any]) -> RunConfig:
    settings = click.get_current_context().obj["settings"]
    domain = _parse_domain(kwargs.pop("domain_spec", None))
    lam, level = kwargs.pop("lam", None), kwargs.pop("level", None)
    if lam is not None:
        domain = {"kind": "cantor", "lambda": lam, "level": 3 if level is None else level}
    output_dir = kwargs.pop("output_dir", None)
    kwargs.pop("progress", None)
    return resolve_config(command, domain, kwargs, settings, output_dir)


def _cantor_domain(config: RunConfig) -> Domain:
    domain = domain_from_spec(config.domain)
    if domain.cantor is None:
        raise ParameterError("command needs a Cantor domain", kind=domain.kind)
    return domain


# ============================================================================
# Runners
# ============================================================================


def run_gen_domain(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    domain = domain_from_spec(config.domain)
    ledger = ConstantsLedger()
    ledger.record("alpha", domain.params.alpha, "fixed")
    ledger.record("beta", domain.params.beta, "fixed")
    if domain.cantor is not None:
        ledger.record("lambda-cantor", domain.cantor.lam, "fixed")
    rows = [
        {"label": p.label, "role": p.role, "type": type(p).__name__.lower(), "length": p.length}
        for p in domain.pieces
    ]
    writer.json("domain.json", domain_to_spec(domain))
    writer.csv("pieces.csv", pd.DataFrame(rows, columns=["label", "role", "type", "length"]))
    writer.svg("domain.svg", plot_domain(domain))
    return ledger


def run_whitney(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    p = config.params
    domain = domain_from_spec(config.domain)
    region = Ball(tuple(p.center), p.radius)
    wd = whitney_decompose(domain, region, p.min_side)
    audits = {
        **check_dilations(domain, wd),
        "disjoint": check_disjoint(wd),
        "overlap_multiplicity": overlap_multiplicity(wd),
    }
    ledger = ConstantsLedger()
    ledger.record("c6", wd.constants.c6, "fixed")
    ledger.record("c7", wd.constants.c7, "fixed", ["c6"])
    ledger.record("c8", wd.constants.c8, "fixed", ["c6"])
    ledger.record("whitney-overlap", audits["overlap_multiplicity"], "measured", ["c6"])
    writer.csv("whitney_cells.csv", wd.to_frame())
    writer.json("whitney.json", {"summary": wd.summary(), "audits": audits, "region": region.to_dict()})
    boxes = [c.cube.dilated_box(1.0) for c in wd.cells]
    writer.svg("whitney.svg", plot_domain(domain, boxes, "Whitney cells"))
    return ledger


def _family(config: RunConfig, domain: Domain, progress: bool, certify: bool = True):
    p = config.params
    family = build_cubes(domain, p.N, p.eta, p.jmax, p.depth, progress=progress)
    if certify:
        attach_corkscrew_balls(
            family, p.eps, p.corkscrew_samples, p.seed, shell=p.shell, workers=config.workers, progress=progress
        )
    return family


def run_cubes(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    domain = domain_from_spec(config.domain)
    family = _family(config, domain, progress)
    audits = audit_family(family)
    root = family.roots()[0]
    taus = [root.scale * 2.0 ** (-k) for k in range(2, 6)]
    small = small_boundary_stats(family, root, taus)
    writer.json("cubes.json", family.to_dict())
    writer.json("cubes_audit.json", {"audits": audits, "small_boundary": small.to_dict()})
    return family.ledger


def run_corona(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    p = config.params
    domain = domain_from_spec(config.domain)
    family = _family(config, domain, progress)
    params = CoronaParams(p.A, p.delta, p.eps)
    trees, rows, packing = [], [], []
    for root in family.roots():
        tree = generations(root, family, params, p.kmax, p.budget, p.seed, p.shell, config.workers)
        report = interlacing(tree, params)
        trees.append({"tree": tree.to_dict(), "interlacing": report.to_dict()})
        for k, gen in enumerate(tree.generations, start=1):
            for cube, label in gen:
                rows.append({"root": root.index, "generation": k, "level": cube.level, "index": cube.index,
                             "kind": label.kind, "ratio": label.ratio, "stderr": label.stderr})
        for k, (total, inc) in enumerate(zip(tree.partial_sums, tree.increments()), start=1):
            packing.append({"root": root.index, "generation": k, "partial_sum": total, "increment": inc})
        c5 = tree.c5
        if math.isfinite(c5):
            family.ledger.record(f"c5-root{root.index}", c5, "measured")
        family.ledger.record(f"C1-root{root.index}", tree.C1, "measured")
    writer.json("corona.json", {"params": params.to_dict(), "roots": trees})
    writer.csv(
        "corona_generations.csv",
        pd.DataFrame(rows, columns=["root", "generation", "level", "index", "kind", "ratio", "stderr"]),
    )
    packing_frame = pd.DataFrame(packing, columns=["root", "generation", "partial_sum", "increment"])
    writer.csv("packing.csv", packing_frame)
    if len(packing_frame):
        figure = plot_trend(packing_frame, "generation", "partial_sum", "root", "Packing partial sums")
        writer.svg("packing.svg", figure)
    return family.ledger


def _harmonic_function(config: RunConfig, domain: Domain) -> HarmonicFunctionHandle:
    p = config.params
    if domain.cantor is not None:
        return HarmonicFunctionHandle.harmonic_measure(checkerboard_region(domain), p.budget, p.seed, p.shell)
    coefficients = {"halfplane-angle": (p.center[0],), "linear": (1.0, 0.0, 0.0), "constant": (0.5,)}
    return HarmonicFunctionHandle.analytic(domain, p.formula, coefficients.get(p.formula, ()))


def run_carleson(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    p = config.params
    domain = domain_from_spec(config.domain)
    u = _harmonic_function(config, domain)
    report = carleson_functional(domain, u, p.center, p.radius, p.min_side)
    writer.json("carleson.json", report.to_dict())
    frame = pd.DataFrame(
        [{"x": report.center[0], "y": report.center[1], "radius": report.radius, "value": report.value,
          "truncation_bound": report.truncation_bound}],
        columns=["x", "y", "radius", "value", "truncation_bound"],
    )
    writer.csv("carleson.csv", frame)
    ledger = ConstantsLedger()
    ledger.record("carleson-C", report.value, "measured", note=f"r={p.radius}")
    return ledger


def run_eps_approx(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    p = config.params
    domain = domain_from_spec(config.domain)
    u = _harmonic_function(config, domain)
    region = Ball(tuple(p.center), p.radius)
    result = eps_approximant(domain, u, p.eps, region, p.min_side, verify_samples=10_000, seed=p.seed)
    writer.json("eps_approx.json", result.to_dict())
    ledger = ConstantsLedger()
    ledger.record("bv-ratio", result.bv_ratio, "measured", note=f"eps={p.eps}")
    return ledger


def run_augment(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    p = config.params
    domain = _cantor_domain(config)
    family = _family(config, domain, progress)
    params = CoronaParams(p.A, p.delta, p.eps)
    family.ledger.record("delta", p.delta, "fixed")
    augmented, sigma = build_augmented(
        domain, family, params, p.aug_depth, p.budget, p.seed, p.shell, p.cap_count, config.workers, progress
    )
    ahlfors = ahlfors_audit(sigma, p.trials, p.seed)
    upper = upper_density_audit(domain, p.trials, p.seed)
    family.ledger.record("ahlfors-C", ahlfors.constant, "measured", ["c18"] if "c18" in family.ledger else [])
    writer.json("augmented_domain.json", augmented.to_dict())
    writer.csv("sigma.csv", sigma.to_frame())
    writer.csv("ahlfors.csv", ahlfors.table)
    writer.json("augment_audit.json", {"ahlfors": ahlfors.to_dict(), "upper_density": upper.to_dict(),
                                       **augmented.audits})
    if domain.cantor.lam < 0.25:
        discs = cantor_disc_augmentation(domain.cantor, window_radius=domain.window.radius, budget=p.budget,
                                         seed=p.seed, shell=p.shell)
        writer.json("disc_augmentation.json", discs.audits)
    if p.compare_corona:
        comparison = corona_comparison(family, augmented, params, p.kmax, p.budget, p.seed, p.corkscrew_samples,
                                       config.workers)
        writer.csv("corona_comparison.csv", comparison)
    writer.svg("augment.svg", plot_domain(augmented.domain, title="Augmented domain"))
    return family.ledger


def run_dichotomy(config: RunConfig, writer: ArtifactWriter, progress: bool) -> ConstantsLedger:
    """Level sweep per Cantor ratio: Carleson value, 1/dist integral and packing sums."""
    p = config.params
    rows: List[Dict[str, Any]] = []
    ledger = ConstantsLedger()
    params = CoronaParams(p.A, p.delta, p.eps)
    for lam in p.lambdas:
        for level in p.levels:
            domain = make_cantor(CantorSpec(lam, level))
            integral = dist_integral(domain, p.center, p.radius)
            u = HarmonicFunctionHandle.harmonic_measure(checkerboard_region(domain), p.budget, p.seed, p.shell)
            carleson = carleson_functional(domain, u, p.center, p.radius, p.min_side)
            family = _family(config, domain, progress)
            sums = []
            for root in family.roots():
                tree = generations(root, family, params, p.kmax, p.budget, p.seed, p.shell, config.workers)
                sums.append(tree.partial_sums)
            width = max(len(s) for s in sums)
            totals = [sum(s[min(k, len(s) - 1)] for s in sums) for k in range(width)]
            increments = np.diff([0.0] + totals).tolist()
            rows.append(
                {
                    "lambda": lam,
                    "level": level,
                    "carleson_value": carleson.value,
                    "dist_integral": integral.value,
                    "dist_converged": integral.converged,
                    "packing_partial_sum": totals[-1],
                    "packing_increments": ";".join(f"{v:.12g}" for v in increments),
                }
            )
            logger.info(f"Dichotomy lam={lam} level={level}: dist={integral.value:.4g} carleson={carleson.value:.4g}")
        ledger.record(f"lambda-cantor-{lam}", lam, "fixed")
    frame = pd.DataFrame(rows)
    writer.csv("dichotomy.csv", frame)
    writer.svg("dichotomy_dist.svg", plot_trend(frame, "level", "dist_integral", "lambda", "1/dist integral / R"))
    writer.svg("dichotomy_carleson.svg", plot_trend(frame, "level", "carleson_value", "lambda", "Carleson value"))
    return ledger


RUNNERS: Dict[str, Callable[[RunConfig, ArtifactWriter, bool], ConstantsLedger]] = {
    "gen-domain": run_gen_domain,
    "whitney": run_whitney,
    "cubes": run_cubes,
    "corona": run_corona,
    "carleson": run_carleson,
    "eps-approx": run_eps_approx,
    "augment": run_augment,
    "dichotomy": run_dichotomy,
}


def run(config: RunConfig, progress: bool = False) -> int:
    """Execute one command and write its artifacts and manifest; returns the exit status."""
    logger.info(f"Running {config.command} into {config.output_dir}")
    writer = ArtifactWriter(config.output_dir, config.command)
    ledger = RUNNERS[config.command](config, writer, progress)
    writer.manifest(config.to_dict(), ledger_dict(ledger))
    return 0


# ============================================================================
# Click group
# ============================================================================


@click.group()
@click.option("--log-level", default=None, help="Override CORONA_LOG_LEVEL.")
@click.option("--log-format", type=click.Choice(["json", "text"]), default=None, help="Override CORONA_LOG_FORMAT.")
@click.option("--workers", type=int, default=None, help="Override CORONA_WORKERS.")
@click.option("--params-file", type=click.Path(path_type=Path), default=None, help="Override CORONA_PARAMS_FILE.")
@click.pass_context
def cli(ctx: click.Context, log_level, log_format, workers, params_file) -> None:
    """Harmonic-measure corona, Carleson and Cantor dichotomy experiments."""
    settings = get_settings()
    updates = {"LOG_LEVEL": log_level, "LOG_FORMAT": log_format, "WORKERS": workers, "PARAMS_FILE": params_file}
    settings = settings.model_copy(update={k: v for k, v in updates.items() if v is not None})
    setup_logging(settings.LOG_LEVEL, settings.LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["settings"] = settings


def _command(name: str, extra: Sequence[Callable] = ()) -> Callable:
    """Register ``func`` (a kwargs filter) as subcommand ``name`` with shared and extra options."""

    def decorate(func: Callable) -> click.Command:
        @functools.wraps(func)
        def command(**kwargs: Any) -> None:
            progress = kwargs.get("progress", False)
            config = _config(name, func(kwargs))
            run(config, progress)

        command = common_options(guarded(command))
        for option in reversed(list(extra)):
            command = option(command)
        return cli.command(name)(command)

    return decorate


_region = [
    click.option("--center", nargs=2, type=float, default=None, help="Center x y."),
    click.option("--radius", type=float, default=None, help="Ball radius."),
    click.option("--min-side", type=float, default=None, help="Smallest Whitney side."),
]
_cubes = [
    click.option("--N", "N", type=int, default=None, help="Scale exponent."),
    click.option("--eta", type=float, default=None, help="Collar parameter."),
    click.option("--jmax", type=int, default=None, help="Deepest cube level."),
    click.option("--depth", type=int, default=None, help="Refinement depth."),
    click.option("--eps", type=float, default=None, help="Corkscrew/stopping epsilon."),
]
_corona = [
    click.option("--A", "A", type=float, default=None, help="High density threshold."),
    click.option("--delta", type=float, default=None, help="Low density threshold."),
    click.option("--kmax", type=int, default=None, help="Generations."),
]


def _as_list(kwargs: Dict[str, Any], key: str) -> Dict[str, Any]:
    if kwargs.get(key) is not None:
        kwargs[key] = list(kwargs[key])
    return kwargs


@_command("gen-domain")
def gen_domain(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Build a domain and write its spec, pieces and drawing."""
    return kwargs


@_command("whitney", _region)
def whitney(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Whitney decomposition of a ball with its audits."""
    return _as_list(kwargs, "center")


@_command("cubes", _cubes)
def cubes(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Boundary cube family with corkscrew balls and audits."""
    return kwargs


@_command("corona", _cubes + _corona)
def corona(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """HD/LD generations and packing sums from every root."""
    return kwargs


@_command("carleson", _region + [click.option("--formula", default=None, help="Closed-form u off Cantor domains.")])
def carleson(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Carleson functional on a boundary ball."""
    return _as_list(kwargs, "center")


@_command("eps-approx", _region + [
    click.option("--eps", type=float, default=None, help="Approximation tolerance."),
    click.option("--formula", default=None, help="Closed-form u off Cantor domains."),
])
def eps_approx(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Piecewise-constant eps-approximant and its BV ratio."""
    return _as_list(kwargs, "center")


@_command("augment", _cubes + _corona + [
    click.option("--aug-depth", type=int, default=None, help="Augmentation generations (1-3)."),
    click.option("--cap-count", type=int, default=None, help="Caps per cube."),
    click.option("--trials", type=int, default=None, help="Sampled balls in the density audit."),
    click.option("--compare-corona", is_flag=True, default=None, help="Re-run the corona on the augmented domain."),
])
def augment(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Augmented domain, sigma and density audits on a Cantor domain."""
    return kwargs


@_command("dichotomy", _region + _cubes + _corona + [
    click.option("--lambdas", type=float, multiple=True, default=None, help="Cantor ratios (repeatable)."),
    click.option("--levels", type=int, multiple=True, default=None, help="Cantor levels (repeatable)."),
])
def dichotomy(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """Level sweep of the Carleson value, 1/dist integral and packing sums."""
    for key in ("lambdas", "levels"):
        kwargs[key] = list(kwargs[key]) if kwargs.get(key) else None
    return _as_list(kwargs, "center")


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the exit status instead of calling sys.exit."""
    try:
        code = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
