"""Command-line entry point.

Exit codes: 0 every checked clause passed, 1 internal error, 2 invalid
configuration, dataset constraint or regime gate, 3 a lemma clause failed
(the report is still written).
"""

import functools
import json
import logging
import os
import sys
from typing import Optional

import click
from celery.utils.log import get_logger

from polyattn.datasets import (
    Label,
    SelfAttnInstance,
    build_selfattn_instance,
    instance_from_matrices,
    load_document,
    read_document,
    read_matrix_csv,
    sample_score,
    sample_selfattn_instance,
    selfattn_shape,
    to_document,
    write_document,
    write_matrix_csv,
)
from polyattn.attention import AttentionWeights, full_attention_matrix
from polyattn.config import RunConfig
from polyattn.exceptions import ConfigError, ValidationError
from polyattn.experiments import SelfAttnParams, beta_sweep, separation_experiment
from polyattn.lemmas import LEMMA_IDS, SCORE_LEMMAS, check_lemma, parse_lemma_id
from polyattn.regimes import Regime, RegimeConfig
from polyattn.report import ExperimentReport, write_json, write_sweep_csv, write_trials_csv
from polyattn.seeding import derive_seed
from polyattn.store import ReportStore

logger = get_logger(__name__)

EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_CLAUSE_FAILED = 3

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

_handler: Optional[logging.Handler] = None


def setup_logging() -> None:
    """Send package logs to stderr at the level named by POLYATTN_LOG."""
    global _handler
    level = LOG_LEVELS.get(os.getenv("POLYATTN_LOG", "info").lower(), logging.INFO)
    root = get_logger("polyattn")
    if _handler is not None:
        root.removeHandler(_handler)
    _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(_handler)
    root.setLevel(level)
    root.propagate = False


def exit_codes(func):
    """Map library exceptions to the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValidationError, ConfigError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INVALID)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as exc:
            logger.debug("internal error", exc_info=True)
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_ERROR)

    return wrapper


def _emit(report: ExperimentReport, path: Optional[str], store: bool) -> None:
    if path:
        write_json(report, path)
    else:
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if store:
        report_store = ReportStore()
        try:
            report_id = report_store.save_report(report)
        finally:
            report_store.close()
        click.echo(f"stored report {report_id}", err=True)


def _finish(report: ExperimentReport) -> None:
    if report.passed:
        logger.info("%s: all %d clauses passed", report.kind, len(report.verdicts))
        return
    click.echo(f"failed clauses: {'; '.join(report.failed_clauses())}", err=True)
    sys.exit(EXIT_CLAUSE_FAILED)


def _selfattn_from_options(n, d, t, j3, a, b, c, label: Label, seed: int) -> SelfAttnInstance:
    n, d, t = selfattn_shape(n=n, d=d, t=t)
    if a is None:
        a = SelfAttnParams(t=t).a_for(label)
    if j3 is None:
        return sample_selfattn_instance(n, d, t, a, b, c, label, derive_seed(seed, 0))
    return build_selfattn_instance(n, d, t, j3 - 1, a, b, c, label)


@click.group()
def main():
    """Polynomial vs softmax attention: datasets, lemma checks and separation experiments."""
    setup_logging()


@main.command("gen-dataset")
@click.option("--kind", type=click.Choice(["score", "selfattn"]), required=True)
@click.option("--n", type=int, help="Rows (score vector length)")
@click.option("--d", type=int, help="Columns of a self-attention instance")
@click.option("--t", type=int, help="Stacked Type II blocks")
@click.option("--j3", type=int, help="1-based spike row; sampled from the seed when omitted")
@click.option("--label", type=click.Choice(["d0", "d1"]), required=True)
@click.option("--a", type=float, help="Type I weight (default 1.0 for d1, 0.05 for d0)")
@click.option("--b", type=float, default=0.5, show_default=True)
@click.option("--c", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Output file (stdout when omitted)")
@exit_codes
def gen_dataset(kind, n, d, t, j3, label, a, b, c, seed, out):
    """Sample or build one dataset instance and write it as JSON."""
    label = Label.parse(label)
    if kind == "score":
        if n is None:
            raise ConfigError("--n is required for score vectors")
        item = sample_score(n, label, seed)
    else:
        item = _selfattn_from_options(n, d, t, j3, a, b, c, label, seed)
    doc = to_document(item, seed)
    if out:
        write_document(doc, out)
    else:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))


@main.command("check-lemma")
@click.option("--id", "lemma_id", type=click.Choice(LEMMA_IDS), required=True)
@click.option("--instance", type=click.Path(exists=True, dir_okay=False), help="Dataset file to check")
@click.option(
    "--matrices", nargs=3, type=click.Path(exists=True, dir_okay=False),
    help="A1 A2 A3 as CSV files; they must be equal and follow the column layout",
)
@click.option("--n", type=int)
@click.option("--d", type=int)
@click.option("--t", type=int)
@click.option("--j3", type=int, help="1-based spike row")
@click.option("--a", type=float)
@click.option("--b", type=float, default=0.5, show_default=True)
@click.option("--c", type=float, default=0.5, show_default=True)
@click.option("--beta", type=float, required=True)
@click.option("--c0", type=float)
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--delta", type=float, default=0.01, show_default=True)
@click.option("--log-base", type=float, default=2.0, show_default=True)
@click.option("--hoeffding-c", type=float, default=1.0, show_default=True)
@click.option("--rate-threshold", type=float, default=0.95, show_default=True)
@click.option("--tau", type=float)
@click.option("--threads", type=int)
@click.option("--seed", type=int, required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--store", is_flag=True, help="Also save the report to SurrealDB")
@exit_codes
def check_lemma_cmd(
    lemma_id, instance, matrices, n, d, t, j3, a, b, c, beta, c0, trials, delta, log_base,
    hoeffding_c, rate_threshold, tau, threads, seed, report_path, store,
):
    """Check every clause of one lemma and write the report."""
    cfg = RegimeConfig(
        regime=Regime.HIGH_BETA, beta=beta, c0=c0, log_base=log_base, tau=tau,
        delta=delta, trials=trials, master_seed=seed, hoeffding_C=hoeffding_c,
        rate_threshold=rate_threshold,
    )
    target = read_document(instance) if instance else None
    if matrices:
        if lemma_id in SCORE_LEMMAS:
            raise ConfigError(f"--matrices needs a self-attention lemma, got {lemma_id}")
        _, _, label = parse_lemma_id(lemma_id)
        target = instance_from_matrices(*(read_matrix_csv(path) for path in matrices), label)
    if target is None and lemma_id not in SCORE_LEMMAS:
        _, _, label = parse_lemma_id(lemma_id)
        target = _selfattn_from_options(n, d, t, j3, a, b, c, label, seed)
    extra = {"trials": trials, "threads": threads} if lemma_id.startswith("s5-") else {}
    report = check_lemma(lemma_id, target, beta, cfg, n=n, **extra)
    _emit(report, report_path, store)
    _finish(report)


def _run_config(path: str, seed: int, threads: Optional[int]):
    run = RunConfig.load(path, seed)
    instance = load_document(run.instance) if run.instance else None
    return run, instance, threads if threads is not None else run.threads


@main.command("run-separation")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--threads", type=int)
@click.option("--sweep-beta", help="Also sweep beta over start:stop:count")
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--store", is_flag=True, help="Also save the report to SurrealDB")
@exit_codes
def run_separation(config_path, seed, threads, sweep_beta, report_path, store):
    """Run the separation experiment described by a RunConfig file."""
    run, instance, threads = _run_config(config_path, seed, threads)
    report = separation_experiment(
        run.regimes, run.dataset, run.sizes, run.trials, run.selfattn, instance,
        run.kind, threads=threads,
    )
    if sweep_beta or run.sweep:
        sweep = beta_sweep(
            run.regimes[0], run.dataset, report.outcomes[0]["n"], run.sweep_betas(sweep_beta),
            run.trials, run.selfattn, run.kind, threads=threads,
        )
        report.sweep = sweep.sweep
        if run.output.get("sweep_csv"):
            write_sweep_csv(sweep, run.output["sweep_csv"])
    if run.output.get("trials_csv"):
        write_trials_csv(report, run.output["trials_csv"])
    _emit(report, report_path or run.output.get("report"), store)
    _finish(report)


@main.command("sweep-beta")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--sweep-beta", "spec", help="start:stop:count (overrides the config's sweep section)")
@click.option("--n", type=int, help="Size to sweep at (default: the first configured size)")
@click.option("--threads", type=int)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@exit_codes
def sweep_beta_cmd(config_path, seed, spec, n, threads, csv_path, report_path):
    """Estimate P[F > 0] for D0 and D1 across a range of betas."""
    run, _, threads = _run_config(config_path, seed, threads)
    if n is None:
        if not run.sizes:
            raise ConfigError("sweep-beta needs --n or a non-empty sizes list")
        n = run.sizes[0]
    report = beta_sweep(
        run.regimes[0], run.dataset, n, run.sweep_betas(spec), run.trials, run.selfattn,
        run.kind, threads=threads,
    )
    csv_path = csv_path or run.output.get("sweep_csv")
    if csv_path:
        write_sweep_csv(report, csv_path)
    _emit(report, report_path or run.output.get("report"), False)


@main.command("export-matrix")
@click.option("--instance", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--what", type=click.Choice(["matrix", "u", "f"]), default="matrix", show_default=True)
@click.option("--beta", type=float, help="Required for u and f")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@exit_codes
def export_matrix(instance, what, beta, out):
    """Write a self-attention instance, or its u_poly / f_poly matrix, as CSV."""
    inst = read_document(instance)
    if not isinstance(inst, SelfAttnInstance):
        raise ConfigError("export-matrix needs a selfattn instance")
    if what == "matrix":
        matrix = inst.materialize()
    else:
        if beta is None:
            raise ConfigError(f"--beta is required to export {what}")
        matrix = full_attention_matrix(inst, AttentionWeights.all_ones(inst.d), beta, values=what, path="product")
    write_matrix_csv(matrix, out)


@main.command("prune-reports")
@exit_codes
def prune_reports():
    """Delete stored reports older than result_expires."""
    report_store = ReportStore()
    try:
        report_store.cleanup()
    finally:
        report_store.close()


@main.command("list-reports")
@click.option("--kind", help="Only reports of this kind (separation, sweep or a lemma id)")
@exit_codes
def list_reports(kind):
    """Print one JSON line per stored report."""
    report_store = ReportStore()
    try:
        rows = report_store.list_reports(kind)
    finally:
        report_store.close()
    for row in rows:
        click.echo(json.dumps(row, default=str, sort_keys=True))
