from __future__ import annotations

import logging

from app.cli.context import CommandContext
from app.cli.router import Router
from app.core.errors import ConfigError
from app.services import experiment_service as exp
from app.services import linalg_service as la

logger = logging.getLogger(__name__)

router = Router()


@router.command("sparsity", help="exact and quasi sparsity of covariance, precision and Cholesky factors")
def cmd_sparsity(ctx: CommandContext) -> None:
    kappas = ctx.numbers("kappa", [0.0, 1.0, 2.0])
    mus = ctx.numbers("mu", allow_inf=True)
    target_range = ctx.number("range", 0.15, positive=True)
    spacings = ctx.numbers("spacing", [0.03, 0.015])
    epsilon = ctx.number("epsilon", 1e-8, positive=True)
    if any(not s > 0 for s in spacings):
        raise ConfigError("spacing values must be positive")
    sizes = [la.grid_sites(s, 2).n for s in spacings]
    if ctx.plan(cells=len(kappas) * len(mus) * len(spacings), n=sizes, dense_entries=[n * n for n in sizes]):
        return
    reports = exp.sparsity_table(kappas, mus, target_range, spacings, epsilon, ctx.pmap)
    ctx.sparsity_reports = reports
    ctx.write_csv(la.SparsityReport.COLUMNS, [r.row() for r in reports])


@router.command("screening", help="screening-effect MSE ratio on a refining regular lattice")
def cmd_screening(ctx: CommandContext) -> None:
    model = ctx.model()
    d = ctx.integer("d", 1, minimum=1)
    eps_list = ctx.numbers("epsilon", [0.2, 0.1, 0.05, 0.025, 0.0125])
    offset = ctx.numbers("offset", [0.5] * d)
    window = ctx.number("window", 2.0, positive=True)
    truncation = ctx.number("truncation", 1.0, positive=True)
    far_sizes = [int((2 * truncation / e + 1) ** d) for e in eps_list]
    if ctx.plan(epsilon=eps_list, max_sites=far_sizes):
        return
    rows = exp.screening_ratio(model, d, eps_list, offset, window, truncation)
    ctx.write_csv(["epsilon", "n_near", "n_far", "ratio"], [(r.epsilon, r.n_near, r.n_far, r.ratio) for r in rows])


@router.command("mc", help="fixed-domain Monte Carlo of the maximum-likelihood microergodic estimate")
def cmd_mc(ctx: CommandContext) -> None:
    model = ctx.model()
    d = ctx.integer("d", 1, minimum=1)
    n_list = ctx.integers("n", [125, 250, 500], minimum=2)
    reps = ctx.integer("reps", 200)
    if reps < 1:
        raise ConfigError("reps must be positive")
    starts = ctx.integer("starts", 1, minimum=1)
    init = ctx.kernel("init") if "init" in ctx.config else None
    start_spread = ctx.number("start_spread", 0.5)
    if ctx.plan(n=n_list, reps=reps, fits=reps * len(n_list)):
        return
    rows, summaries = exp.ml_microergodic_mc(model, d, n_list, reps, ctx.seed, ctx.pmap, starts, init, start_spread)
    ctx.write_csv(["rep", "n", "micro_hat", "standardized_stat"], [(r.rep, r.n, r.micro_hat, r.standardized_stat) for r in rows])
    ctx.write_csv(
        ["n", "ok", "failed", "mean_abs_rel_error_micro", "standardized_mean", "standardized_sd"],
        [
            (s.n, s.ok, s.failed, s.mean_abs_rel_error_micro, s.standardized_mean, s.standardized_sd)
            for s in summaries
        ],
        path=ctx.sibling(".summary.csv"),
    )
