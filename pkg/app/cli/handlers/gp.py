from __future__ import annotations

import logging
from typing import Any

import numpy as np

from app.cli.context import CommandContext
from app.cli.router import Router
from app.core.errors import ConfigError
from app.services import experiment_service as exp
from app.services import gp_service as gp
from app.services import linalg_service as la

logger = logging.getLogger(__name__)

router = Router()


def _targets(ctx: CommandContext, key: str, d: int) -> np.ndarray:
    raw = ctx.get(key)
    try:
        x0 = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a point or a list of points") from exc
    if x0.ndim == 0 or (x0.ndim == 1 and d == 1):
        x0 = x0.reshape(-1, 1)
    x0 = np.atleast_2d(x0)
    if x0.shape[1] != d:
        raise ConfigError(f"{key} has {x0.shape[1]} coordinates, sites have {d}")
    return x0


@router.command("simulate", help="draw Gaussian-process replicates on a site set")
def cmd_simulate(ctx: CommandContext) -> None:
    model = ctx.model()
    sites = ctx.sites()
    replicates = ctx.integer("replicates", 1, minimum=1)
    if ctx.plan(n=sites.n, covariance_entries=sites.n**2, replicates=replicates):
        return
    datasets = gp.simulate(model, sites, ctx.seed, replicates, ctx.pmap)
    columns = ["replicate", "site", *[f"x{i}" for i in range(sites.d)], "value"]
    rows = [
        (data.replicate, i, *sites.points[i], data.values[i])
        for data in datasets
        for i in range(sites.n)
    ]
    ctx.write_csv(columns, rows)


def _bounds(raw: Any) -> dict[str, tuple[float, float]]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("bounds must map parameter names to [lo, hi]")
    out = {}
    for name, pair in raw.items():
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"bounds.{name} must be [lo, hi]")
        out[name] = (float(pair[0]), float(pair[1]))
    return out


@router.command("fit", help="maximum-likelihood fit with the variance profiled out")
def cmd_fit(ctx: CommandContext) -> None:
    data = ctx.dataset()
    init = ctx.kernel()
    free = ctx.get("free")
    if not isinstance(free, list):
        raise ConfigError("free must be a list of parameter names")
    starts = ctx.integer("starts", 3, minimum=1)
    max_iter = ctx.integer("max_iter", 2000, minimum=1)
    if ctx.plan(n=data.sites.n, covariance_entries=data.sites.n**2, free=free, starts=starts):
        return
    result = gp.fit_ml(init, data, free, _bounds(ctx.get("bounds", None)), starts, ctx.seed, max_iter)
    logger.info("Fit family=%s loglik=%.10g converged=%s", init.family, result.loglik, result.converged)
    ctx.write_json({**result.to_json(), "n": data.sites.n})


@router.command("predict", help="simple kriging mean and variance at target points")
def cmd_predict(ctx: CommandContext) -> None:
    model = ctx.model()
    data = ctx.dataset()
    x0 = _targets(ctx, "x0", data.sites.d)
    if ctx.plan(n=data.sites.n, targets=x0.shape[0]):
        return
    predictions = gp.krige_many(model, data, x0)
    columns = ["target", *[f"x{i}" for i in range(x0.shape[1])], "mean", "variance"]
    ctx.write_csv(columns, [(i, *x0[i], p.mean, p.variance) for i, p in enumerate(predictions)])


@router.command("vecchia", help="Vecchia log-likelihood against the exact one across orderings")
def cmd_vecchia(ctx: CommandContext) -> None:
    model = ctx.model()
    data = ctx.dataset() if "data" in ctx.config else None
    sites = data.sites if data is not None else ctx.sites()
    orderings = ctx.get("orderings", list(la.ORDERINGS))
    if not isinstance(orderings, list) or any(o not in la.ORDERINGS for o in orderings):
        raise ConfigError(f"orderings must be a list drawn from {', '.join(la.ORDERINGS)}")
    m_list = ctx.integers("m", [0, 5, 10, 30], minimum=0)
    n = sites.n
    if ctx.plan(n=n, orderings=orderings, m=m_list):
        return
    if data is None:
        data = gp.simulate(model, sites, ctx.seed)[0]

    exact = gp.log_likelihood(model, data)
    cells = [(o, m) for o in orderings for m in m_list]
    by_ordering = {o: gp.reorder_dataset(data, o, ctx.seed) for o in orderings}

    def one(cell: tuple[str, int]) -> tuple[str, int, float, float, float]:
        ordering, m = cell
        value = gp.vecchia_loglik(model, by_ordering[ordering], min(m, n - 1))
        return ordering, m, value, exact, abs(value - exact)

    ctx.write_csv(["ordering", "m", "vecchia", "exact", "abs_error"], ctx.pmap.map(one, cells))


@router.command("misspec", help="prediction-efficiency ratios under a misspecified model on nested grids")
def cmd_misspec(ctx: CommandContext) -> None:
    true_model = ctx.model("true_model")
    working_model = ctx.model("working_model")
    d = ctx.integer("d", 1, minimum=1)
    n_list = ctx.integers("n", [10, 20, 40, 80], minimum=2)
    x0 = _targets(ctx, "x0", d)[0] if "x0" in ctx.config else np.full(d, 0.5 / max(n_list))
    if ctx.plan(n=n_list, d=d):
        return
    rows = gp.misspecified_refinement(true_model, working_model, n_list, d, x0)
    ctx.write_csv(
        ["n", "mse_working", "mse_oracle", "ratio_efficiency", "mse_believed", "ratio_variance_assessment"],
        [
            (n, r.mse_under_true_with_working_pred, r.mse_oracle, r.ratio_efficiency,
             r.mse_believed_by_working, r.ratio_variance_assessment)
            for n, r in rows
        ],
    )


@router.command("polyharmonic", help="scale invariance of polyharmonic interpolation")
def cmd_polyharmonic(ctx: CommandContext) -> None:
    nu = ctx.number("nu", positive=True)
    sites = ctx.sites()
    values = ctx.numbers("values")
    x0 = _targets(ctx, "x0", sites.d)[0]
    scales = ctx.numbers("scales", [0.5, 1.0, 2.0, 10.0])
    if ctx.plan(n=sites.n, scales=len(scales)):
        return
    if len(values) != sites.n:
        raise ConfigError(f"{len(values)} values for {sites.n} sites")
    reference = exp.polyharmonic_predict(nu, sites.points, np.asarray(values), x0, 1.0)
    rows = []
    for scale in scales:
        if not scale > 0:
            raise ConfigError(f"scales must be positive (got {scale})")
        predicted = exp.polyharmonic_predict(nu, sites.points, np.asarray(values), x0, scale)
        rows.append((scale, predicted, abs(predicted - reference)))
    spread = max((r[2] for r in rows), default=0.0)
    logger.info("Polyharmonic nu=%s spread=%.3e", nu, spread)
    ctx.write_csv(["scale", "prediction", "abs_diff"], rows)
