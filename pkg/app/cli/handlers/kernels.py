from __future__ import annotations

import logging
from dataclasses import asdict

import numpy as np

from app.cli.context import CommandContext
from app.cli.router import Router
from app.core.errors import ConfigError
from app.services import experiment_service as exp
from app.services import gp_service as gp
from app.services import kernel_service as ks

logger = logging.getLogger(__name__)

router = Router()


@router.command("eval", help="correlation (and closed-form spectral density) on a list of distances")
def cmd_eval(ctx: CommandContext) -> None:
    spec = ctx.kernel()
    d = ctx.integer("d", 1, minimum=1)
    xs = ctx.numbers("x")
    if ctx.plan(points=len(xs)):
        return
    ks.ensure_valid(spec, d)
    values = ks.correlation_array(spec, d, xs)
    if ks.has_closed_form_spectrum(spec):
        columns = ["x", "correlation", "spectral_density"]
        rows = [(x, c, ks.spectral_density(spec, d, x)) for x, c in zip(xs, values)]
    else:
        columns = ["x", "correlation"]
        rows = [(x, c) for x, c in zip(xs, values)]
    ctx.write_csv(columns, rows)


@router.command("spectrum", help="numerical radial Fourier transform against the closed-form density")
def cmd_spectrum(ctx: CommandContext) -> None:
    spec = ctx.kernel()
    d = ctx.integer("d", 1, minimum=1)
    z_grid = ctx.numbers("z", list(np.linspace(0.0, 20.0, 41)))
    stein = ctx.get("stein", None)
    if ctx.plan(points=len(z_grid), stein=bool(stein)):
        return
    if not ks.has_closed_form_spectrum(spec):
        raise ConfigError(f"spectrum needs a family with a closed-form density (got {spec.family})")
    rows, worst = exp.fourier_consistency(spec, d, z_grid)
    ctx.write_csv(["z", "radial_fourier", "spectral_density", "rel_error"], [tuple(asdict(r).values()) for r in rows])
    logger.info("Spectrum max_rel_error=%.3e", worst)

    if stein:
        if not isinstance(stein, dict):
            raise ConfigError("stein must be an object with radius and omega")
        radius = float(stein.get("radius", 1.0))
        omegas = [float(w) for w in stein.get("omega", [10, 20, 40, 80, 160])]
        sups = exp.stein_hypothesis_check(spec, d, radius, omegas)
        ctx.write_csv(["omega", "sup_ratio_deviation"], list(zip(omegas, sups)), path=ctx.sibling(".stein.csv"))


@router.command("limits", help="sup distances along the kernel limit families")
def cmd_limits(ctx: CommandContext) -> None:
    grid = ctx.get("grid", None)
    if grid is not None:
        grid = ctx.numbers("grid")
    if ctx.plan(grid_points=len(grid) if grid is not None else 301):
        return
    rows = exp.kernel_limit_suite(grid, ctx.pmap)
    ctx.write_csv(["limit", "parameter", "sup_distance"], [(r.limit, r.parameter, r.sup_distance) for r in rows])


@router.command("ssm-check", help="state-space autocovariance against the Matern correlation")
def cmd_ssm_check(ctx: CommandContext) -> None:
    k_list = ctx.integers("k", [0, 1, 2], minimum=0)
    alpha = ctx.number("alpha", 1.0, positive=True)
    sigma2 = ctx.number("sigma2", 1.0, positive=True)
    lags = ctx.integer("lags", 20, minimum=1)
    max_lag = ctx.number("max_lag", 3.0, positive=True)
    if ctx.plan(state_dims=[k + 1 for k in k_list], lags=lags):
        return
    hs = np.linspace(0.0, max_lag, lags)
    rows = []
    for k in k_list:
        ssm = ks.state_space_matern(k, alpha, sigma2)
        for h in hs:
            state = ks.state_space_autocov(ssm, float(h))
            matern = sigma2 * ks.matern_correlation(k + 0.5, alpha, float(h))
            rows.append((k, float(h), state, matern, abs(state - matern)))
        logger.info("State space k=%s max_abs_error=%.3e", k, max(r[4] for r in rows[-lags:]))
    ctx.write_csv(["k", "lag", "state_space", "matern", "abs_error"], rows)


@router.command("equivalence", help="Gaussian-measure equivalence of two covariance models")
def cmd_equivalence(ctx: CommandContext) -> None:
    a = ctx.model("model_a")
    b = ctx.model("model_b")
    d = ctx.integer("d", 1, minimum=1)
    if ctx.plan():
        return
    result = gp.equivalence_check(a, b, d)
    ctx.write_json(asdict(result))
