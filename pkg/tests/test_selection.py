import dataclasses
import io

import numpy as np
import pytest

from sarnet.estimation import preliminary_delta, preliminary_rho
from sarnet.instruments import InstrumentSet, normalize_columns, q1_roster, q2_roster
from sarnet.regularization import Scheme, Spectrum, projector_traces, q_weights
from sarnet.selection import (SelectionConfig, SelectionContext, criterion_value,
                              curve_to_csv, default_grid, prepare_selection,
                              s_hat, select_alpha, select_from_context)
from conftest import draw_dataset


def make_context(seed=0, n=30, m=6, noise=1.0, signal=1.0, sigma2_eps=0.8,
                 bias_factor=0.5, criterion="cp", loo_route="identity",
                 min_components=1):
    """Synthetic selection context with a controlled signal/noise split.

    The target direction w is a combination of an in-span component
    (projection of a random vector onto the instrument span) and white noise,
    so the first-stage fit quality is set directly by ``signal``/``noise``.
    """
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, m))
    spec = Spectrum.from_instruments(InstrumentSet(Q, tuple(f"c{i}" for i in range(m))))
    raw = rng.standard_normal(n)
    in_span = spec.vectors @ (spec.vectors.T @ raw)
    raw2 = rng.standard_normal(n)
    off_span = raw2 - spec.vectors @ (spec.vectors.T @ raw2)
    w = signal * in_span + noise * off_span
    coef = spec.vectors.T @ w
    resid = w - spec.vectors @ coef
    sigma2_v = float(resid @ resid) / n
    return SelectionContext(spectrum=spec, w=w, coef=coef,
                            sigma2_eps=sigma2_eps, sigma2_v=sigma2_v,
                            bias_factor=bias_factor, criterion=criterion,
                            loo_route=loo_route, min_components=min_components)


def pipeline_context(seed=50, criterion="cp", **kwargs):
    net, data, _, _, _ = draw_dataset(seed=seed, **kwargs)
    X = data.regressors(net)
    q1 = q1_roster(net, X)
    delta_t = preliminary_delta(data, net, q1)
    rho_t = preliminary_rho(data, net, delta_t)
    inst = normalize_columns(q2_roster(net, X), "unit-variance")
    ctx = prepare_selection(data, net, inst, rho_t, delta_t,
                            config=SelectionConfig(criterion=criterion))
    return net, data, inst, delta_t, rho_t, ctx


class TestCriterionValues:
    def test_vanishing_weights_collapse_cp_and_gcv(self):
        ctx = make_context(seed=1)
        heavy = Scheme.tikhonov(1e14 * ctx.spectrum.nu_max ** 2)
        vv = float(ctx.w @ ctx.w) / ctx.n
        cp = criterion_value(ctx, heavy)
        gcv = criterion_value(dataclasses.replace(ctx, criterion="gcv"), heavy)
        assert cp == pytest.approx(vv, rel=1e-10)
        assert gcv == pytest.approx(vv, rel=1e-10)

    def test_exact_fit_leaves_only_the_trace_penalty(self):
        # w inside the instrument span: residual is zero, Cp is the penalty
        ctx = make_context(seed=2, noise=0.0)
        full = Scheme.principal_components(ctx.spectrum.rank)
        ctx = dataclasses.replace(ctx, sigma2_v=0.3)
        cp = criterion_value(ctx, full)
        assert cp == pytest.approx(2 * 0.3 * ctx.spectrum.rank / ctx.n, abs=1e-12)

    def test_gcv_rejects_saturated_projector(self):
        ctx = make_context(seed=3, n=6, m=12, criterion="gcv")
        if ctx.spectrum.rank < 6:
            pytest.skip("fixture not saturated")
        with pytest.raises(ValueError, match="GCV undefined"):
            criterion_value(ctx, Scheme.principal_components(ctx.spectrum.rank))

    @pytest.mark.parametrize("kind,param", [("T", 0.05), ("LF", 16), ("PC", 3)])
    def test_loo_identity_matches_refit_oracle(self, kind, param):
        # n = 30 literal delete-one refits against the smoother identity
        ctx = make_context(seed=4, n=30, m=6, criterion="loo")
        if kind == "T":
            scheme = Scheme.tikhonov(param * ctx.spectrum.nu_max ** 2)
        elif kind == "LF":
            scheme = Scheme.landweber(param)
        else:
            scheme = Scheme.principal_components(param)
        identity = criterion_value(ctx, scheme)
        refit = criterion_value(dataclasses.replace(ctx, loo_route="refit"), scheme)
        assert identity == pytest.approx(refit, abs=1e-6)

    def test_loo_identity_matches_refit_on_pipeline_data(self):
        _, _, _, _, _, ctx = pipeline_context(seed=51, criterion="loo",
                                              group_count=3, group_size=10)
        scheme = Scheme.tikhonov(0.3 * ctx.spectrum.nu_max ** 2)
        identity = criterion_value(ctx, scheme)
        refit = criterion_value(dataclasses.replace(ctx, loo_route="refit"), scheme)
        assert identity == pytest.approx(refit, abs=1e-6)


class TestSHat:
    def test_off_target_direction_drops_bias_term(self):
        # gamma_bar on an exogenous coordinate zeroes the bias factor
        net, data, inst, delta_t, rho_t, _ = pipeline_context(seed=52)
        gamma2 = np.array([0.0, 1.0, 0.0])
        ctx2 = prepare_selection(data, net, inst, rho_t, delta_t,
                                 config=SelectionConfig(gamma_bar=gamma2))
        assert ctx2.bias_factor == 0.0
        scheme = Scheme.tikhonov(0.1)
        q = q_weights(scheme, ctx2.spectrum)
        tr_P, tr_P2 = projector_traces(ctx2.spectrum, scheme)
        expect = ctx2.sigma2_eps * (criterion_value(ctx2, scheme)
                                    - ctx2.sigma2_v * tr_P2 / ctx2.n)
        assert s_hat(ctx2, scheme) == pytest.approx(expect, rel=1e-12)

    def test_vanishing_weights_leave_pure_fit_term(self):
        ctx = make_context(seed=5)
        heavy = Scheme.tikhonov(1e14 * ctx.spectrum.nu_max ** 2)
        vv = float(ctx.w @ ctx.w) / ctx.n
        assert s_hat(ctx, heavy) == pytest.approx(ctx.sigma2_eps * vv, rel=1e-9)

    def test_matches_hand_assembled_formula(self):
        ctx = make_context(seed=6)
        scheme = Scheme.landweber(8)
        tr_P, tr_P2 = projector_traces(ctx.spectrum, scheme)
        fit = criterion_value(ctx, scheme)
        expect = ctx.sigma2_eps * (fit - ctx.sigma2_v * tr_P2 / ctx.n
                                   + ctx.sigma2_eps * tr_P ** 2
                                   * ctx.bias_factor / ctx.n)
        assert s_hat(ctx, scheme) == pytest.approx(expect, rel=1e-12)


class TestSelect:
    def test_noiseless_fixture_picks_lightest_damping(self):
        # feed-forward network, no noise: the optimal instrument is spanned
        # exactly, the curve is pure fit, and the lightest damping wins
        from sarnet.instruments import build_instruments
        from conftest import nilpotent_dataset

        net, data = nilpotent_dataset(seed=53)
        X = data.regressors(net)
        q1 = q1_roster(net, X)
        delta_t = preliminary_delta(data, net, q1)
        rho_t = preliminary_rho(data, net, delta_t)
        inst = normalize_columns(build_instruments(net, X, order=3),
                                 "unit-variance")
        ctx = prepare_selection(data, net, inst, rho_t, delta_t)
        assert ctx.sigma2_eps < 1e-12
        result = select_from_context(ctx, "T")
        grid = default_grid("T", ctx.spectrum)
        assert result.scheme.alpha == pytest.approx(grid[0])
        pc = select_from_context(ctx, "PC")
        assert pc.scheme.steps == ctx.spectrum.rank

    def test_pure_noise_fixture_picks_heaviest_damping(self):
        # no in-span signal at all: only the penalty terms vary
        ctx = make_context(seed=7, signal=0.0, noise=1.0, bias_factor=2.0,
                           min_components=1)
        for kind in ("T", "PC", "LF"):
            result = select_from_context(ctx, kind)
            grid = default_grid(kind, ctx.spectrum, ctx.min_components)
            if kind == "T":
                assert result.scheme.alpha == pytest.approx(grid[-1])
            else:
                assert result.scheme.steps == int(grid[0])

    def test_curve_is_finite_and_in_grid_order(self):
        _, _, _, _, _, ctx = pipeline_context(seed=54)
        result = select_from_context(ctx, "T")
        curve = result.curve_array()
        assert curve.shape[1] == 3
        assert np.all(np.isfinite(curve))
        np.testing.assert_allclose(curve[:, 0],
                                   default_grid("T", ctx.spectrum), rtol=1e-12)

    def test_deterministic(self):
        net, data, inst, delta_t, rho_t, _ = pipeline_context(seed=55)
        r1 = select_alpha(data, net, inst, "PC", rho_tilde=rho_t,
                          delta_tilde=delta_t)
        r2 = select_alpha(data, net, inst, "PC", rho_tilde=rho_t,
                          delta_tilde=delta_t)
        assert r1.alpha_star == r2.alpha_star
        assert r1.curve == r2.curve

    def test_tie_breaks_toward_more_regularization(self):
        ctx = make_context(seed=8)
        flat = dataclasses.replace(ctx, w=np.zeros(ctx.n),
                                   coef=np.zeros(ctx.spectrum.rank),
                                   sigma2_v=0.0, sigma2_eps=0.0)
        # S_hat is identically zero: the most regularized grid point wins
        t = select_from_context(flat, "T")
        assert t.scheme.alpha == pytest.approx(default_grid("T", ctx.spectrum)[-1])
        pc = select_from_context(flat, "PC")
        assert pc.scheme.steps == 1

    def test_criteria_argmins_agree_within_one_step(self):
        # moderate-noise fixture: all three plug-ins land on neighboring
        # Tikhonov grid points (checked, not assumed)
        argmins = {}
        for crit in ("cp", "gcv", "loo"):
            _, _, _, _, _, ctx = pipeline_context(seed=56, criterion=crit,
                                                  group_count=8, group_size=10)
            result = select_from_context(ctx, "T")
            grid = list(default_grid("T", ctx.spectrum))
            argmins[crit] = min(range(len(grid)),
                                key=lambda i: abs(grid[i] - result.scheme.alpha))
        values = sorted(argmins.values())
        assert values[-1] - values[0] <= 1, argmins

    def test_cp_and_gcv_agree_when_trace_is_small(self):
        _, _, _, _, _, ctx = pipeline_context(seed=57, group_count=12,
                                              group_size=10)
        gcv_ctx = dataclasses.replace(ctx, criterion="gcv")
        for alpha in default_grid("T", ctx.spectrum):
            scheme = Scheme.tikhonov(alpha)
            tr_P, _ = projector_traces(ctx.spectrum, scheme)
            if tr_P / ctx.n < 0.05:
                cp = criterion_value(ctx, scheme)
                gcv = criterion_value(gcv_ctx, scheme)
                assert abs(cp - gcv) < 0.1 * cp

    def test_variance_proxy_monotone_in_regularization(self):
        ctx = make_context(seed=9)
        tr_t = [projector_traces(ctx.spectrum, Scheme.tikhonov(a))[0]
                for a in default_grid("T", ctx.spectrum)]
        assert np.all(np.diff(tr_t) <= 1e-12)  # alpha up, trace down
        tr_pc = [projector_traces(ctx.spectrum, Scheme.principal_components(k))[0]
                 for k in range(1, ctx.spectrum.rank + 1)]
        assert np.all(np.diff(tr_pc) > 0)
        tr_lf = [projector_traces(ctx.spectrum, Scheme.landweber(t))[0]
                 for t in (1, 2, 4, 8, 16)]
        assert np.all(np.diff(tr_lf) > 0)

    def test_all_nan_curve_rejected(self):
        ctx = make_context(seed=10)
        broken = dataclasses.replace(ctx, w=np.full(ctx.n, np.nan),
                                     coef=np.full(ctx.spectrum.rank, np.nan))
        with pytest.raises(ValueError, match="no finite values"):
            select_from_context(broken, "T")


class TestConfigAndExport:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(criterion="aic")
        with pytest.raises(ValueError):
            SelectionConfig(gamma_bar=np.zeros(3))
        with pytest.raises(ValueError):
            SelectionConfig(alpha_grid=[0.5, 0.1])
        with pytest.raises(ValueError):
            SelectionConfig(loo_route="exact")

    def test_curve_csv_export(self):
        _, _, _, _, _, ctx = pipeline_context(seed=58)
        result = select_from_context(ctx, "PC")
        buf = io.StringIO()
        curve_to_csv(result, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "alpha,criterion,S_hat"
        assert len(lines) == len(result.curve) + 1
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == pytest.approx(result.curve[0][0], rel=1e-5)

    def test_explicit_grid_respected(self):
        _, _, _, _, _, ctx = pipeline_context(seed=59)
        grid = (1, 2, 3)
        result = select_from_context(ctx, "PC", SelectionConfig(alpha_grid=grid))
        assert result.scheme.steps in grid
        assert len(result.curve) == 3
