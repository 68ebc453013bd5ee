import numpy as np
import pytest
from dataclasses import replace

from atca.core import Axis, Direction, ScreenSetting, StrokeType
from atca.errors import InsufficientData
from atca.synth import (
    HyperParams,
    PopulationConfig,
    compensation_gain,
    derive_seed,
    generate_population,
    generate_stroke,
    sample_user_params,
    validate_population,
)

H, R = StrokeType.HORIZONTAL, Direction.RIGHT


def steady_user(kappa, rho=0.5, disp=200.0):
    u = sample_user_params(PopulationConfig(n_users=2), 0)
    u = replace(u, kappa=kappa, rho=rho)
    return u.with_profile(H, R, disp_mean=disp, disp_std=10.0, angle_mean=0.0, angle_std=0.0,
                          curvature_mean=0.0, curvature_std=0.0)


def raw_dx(user, factor, n=1000, seed=0):
    setting = ScreenSetting(Axis.X, factor)
    out = []
    for k in range(n):
        rng = np.random.default_rng(derive_seed(seed, k))
        s = generate_stroke(user, setting, H, rng, direction=R)
        out.append((s.points[-1].x - s.points[0].x, s.points[-1].x))
    return np.array(out)


@pytest.mark.parametrize("kappa,factor,expected", [(1.0, 0.8, 250.0), (0.0, 0.8, 200.0), (0.0, 1.2, 200.0),
                                                   (0.6, 1.0, 200.0), (1.0, 1.0, 200.0)])
def test_raw_displacement_follows_adaptation_model(kappa, factor, expected):
    d = raw_dx(steady_user(kappa), factor)[:, 0]
    se = d.std(ddof=1) / np.sqrt(d.size)
    assert abs(d.mean() - expected) < 3 * se + 1e-9
    assert compensation_gain(kappa, factor) * 200 == pytest.approx(expected)


def test_stop_point_moves_monotonically_with_factor():
    user = steady_user(0.9, rho=1.0)
    stops = [raw_dx(user, f, n=1000, seed=3)[:, 1].mean() for f in (0.8, 0.9, 1.0, 1.1, 1.2)]
    assert all(a > b for a, b in zip(stops, stops[1:]))


def test_user_params_deterministic_and_distinct():
    cfg = PopulationConfig(n_users=3)
    assert sample_user_params(cfg, 1) == sample_user_params(cfg, 1)
    assert sample_user_params(cfg, 1) != sample_user_params(cfg, 2)
    assert derive_seed(0, 1).generate_state(2).tolist() != derive_seed(0, 2).generate_state(2).tolist()


def test_zero_variance_hyper_gives_identical_users():
    hp = HyperParams(**{k: (v[0], v[0]) if isinstance(v, tuple) and not isinstance(v[0], tuple) else v
                        for k, v in HyperParams().__dict__.items()})
    hp = replace(hp, non_adapter_fraction=0.0, preference_flip=0.0,
                 start_h_right=((300.0, 300.0), (900.0, 900.0)), start_h_left=((700.0, 700.0), (900.0, 900.0)),
                 start_v_up=((500.0, 500.0), (1400.0, 1400.0)), start_v_down=((500.0, 500.0), (500.0, 500.0)))
    cfg = PopulationConfig(n_users=3, hyper=hp)
    a, b = sample_user_params(cfg, 0), sample_user_params(cfg, 1)
    assert a.kappa == b.kappa and a.profiles == b.profiles


def test_population_cell_counts_and_validity():
    cfg = PopulationConfig(n_users=3, strokes_per_cell=12)
    c = generate_population(cfg)
    assert len(c) == 3 * 10 * 12
    for key in c.keys():
        assert len(c.cell(*key)) == 12
    # paired design: horizontal strokes under X settings, vertical under Y
    assert {s.axis for s in c.settings_for(StrokeType.HORIZONTAL)} == {Axis.X}
    assert {s.axis for s in c.settings_for(StrokeType.VERTICAL)} == {Axis.Y}


def test_all_pairing_generates_every_type_everywhere():
    cfg = PopulationConfig(n_users=2, strokes_per_cell=10, pairing="all",
                           settings=(ScreenSetting(Axis.Y, 0.8), ScreenSetting(Axis.Y, 1.2)))
    c = generate_population(cfg)
    vert = [s for s in c.cell(0, ScreenSetting(Axis.Y, 0.8), StrokeType.VERTICAL)]
    assert len(vert) == 10 and len(c) == 2 * 2 * 2 * 10


def test_generation_independent_of_worker_count():
    cfg = PopulationConfig(n_users=3, strokes_per_cell=10, seed=5)
    assert generate_population(cfg, workers=1) == generate_population(cfg, workers=2)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        PopulationConfig(n_users=1)
    with pytest.raises(ValueError):
        PopulationConfig(strokes_per_cell=5)
    cfg = PopulationConfig(n_users=4, seed=9)
    assert PopulationConfig.from_dict(cfg.to_dict()) == cfg


def test_default_population_meets_calibration_targets():
    stats = validate_population(generate_population(PopulationConfig()))
    assert stats["sensitivity_score"] >= 0.7
    assert stats["stability_margin"] > 0


def test_identical_users_have_no_stability_margin():
    hp = HyperParams()
    fixed = {k: (v[0], v[0]) for k, v in hp.__dict__.items() if isinstance(v, tuple) and not isinstance(v[0], tuple)}
    starts = {k: tuple((r[0], r[0]) for r in v) for k, v in hp.__dict__.items() if isinstance(v, tuple) and isinstance(v[0], tuple)}
    # no setting effect either, otherwise a user's own per-setting centroids spread apart
    fixed["kappa"] = (0.0, 0.0)
    fixed["primary_share"] = (1.0, 1.0)
    hp = replace(hp, non_adapter_fraction=0.0, preference_flip=0.0, **fixed, **starts)
    # the per-setting centroids average fewer strokes than the global ones, which biases
    # the margin negative by O(1/sqrt(cell size)); large cells keep that bias small
    stats = validate_population(generate_population(PopulationConfig(n_users=3, strokes_per_cell=600, hyper=hp)))
    assert abs(stats["stability_margin"]) < 0.05 * stats["feature_scale"]


def test_non_adapting_users_are_at_chance():
    hp = replace(HyperParams(), kappa=(0.0, 0.0), non_adapter_fraction=0.0)
    stats = validate_population(generate_population(PopulationConfig(n_users=8, strokes_per_cell=60, hyper=hp)))
    assert abs(stats["sensitivity_score"] - 0.5) <= 0.05


def test_validate_needs_two_users():
    c = generate_population(PopulationConfig(n_users=2, strokes_per_cell=10))
    with pytest.raises(InsufficientData):
        validate_population(c.subset(lambda s: s.user == 0))
