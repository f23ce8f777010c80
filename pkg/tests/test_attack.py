import numpy as np
import pytest

from hazeattack import attack as atk
from hazeattack import classifier as cl
from hazeattack import hazemodel as hm
from hazeattack import imagecore as ic


def _clf(rng, s=16, n=4):
    w = cl.init_reference_weights(input_size=s, n_classes=n,
                                  seed=int(rng.integers(1 << 30)))
    return cl.ReferenceClassifier(w)


class BrightnessClassifier:
    """Two-class toy model whose loss gradient w.r.t. the image is uniform.

    Class-1 score grows with total brightness, so attacking label 1 drives
    a spatially constant positive image gradient.
    """

    def logits(self, img):
        s = float(img.sum())
        return np.array([s, -s])

    def predict(self, img):
        return int(self.logits(img).argmax())

    def loss_grad(self, img, y):
        logits = self.logits(img)
        loss, dlogits = cl.softmax_cross_entropy(logits, y)
        scale = dlogits[0] - dlogits[1]
        return loss, np.full_like(img, scale)


# ---------------------------------------------------------------------------
# Momentum update and projection
# ---------------------------------------------------------------------------

def test_momentum_update_basic(rng):
    grad = np.array([1.0, -1.0, 1.0, 1.0])
    out = atk.momentum_update(np.zeros(4), grad, mu=1.0)
    assert np.allclose(out, grad / 4.0)
    out0 = atk.momentum_update(np.full(4, 5.0), grad, mu=0.0)
    assert np.allclose(out0, grad / 4.0)


def test_momentum_two_steps_accumulate():
    u = np.array([0.5, -0.5])  # already L1-normalized
    g = atk.momentum_update(np.zeros(2), u, mu=1.0)
    g = atk.momentum_update(g, u, mu=1.0)
    assert np.allclose(g, 2.0 * u)


def test_momentum_zero_gradient_keeps_decayed_momentum():
    g = atk.momentum_update(np.array([2.0]), np.array([0.0]), mu=0.5)
    assert np.allclose(g, [1.0])
    # scalar form
    assert atk.momentum_update(3.0, 0.0, mu=1.0) == 3.0
    with pytest.raises(ValueError):
        atk.momentum_update(0.0, np.nan, mu=1.0)


def test_project_box():
    field = np.array([0.85, 1.3, -0.5])
    out = atk.project_box(field, center=0.9, eps=0.1, lo=0.0, hi=1.0)
    assert np.allclose(out, [0.85, 1.0, 0.8])
    assert atk.project_box(1.3, center=0.9, eps=0.1, lo=0.0, hi=1.0) == 1.0
    assert atk.project_box(-0.5, center=0.1, eps=0.1, lo=0.0, hi=np.inf) == 0.0
    with pytest.raises(ValueError):
        atk.project_box(field, center=2.0, eps=0.1, lo=0.0, hi=1.0)


def test_attack_config_validation():
    with pytest.raises(ValueError):
        atk.AttackConfig(eps_a=0.0)
    with pytest.raises(ValueError):
        atk.AttackConfig(a0=1.5)
    with pytest.raises(ValueError):
        atk.AttackConfig(b0=-0.1)
    with pytest.raises(ValueError):
        atk.AttackConfig(n=-1)
    with pytest.raises(ValueError):
        atk.AttackConfig(mu=-0.5)
    with pytest.raises(ValueError):
        atk.AttackConfig(sigma_a=0.0)


# ---------------------------------------------------------------------------
# Haze attacks
# ---------------------------------------------------------------------------

def test_hadvhaze_n0_renders_initialization(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    d = ic.synthetic_depth("v-ramp", 16, 16)
    cfg = atk.AttackConfig(n=0)
    res = atk.attack_hadvhaze(img, d, clf, 1, cfg)
    expected = hm.haze_homogeneous(img, d, hm.HazeScalars(0.9, 0.1))
    assert np.array_equal(res.adversarial, expected)
    assert res.iterations_run == 0
    assert len(res.loss_trace) == 1


def test_haze_attacks_deterministic(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    d = ic.synthetic_depth("radial", 16, 16)
    cfg = atk.AttackConfig(n=4)
    r1 = atk.attack_iadvhaze(img, d, clf, 0, cfg)
    r2 = atk.attack_iadvhaze(img, d, clf, 0, cfg)
    assert np.array_equal(r1.adversarial, r2.adversarial)
    assert r1.loss_trace == r2.loss_trace
    h1 = atk.attack_hadvhaze(img, d, clf, 0, cfg)
    h2 = atk.attack_hadvhaze(img, d, clf, 0, cfg)
    assert np.array_equal(h1.adversarial, h2.adversarial)


def test_iadvhaze_constraints_held_every_iteration(rng):
    clf = _clf(rng, s=16)
    img = rng.random((16, 16, 3))
    d = ic.synthetic_depth("v-ramp", 16, 16)
    cfg = atk.AttackConfig(n=6)
    lo_a, hi_a = 0.9 - 0.1, min(0.9 + 0.1, 1.0)
    lo_b, hi_b = max(0.1 - 0.1, 0.0), 0.1 + 0.1
    seen = []

    def check(k, a_raw, b_raw, a_s, b_s, hazy):
        seen.append(k)
        assert a_raw.min() >= lo_a and a_raw.max() <= hi_a
        assert b_raw.min() >= lo_b and b_raw.max() <= hi_b
        assert a_s.min() >= lo_a - 1e-9 and a_s.max() <= hi_a + 1e-9
        assert b_s.min() >= lo_b - 1e-9 and b_s.max() <= hi_b + 1e-9
        assert hazy.min() >= 0.0 and hazy.max() <= 1.0

    res = atk.attack_iadvhaze(img, d, clf, 2, cfg, iteration_callback=check)
    assert seen == list(range(cfg.n + 1))
    assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0
    assert len(res.loss_trace) == cfg.n + 1


def test_iadvhaze_uniform_gradient_matches_hadvhaze(rng):
    # spatially uniform image gradient -> constant raw fields throughout ->
    # the field attack renders the scalar attack's trajectory exactly
    clf = BrightnessClassifier()
    img = rng.uniform(0.2, 0.4, (12, 12, 3))
    d = ic.synthetic_depth("v-ramp", 12, 12)
    cfg = atk.AttackConfig(n=5)
    res_fields = atk.attack_iadvhaze(img, d, clf, 0, cfg)
    res_scalar = atk.attack_hadvhaze(img, d, clf, 0, cfg)
    assert np.max(np.abs(res_fields.adversarial - res_scalar.adversarial)) <= 1e-12
    assert np.allclose(res_fields.loss_trace, res_scalar.loss_trace, atol=1e-9)


def test_iadvhaze_degenerate_ball(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    d = ic.synthetic_depth("v-ramp", 16, 16)
    cfg = atk.AttackConfig(eps_a=1e-9, eps_b=1e-9, n=5)
    res = atk.attack_iadvhaze(img, d, clf, 1, cfg)
    init = hm.haze_homogeneous(img, d, hm.HazeScalars(0.9, 0.1))
    assert np.max(np.abs(res.adversarial - init)) <= 1e-6
    assert abs(res.loss_trace[-1] - res.loss_trace[0]) <= 1e-6


def test_attack_result_invariant():
    with pytest.raises(ValueError):
        atk.AttackResult(adversarial=np.zeros((2, 2, 3)), fields=None,
                         pred_clean=0, pred_adv=1, true_label=1, success=True,
                         loss_trace=(0.0,), iterations_run=0)


# ---------------------------------------------------------------------------
# Pixel baselines
# ---------------------------------------------------------------------------

def test_fgsm_zero_eps_returns_clean(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    res = atk.baseline_fgsm(img, clf, 2, eps=0.0)
    assert np.array_equal(res.adversarial, img)
    assert res.success == (res.pred_clean != 2)


def test_baselines_respect_eps_ball(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    eps = 10.0 / 255.0
    for res in (atk.baseline_fgsm(img, clf, 1, eps=eps),
                atk.baseline_ifgsm(img, clf, 1, eps=eps, n=10),
                atk.baseline_mifgsm(img, clf, 1, eps=eps, n=10)):
        assert np.max(np.abs(res.adversarial - img)) <= eps + 1e-12
        assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0


def test_mifgsm_mu0_n1_equals_fgsm_bitwise(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    fgsm = atk.baseline_fgsm(img, clf, 3)
    mi = atk.baseline_mifgsm(img, clf, 3, n=1, mu=0.0)
    assert np.array_equal(fgsm.adversarial, mi.adversarial)
    assert fgsm.pred_adv == mi.pred_adv


def test_baseline_traces_and_iteration_counts(rng):
    clf = _clf(rng)
    img = rng.random((16, 16, 3))
    res = atk.baseline_ifgsm(img, clf, 0, n=7)
    assert len(res.loss_trace) == 8
    assert res.iterations_run == 7
    res = atk.baseline_mifgsm(img, clf, 0, n=3)
    assert len(res.loss_trace) == 4
    with pytest.raises(ValueError):
        atk.baseline_ifgsm(img, clf, 0, n=0)
