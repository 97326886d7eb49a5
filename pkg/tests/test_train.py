import numpy as np
import pytest

from ditnano.arch_plan import DitConfig
from ditnano.distill.data import TeacherPair, synth_teacher
from ditnano.distill.losses import TaSetup, make_ta
from ditnano.distill.train import AdamW, TrainConfig, loss_curve_csv, train, window_means
from ditnano.errors import ConfigError, DivergenceError
from ditnano.schedules import Mi1Plan
from ditnano.tiny_dit.autograd import Tensor
from ditnano.tiny_dit.checkpoint import load_checkpoint
from ditnano.tiny_dit.model import EmaState, ema_update, init_model

CFG = DitConfig(2, 16, 2, image_size=8)


@pytest.fixture(scope="module")
def pairs():
    return list(synth_teacher(40, seed=0, image_size=8))


def weights(m):
    return {k: v.data.copy() for k, v in m.params.items()}


def test_zero_epochs_keeps_init(pairs, tmp_path):
    m = init_model(CFG, 0)
    before = weights(m)
    result = train(TrainConfig(epochs=0), pairs, m, checkpoint=tmp_path / "c.dtck")
    assert result.history == []
    ck = load_checkpoint(tmp_path / "c.dtck")
    assert all(np.array_equal(ck.weights[k], before[k]) for k in before)


def test_zero_learning_rate_leaves_weights(pairs):
    m = init_model(CFG, 0)
    before = weights(m)
    train(TrainConfig(lr=0.0, weight_decay=0.5, steps=3, batch_size=8), pairs, m)
    # decoupled decay scales by (1 - lr * wd) = 1 each step
    assert all(np.array_equal(m[k].data, before[k]) for k in before)


def test_adamw_decay_arithmetic():
    p = Tensor(np.array([2.0, -4.0]))
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.5)
    for _ in range(3):
        opt.step({"p": np.zeros(2)})
    np.testing.assert_allclose(p.data, np.array([2.0, -4.0]) * 0.95**3, rtol=1e-15)


def test_adamw_first_step_matches_reference():
    # first Adam step moves each weight by lr * sign(g) (bias-corrected moments)
    p = Tensor(np.array([1.0, 1.0]))
    AdamW({"p": p}, lr=0.01, weight_decay=0.0, eps=0.0).step({"p": np.array([3.0, -0.2])})
    np.testing.assert_allclose(p.data, [0.99, 1.01], rtol=1e-14)


def test_reproducible_curves(pairs):
    cfg = TrainConfig(steps=6, batch_size=8, lr=1e-3)
    a = train(cfg, pairs, init_model(CFG, 0)).losses
    b = train(cfg, pairs, init_model(CFG, 0)).losses
    assert a == b


def test_ema_replay_oracle(pairs):
    m = init_model(CFG, 0)
    trajectory = []
    cfg = TrainConfig(steps=5, batch_size=8, lr=1e-3, ema_decay=0.7)
    result = train(cfg, pairs, m, on_step=lambda step, model, rec: trajectory.append(weights(model)))
    shadow = EmaState(weights(init_model(CFG, 0)), 0.7)
    for w in trajectory:
        shadow = ema_update(shadow, init_model(CFG, 0).with_weights(w))
    assert all(np.array_equal(shadow.shadow[k], result.ema.shadow[k]) for k in shadow.shadow)


def test_divergence_saves_last_good(tmp_path):
    bad = [TeacherPair(np.zeros((3, 8, 8), np.float32), 0, np.full((3, 8, 8), np.nan, np.float32))] * 4
    m = init_model(CFG, 0)
    before = weights(m)
    with pytest.raises(DivergenceError) as info:
        train(TrainConfig(steps=2, batch_size=2), bad, m, checkpoint=tmp_path / "d.dtck")
    assert info.value.step == 0
    ck = load_checkpoint(tmp_path / "d.dtck")
    assert all(np.array_equal(ck.weights[k], before[k]) for k in before)


def test_loss_csv_and_artifacts(pairs, tmp_path):
    result = train(TrainConfig(steps=3, batch_size=8), pairs, init_model(CFG, 0), loss_csv=tmp_path / "l.csv")
    text = (tmp_path / "l.csv").read_text()
    assert text.splitlines()[0] == "step,loss,ema_loss"
    assert len(text.splitlines()) == 4 and text == loss_curve_csv(result.history)


def test_mi1_and_ta_runs(pairs):
    r = train(TrainConfig(method="mi1", plan=Mi1Plan((1, 2), (0.5, 0.0)), steps=2, batch_size=8), pairs, init_model(CFG, 0))
    assert set(r.history[0].terms) == {"layer1", "layer2"}
    setup = TaSetup.create(CFG, make_ta(CFG, CFG.replace(width=24, heads=4), seed=1))
    start = setup.expansion.data.copy()
    r = train(TrainConfig(method="ta", steps=2, batch_size=8, lr=1e-2), pairs, init_model(CFG, 0), ta=setup)
    assert set(r.history[0].terms) == {"teacher", "ta", "features"}
    assert not np.array_equal(setup.expansion.data, start)


def test_config_errors(pairs):
    with pytest.raises(ConfigError):
        TrainConfig(method="dmd")
    with pytest.raises(ConfigError):
        TrainConfig(method="mi1")
    with pytest.raises(ConfigError):
        train(TrainConfig(method="ta", steps=1), pairs, init_model(CFG, 0))
    with pytest.raises(ConfigError):
        TrainConfig(ema_decay=1.5)


def test_steps_for_and_windows():
    assert TrainConfig(epochs=2, batch_size=32).steps_for(500) == 32
    assert TrainConfig(steps=7).steps_for(500) == 7
    assert window_means([1, 2, 3, 4, 5, 6, 7], 3) == [2.5, 4.5, 6.5]
