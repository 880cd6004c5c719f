import numpy as np
import pytest

from irstlab import nn_core as nn
from irstlab.detector import (
    DetectorNet,
    IouLossConfig,
    det_forward,
    det_predict,
    det_train,
    soft_iou_loss,
)
from irstlab.image_core import BinaryMask, GrayImage
from irstlab.nn_core import Tensor, finite_difference_check
from irstlab.rng import Rng
from irstlab.synth import SceneSpec, make_sample


# --- soft-IoU loss ---------------------------------------------------------

def test_loss_zero_when_pred_equals_binary_gt():
    gt = (Rng(0).standard_normal((1, 1, 6, 6)) > 0).astype(np.float64)
    loss = soft_iou_loss(Tensor(gt.copy()), gt)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_loss_spot_value_all_zero_pred():
    # inter = 0, sum(gt) = 10, alpha = 1: loss = 1 - 1/11 = 10/11
    gt = np.zeros((1, 1, 5, 5))
    gt[0, 0, :2, :5] = 1.0
    loss = soft_iou_loss(Tensor(np.zeros_like(gt)), gt, IouLossConfig(alpha=1.0))
    assert loss.item() == pytest.approx(10.0 / 11.0, rel=1e-12)


def test_loss_matches_numpy_oracle():
    rng = Rng(1)
    pred = 1.0 / (1.0 + np.exp(-rng.standard_normal((2, 1, 4, 4))))
    gt = (rng.standard_normal((2, 1, 4, 4)) > 0.3).astype(np.float64)
    alpha = 0.7
    inter = (pred * gt).sum()
    want = 1.0 - (inter + alpha) / (pred.sum() + gt.sum() - inter + alpha)
    got = soft_iou_loss(Tensor(pred), gt, IouLossConfig(alpha=alpha))
    assert got.item() == pytest.approx(want, rel=1e-12)


def test_loss_per_image_averages_per_sample_losses():
    rng = Rng(2)
    pred = 1.0 / (1.0 + np.exp(-rng.standard_normal((3, 1, 5, 5))))
    gt = (rng.standard_normal((3, 1, 5, 5)) > 0.0).astype(np.float64)
    alpha = 1.0
    per = []
    for i in range(3):
        inter = (pred[i] * gt[i]).sum()
        per.append(1.0 - (inter + alpha) / (pred[i].sum() + gt[i].sum() - inter + alpha))
    got = soft_iou_loss(Tensor(pred), gt, IouLossConfig(alpha=alpha, per_image=True))
    assert got.item() == pytest.approx(np.mean(per), rel=1e-12)


def test_loss_gradient_matches_finite_differences():
    rng = Rng(3)
    gt = (rng.standard_normal((1, 1, 4, 4)) > 0).astype(np.float64)
    pred = Tensor(0.2 + 0.6 * rng.uniform(size=(1, 1, 4, 4)))
    finite_difference_check(lambda p: soft_iou_loss(p, gt), [pred])


def test_loss_gradient_per_image_matches_finite_differences():
    rng = Rng(4)
    gt = (rng.standard_normal((2, 1, 4, 4)) > 0).astype(np.float64)
    pred = Tensor(0.2 + 0.6 * rng.uniform(size=(2, 1, 4, 4)))
    cfg = IouLossConfig(alpha=0.5, per_image=True)
    finite_difference_check(lambda p: soft_iou_loss(p, gt, cfg), [pred])


def test_loss_monotone_along_interpolation_to_gt():
    # moving pred linearly toward the mask must only lower the loss
    gt = np.zeros((1, 1, 8, 8))
    gt[0, 0, 2:5, 3:6] = 1.0
    losses = [soft_iou_loss(Tensor(t * gt), gt).item()
              for t in np.linspace(0.0, 1.0, 10)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_loss_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        soft_iou_loss(Tensor(np.zeros((1, 1, 4, 4))), np.zeros((1, 1, 5, 5)))


def test_loss_config_rejects_bad_alpha():
    with pytest.raises(ValueError):
        IouLossConfig(alpha=0.0)
    with pytest.raises(ValueError):
        IouLossConfig(alpha=-1.0)


# --- detector network ------------------------------------------------------

def test_detector_output_shape_and_range():
    net = DetectorNet(Rng(5), channels=8)
    img = GrayImage(Rng(6).uniform(size=(16, 16)))
    prob = det_forward(net, img)
    assert prob.shape == (16, 16)
    assert np.all(prob > 0.0) and np.all(prob < 1.0)


def test_detector_deterministic_given_seed():
    img = GrayImage(Rng(7).uniform(size=(16, 16)))
    a = det_forward(DetectorNet(Rng(8), channels=8), img)
    b = det_forward(DetectorNet(Rng(8), channels=8), img)
    np.testing.assert_array_equal(a, b)


def test_detector_parameter_budget():
    net = DetectorNet(Rng(9), channels=16)
    n = sum(p.data.size for p in net.parameters())
    assert n < 200_000


def test_detector_initial_output_near_background_prior():
    # zero-init fusion weights plus bias -2 put the initial map near
    # sigmoid(-2), keeping early soft-IoU gradients alive
    net = DetectorNet(Rng(10), channels=8)
    prob = det_forward(net, GrayImage(Rng(11).uniform(size=(16, 16))))
    assert np.abs(prob - 1.0 / (1.0 + np.exp(2.0))).max() < 0.25


def test_predict_thresholds_probability_map():
    net = DetectorNet(Rng(12), channels=8)
    img = GrayImage(Rng(13).uniform(size=(16, 16)))
    prob = det_forward(net, img)
    mask = det_predict(net, img, threshold=0.11)
    assert isinstance(mask, BinaryMask)
    np.testing.assert_array_equal(mask.bits, (prob > 0.11).astype(np.uint8))


# --- training --------------------------------------------------------------

def test_det_train_reduces_loss():
    data = [make_sample(SceneSpec(size=24, n_targets=1, seed=20 + i))
            for i in range(6)]
    net = DetectorNet(Rng(14), channels=8)
    log = det_train(net, data, epochs=8, lr=3e-3, rng=Rng(15), batch_size=3)
    assert len(log) == 8
    assert log[-1]["loss"] < log[0]["loss"]


def test_det_train_rejects_empty_dataset():
    with pytest.raises(ValueError):
        det_train(DetectorNet(Rng(16), channels=8), [], epochs=1, lr=1e-3,
                  rng=Rng(17))


def test_det_train_same_seed_same_curve():
    data = [make_sample(SceneSpec(size=24, n_targets=1, seed=40 + i))
            for i in range(4)]
    logs = []
    for _ in range(2):
        net = DetectorNet(Rng(18), channels=8)
        logs.append(det_train(net, data, epochs=2, lr=1e-3, rng=Rng(19),
                              batch_size=2))
    assert [e["loss"] for e in logs[0]] == [e["loss"] for e in logs[1]]
