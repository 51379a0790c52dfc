import pytest

from spatial_uda.exceptions import UsageError
from spatial_uda.report import summarize
from spatial_uda.training import LOG_COLUMNS

CFG = dict(inner_iters=2, window=2, eps1=0.5, eps2=3.0, min_adapt_epochs=2, max_adapt_epochs=10)


def _row(**kw):
    row = dict.fromkeys(LOG_COLUMNS)
    row.update(phase="adapt", **kw)
    return row


def _log(d_values, src, tgt):
    rows = [_row(epoch=0, inner_iter=0, src_dice=src[0], tgt_dice=tgt[0])]
    for e in range(1, len(src)):
        pair = d_values[2 * (e - 1) : 2 * e]
        rows.append(_row(epoch=e, inner_iter=1, d_j=pair[0]))
        rows.append(_row(epoch=e, inner_iter=2, d_j=pair[1], sigma2=0.0, src_dice=src[e], tgt_dice=tgt[e]))
    return rows


def test_summary_recomputes_stop_epoch():
    # epoch 1 has small drift; epoch 2 is stable and large -> stop at 2
    rows = _log([1.0, 2.0, 4.0, 4.2, 4.1, 4.1], [0.9, 0.88, 0.89, 0.9], [0.5, 0.6, 0.7, 0.65])
    s = summarize(rows, CFG)
    assert s["converged"] and s["stop_epoch"] == 2
    assert s["final_tgt_dice"] == 0.7 and s["best_tgt_dice"] == 0.7 and s["best_epoch"] == 2
    assert s["pretrain_tgt_dice"] == 0.5
    assert s["max_src_drop"] == pytest.approx(0.02, abs=1e-12)


def test_summary_without_stop_uses_last_epoch():
    rows = _log([1.0, 2.0, 1.0, 2.0], [0.9, 0.9, 0.9], [0.5, 0.6, 0.55])
    s = summarize(rows, CFG)
    assert not s["converged"] and s["stop_epoch"] == 2 and s["final_tgt_dice"] == 0.55


def test_summary_rejects_empty_log():
    with pytest.raises(UsageError):
        summarize([], CFG)
