"""Evaluation metrics: flow endpoint error, segmentation ARI, PSNR, tracking.

All functions are pure.  Flow metrics take (H, W, 2) arrays plus an
optional validity mask; tracking metrics take aligned lists of tracks
(either PointTrack objects or dicts with the tracks.json keys).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, MismatchedTracks, NoForeground

TRACK_DELTA = 2.0  # position thresholds are delta**x for x in 0..4


@dataclass
class FlowMetrics:
    aepe: float
    error_rate: float


@dataclass
class TrackMetrics:
    occlusion_accuracy: float
    thresholds: list  # alpha = delta**x
    position_accuracy: list  # fraction closer than alpha, GT-visible frames
    position_accuracy_avg: float
    jaccard: list
    average_jaccard: float


def _flow_pair(flow_pred, flow_gt, valid_mask):
    pred = np.asarray(flow_pred, dtype=np.float64)
    gt = np.asarray(flow_gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"flow shapes differ: {pred.shape} vs {gt.shape}")
    if valid_mask is None:
        mask = np.ones(pred.shape[:-1], dtype=bool)
    else:
        mask = np.asarray(valid_mask, dtype=bool)
        if mask.ndim == pred.ndim:  # allow a trailing singleton channel
            mask = mask[..., 0]
    if not mask.any():
        raise EmptyMask("no valid pixels selected")
    epe = np.linalg.norm(pred - gt, axis=-1)[mask]
    mag = np.linalg.norm(gt, axis=-1)[mask]
    return epe, mag


def aepe(flow_pred, flow_gt, valid_mask=None):
    """Average endpoint error in pixels over the masked region."""
    epe, _ = _flow_pair(flow_pred, flow_gt, valid_mask)
    return float(epe.mean())


def error_rate(flow_pred, flow_gt, valid_mask=None, tau_px=3.0, tau_rel=0.05):
    """Fraction of masked pixels whose EPE exceeds both thresholds.

    A pixel is an error when EPE > tau_px and EPE > tau_rel * |gt|.
    """
    epe, mag = _flow_pair(flow_pred, flow_gt, valid_mask)
    bad = (epe > tau_px) & (epe > tau_rel * mag)
    return float(bad.mean())


def flow_metrics(flow_pred, flow_gt, valid_mask=None):
    return FlowMetrics(
        aepe=aepe(flow_pred, flow_gt, valid_mask),
        error_rate=error_rate(flow_pred, flow_gt, valid_mask),
    )


def _comb2(counts):
    c = counts.astype(np.float64)
    return float((c * (c - 1.0) / 2.0).sum())


def fg_ari(gt_segmentation, pred_segmentation, background_id=0):
    """Adjusted Rand index over pixels whose GT id is not the background.

    Identical restricted partitions give 1.0, including the degenerate
    single-cluster case.  Raises NoForeground when the GT has no pixels
    outside background_id.
    """
    gt = np.asarray(gt_segmentation).reshape(-1)
    pred = np.asarray(pred_segmentation).reshape(-1)
    if gt.shape != pred.shape:
        raise ValueError(f"segmentation shapes differ: {gt.shape} vs {pred.shape}")
    fg = gt != background_id
    if not fg.any():
        raise NoForeground("ground truth has no foreground pixels")
    gt = gt[fg]
    pred = pred[fg]

    _, gi = np.unique(gt, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((gi.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (gi, pi), 1)

    index = _comb2(table.reshape(-1))
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    total = _comb2(np.array([gt.size]))
    expected = sum_a * sum_b / total if total > 0 else 0.0
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def psnr(img_a, img_b, max_val=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give +infinity."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return float(10.0 * math.log10(max_val * max_val / mse))


def _track_arrays(track):
    if isinstance(track, dict):
        q = track["query"]
        pos = np.asarray(track["positions"], dtype=np.float64)
        vis = np.asarray(track["visibility"], dtype=bool)
    else:
        q = track.query
        pos = np.asarray(track.positions, dtype=np.float64)
        vis = np.asarray(track.visibility, dtype=bool)
    return (float(q[0]), float(q[1]), int(q[2])), pos, vis


def track_metrics(gt_tracks, pred_tracks, delta=TRACK_DELTA, frame_start=0):
    """Score predicted tracks against ground truth -> TrackMetrics.

    Tracks are aligned by list index; each query's own frame is excluded
    from scoring.  Occlusion accuracy counts correct visibility calls on
    every remaining (point, frame).  Position accuracy is the fraction of
    GT-visible frames predicted within alpha pixels, regardless of the
    predicted visibility.  Jaccard at alpha counts TP (both visible,
    within alpha), FN (GT visible, missed or too far), FP (prediction
    visible but wrong or too far).  Empty denominators score 1.0.
    """
    if len(gt_tracks) != len(pred_tracks):
        raise MismatchedTracks(
            f"{len(gt_tracks)} ground-truth vs {len(pred_tracks)} predicted tracks"
        )
    alphas = [delta**x for x in range(5)]
    occ_correct = occ_total = 0
    pos_within = [0] * len(alphas)
    pos_total = 0
    tp = [0] * len(alphas)
    fn = [0] * len(alphas)
    fp = [0] * len(alphas)

    for gt_track, pred_track in zip(gt_tracks, pred_tracks):
        (qx, qy, qf), gt_pos, gt_vis = _track_arrays(gt_track)
        _, pred_pos, pred_vis = _track_arrays(pred_track)
        if gt_pos.shape != pred_pos.shape or gt_vis.shape != pred_vis.shape:
            raise MismatchedTracks(
                f"track shapes differ: {gt_pos.shape} vs {pred_pos.shape}"
            )
        dist = np.linalg.norm(gt_pos - pred_pos, axis=1)
        for i in range(len(gt_vis)):
            if i == qf - frame_start:
                continue
            occ_total += 1
            if gt_vis[i] == pred_vis[i]:
                occ_correct += 1
            if gt_vis[i]:
                pos_total += 1
            for k, alpha in enumerate(alphas):
                close = dist[i] < alpha
                if gt_vis[i] and close:
                    pos_within[k] += 1
                if gt_vis[i] and pred_vis[i] and close:
                    tp[k] += 1
                elif gt_vis[i] and not (pred_vis[i] and close):
                    fn[k] += 1
                if pred_vis[i] and not (gt_vis[i] and close):
                    fp[k] += 1

    def ratio(num, den):
        return num / den if den else 1.0

    position = [ratio(pos_within[k], pos_total) for k in range(len(alphas))]
    jac = [ratio(tp[k], tp[k] + fn[k] + fp[k]) for k in range(len(alphas))]
    return TrackMetrics(
        occlusion_accuracy=ratio(occ_correct, occ_total),
        thresholds=alphas,
        position_accuracy=position,
        position_accuracy_avg=sum(position) / len(position),
        jaccard=jac,
        average_jaccard=sum(jac) / len(jac),
    )


def naive_baseline(queries, num_frames):
    """Predicted tracks that assume no motion and no occlusion.

    queries may be (x, y, frame) triples or track objects/dicts; each
    prediction repeats the query position across all frames, visible
    everywhere.
    """
    from .tracks import PointTrack

    out = []
    for q in queries:
        if isinstance(q, (tuple, list)) and not isinstance(q[0], (tuple, list)):
            qx, qy, qf = float(q[0]), float(q[1]), int(q[2])
            instance = ""
            local = np.zeros(3)
        else:
            (qx, qy, qf), _, _ = _track_arrays(q)
            instance = q["instance"] if isinstance(q, dict) else q.instance
            local = np.asarray(
                q["local_point"] if isinstance(q, dict) else q.local_point,
                dtype=np.float64,
            )
        out.append(
            PointTrack(
                query=(qx, qy, qf),
                positions=np.tile([qx, qy], (num_frames, 1)),
                visibility=np.ones(num_frames, dtype=np.uint8),
                instance=instance,
                local_point=local,
            )
        )
    return out
