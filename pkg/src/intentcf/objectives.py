"""Loss terms of the joint training objective and their exact gradients.

Every function returns ``(loss_value, GradBuffer)`` where the buffer holds
the analytic gradient with respect to the base embedding table.  The only
trainable parameters are the table rows; targets, prototypes, and noise
are constants.  Gradients taken at propagated layers or at the readout
are pulled back through the adjacency (see :func:`backbone.pullback`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backbone import READOUT, EmbeddingTable, ForwardTrace, Hyperparameters, pullback
from .errors import ConfigError
from .intents import Assignment, Centroids, TargetSet

logger = logging.getLogger(__name__)

MI_TOL = 1e-12


class GradBuffer:
    """Row-indexed gradient accumulator over the embedding table.

    Accumulation is additive; rows never written stay absent from
    :meth:`rows` and read as zero in :meth:`dense`.
    """

    def __init__(self, num_rows: int, d: int):
        self._data = np.zeros((num_rows, d))
        self._touched = np.zeros(num_rows, dtype=bool)

    @property
    def num_rows(self) -> int:
        return self._data.shape[0]

    @property
    def d(self) -> int:
        return self._data.shape[1]

    def add_rows(self, rows: np.ndarray, values: np.ndarray) -> None:
        """Accumulate ``values[k]`` into row ``rows[k]``; repeats add up."""
        rows = np.asarray(rows, dtype=np.int64)
        np.add.at(self._data, rows, values)
        self._touched[rows] = True

    def add_dense(self, grad: np.ndarray) -> None:
        """Accumulate a full (n, d) array; rows with any nonzero entry count as touched."""
        self._data += grad
        self._touched |= np.any(grad != 0.0, axis=1)

    def add_scaled(self, other: "GradBuffer", coeff: float) -> None:
        if coeff == 0.0:
            return
        self._data += coeff * other._data
        self._touched |= other._touched

    def rows(self) -> np.ndarray:
        return np.flatnonzero(self._touched)

    def values(self, rows: np.ndarray) -> np.ndarray:
        return self._data[rows]

    def dense(self) -> np.ndarray:
        """Full (n, d) gradient; treat as read-only."""
        return self._data


class Batch:
    """BPR training triples (user, positive item, sampled negative item)."""

    def __init__(self, users: np.ndarray, pos_items: np.ndarray, neg_items: np.ndarray):
        self.users = np.asarray(users, dtype=np.int64)
        self.pos_items = np.asarray(pos_items, dtype=np.int64)
        self.neg_items = np.asarray(neg_items, dtype=np.int64)
        if not (self.users.shape == self.pos_items.shape == self.neg_items.shape):
            raise ConfigError("batch arrays must have identical length")
        self.unique_users = np.unique(self.users)
        self.unique_pos_items = np.unique(self.pos_items)
        self.unique_items = np.unique(np.concatenate((self.pos_items, self.neg_items)))

    @property
    def size(self) -> int:
        return self.users.shape[0]

    def touched_rows(self, num_users: int) -> np.ndarray:
        """Unique table rows the batch touches (users, positives, negatives)."""
        return np.unique(
            np.concatenate((self.users, num_users + self.pos_items, num_users + self.neg_items))
        )


@dataclass
class LossBreakdown:
    """Per-term loss values; ``total`` uses the effective loss weights."""

    rec: float
    ucl_user: float
    ucl_item: float
    mi: float
    ins_user: float
    ins_item: float
    reg: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return {
            "rec": self.rec,
            "ucl_user": self.ucl_user,
            "ucl_item": self.ucl_item,
            "mi": self.mi,
            "ins_user": self.ins_user,
            "ins_item": self.ins_item,
            "reg": self.reg,
            "total": self.total,
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log1p_exp_neg(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(-x)) with the large-|x| branch kept stable."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = np.log1p(np.exp(-x[pos]))
    out[~pos] = -x[~pos] + np.log1p(np.exp(x[~pos]))
    return out


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize, leaving zero rows at zero."""
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], safe


def _unnormalize_grad(d_hat: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. x/||x|| back to x."""
    return (d_hat - np.sum(d_hat * unit, axis=1, keepdims=True) * unit) / norms[:, None]


def bpr_loss(trace: ForwardTrace, batch: Batch) -> tuple[float, GradBuffer]:
    """Pairwise ranking loss ``sum -log sigmoid(s_pos - s_neg)`` over the triples."""
    if batch.size == 0:
        raise ConfigError("batch must be non-empty")
    nu = trace.num_users
    zu = trace.readout[batch.users]
    zi = trace.readout[nu + batch.pos_items]
    zj = trace.readout[nu + batch.neg_items]
    diff = zi - zj
    margin = np.sum(zu * diff, axis=1)
    loss = float(np.sum(_log1p_exp_neg(margin)))
    coeff = -_sigmoid(-margin)
    g = np.zeros_like(trace.readout)
    np.add.at(g, batch.users, coeff[:, None] * diff)
    np.add.at(g, nu + batch.pos_items, coeff[:, None] * zu)
    np.add.at(g, nu + batch.neg_items, -coeff[:, None] * zu)
    grad = pullback(trace, trace.adj, {READOUT: g})
    buf = GradBuffer(trace.readout.shape[0], trace.readout.shape[1])
    buf.add_dense(grad)
    return loss, buf


def ucl_loss(
    emb: EmbeddingTable,
    labels: np.ndarray,
    assignment: Assignment,
    targets: TargetSet,
    tau: float,
    side: str,
    members: np.ndarray | None = None,
) -> tuple[float, GradBuffer]:
    """Softmax contrast pulling each base embedding to its cluster's target.

    For every instance the positive logit is the dot product with the
    target assigned to its prototype; the denominator runs over all
    targets of that side.  Targets are constants, so only the instance
    rows receive gradient.
    """
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    if side not in ("user", "item"):
        raise ConfigError(f"side must be 'user' or 'item', got {side!r}")
    offset = 0 if side == "user" else emb.num_users
    count = emb.num_users if side == "user" else emb.num_items
    if members is None:
        members = np.arange(count, dtype=np.int64)
    else:
        members = np.asarray(members, dtype=np.int64)
    buf = GradBuffer(emb.n, emb.d)
    if members.size == 0:
        return 0.0, buf
    labels = np.asarray(labels, dtype=np.int64)
    z = emb.table[offset + members]
    t = targets.vectors
    logits = z @ t.T / tau
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1)
    lse = np.log(denom) + m[:, 0]
    assigned = assignment.perm[labels[members]]
    picked = logits[np.arange(members.size), assigned]
    loss = float(np.sum(lse - picked))
    probs = e / denom[:, None]
    dz = (probs @ t - t[assigned]) / tau
    buf.add_rows(offset + members, dz)
    return loss, buf


@dataclass
class CoClusterDistribution:
    """Joint distribution over (user cluster, item cluster) for positive pairs.

    Built from clamped cosine memberships and clamped pair weights; keeps
    every intermediate needed to differentiate the mutual information
    through the construction.
    """

    joint: np.ndarray
    p_k: np.ndarray
    p_l: np.ndarray
    degenerate: bool
    raw_total: float
    user_rows: np.ndarray
    item_rows: np.ndarray
    pair_u: np.ndarray
    pair_i: np.ndarray
    memberships_user: np.ndarray
    memberships_item: np.ndarray
    pair_weights: np.ndarray
    user_unit: np.ndarray
    item_unit: np.ndarray
    user_norms: np.ndarray
    item_norms: np.ndarray
    centroid_unit_user: np.ndarray
    centroid_unit_item: np.ndarray
    num_rows: int


def cocluster_distribution(
    emb: EmbeddingTable,
    centroids_user: Centroids,
    centroids_item: Centroids,
    pairs: np.ndarray,
) -> CoClusterDistribution:
    """Joint co-cluster distribution induced by the given positive pairs.

    Membership of user u in cluster k is ``max(0, cos(u, c_k))`` and the
    weight of pair (u, i) is ``max(0, cos(u, i))``; the joint is their
    product summed over pairs and normalized to 1.  If everything clamps
    to zero the uniform joint is returned and flagged degenerate.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    uu, pair_u = np.unique(pairs[:, 0], return_inverse=True)
    ii, pair_i = np.unique(pairs[:, 1], return_inverse=True)
    user_rows = uu
    item_rows = emb.num_users + ii
    user_unit, user_norms = _unit_rows(emb.table[user_rows])
    item_unit, item_norms = _unit_rows(emb.table[item_rows])
    cu_unit, _ = _unit_rows(centroids_user.matrix)
    ci_unit, _ = _unit_rows(centroids_item.matrix)
    a = np.clip(user_unit @ cu_unit.T, 0.0, None)
    b = np.clip(item_unit @ ci_unit.T, 0.0, None)
    w = np.clip(np.sum(user_unit[pair_u] * item_unit[pair_i], axis=1), 0.0, None)
    joint_raw = (a[pair_u] * w[:, None]).T @ b[pair_i]
    total = float(joint_raw.sum())
    ck, cl = joint_raw.shape
    if total <= 0.0:
        joint = np.full((ck, cl), 1.0 / (ck * cl))
        degenerate = True
    else:
        joint = joint_raw / total
        degenerate = False
    return CoClusterDistribution(
        joint=joint,
        p_k=joint.sum(axis=1),
        p_l=joint.sum(axis=0),
        degenerate=degenerate,
        raw_total=total,
        user_rows=user_rows,
        item_rows=item_rows,
        pair_u=pair_u,
        pair_i=pair_i,
        memberships_user=a,
        memberships_item=b,
        pair_weights=w,
        user_unit=user_unit,
        item_unit=item_unit,
        user_norms=user_norms,
        item_norms=item_norms,
        centroid_unit_user=cu_unit,
        centroid_unit_item=ci_unit,
        num_rows=emb.n,
    )


def mutual_information(joint: np.ndarray, tol: float = MI_TOL) -> float:
    """MI of a joint distribution in nats; entries below ``tol`` count as zero."""
    p_k = joint.sum(axis=1)
    p_l = joint.sum(axis=0)
    mask = joint >= tol
    outer = p_k[:, None] * p_l[None, :]
    return float(np.sum(joint[mask] * np.log(joint[mask] / outer[mask])))


def mi_loss(dist: CoClusterDistribution) -> tuple[float, GradBuffer]:
    """Negated co-cluster mutual information with its gradient.

    Differentiates through the joint normalization, the clamped cosine
    memberships and pair weights, and the row normalizations; prototypes
    are constants.  A degenerate distribution yields loss 0 and no
    gradient.
    """
    d = dist.user_unit.shape[1]
    buf = GradBuffer(dist.num_rows, d)
    if dist.degenerate:
        logger.warning("degenerate co-cluster distribution; mutual information set to 0")
        return 0.0, buf
    p = dist.joint
    p_k, p_l = dist.p_k, dist.p_l
    mask = p >= MI_TOL
    mi = mutual_information(p)

    # d MI / d joint, respecting the tolerance mask used in the value.
    outer = p_k[:, None] * p_l[None, :]
    g = np.zeros_like(p)
    g[mask] = np.log(p[mask] / outer[mask]) + 1.0
    row_masked = np.sum(p * mask, axis=1)
    col_masked = np.sum(p * mask, axis=0)
    safe_k = np.where(p_k > 0, p_k, 1.0)
    safe_l = np.where(p_l > 0, p_l, 1.0)
    g -= (row_masked / safe_k)[:, None]
    g -= (col_masked / safe_l)[None, :]
    # d MI / d raw joint, through the normalization by the raw total.
    h = (g - float(np.sum(g * p))) / dist.raw_total

    a, b, w = dist.memberships_user, dist.memberships_item, dist.pair_weights
    a_pair = a[dist.pair_u]
    b_pair = b[dist.pair_i]
    hb = b_pair @ h.T
    da_pair = hb * w[:, None]
    db_pair = (a_pair @ h) * w[:, None]
    dw_pair = np.sum(a_pair * hb, axis=1)

    da = np.zeros_like(a)
    np.add.at(da, dist.pair_u, da_pair)
    db = np.zeros_like(b)
    np.add.at(db, dist.pair_i, db_pair)

    d_user_unit = (da * (a > 0)) @ dist.centroid_unit_user
    d_item_unit = (db * (b > 0)) @ dist.centroid_unit_item
    live = dw_pair * (w > 0)
    np.add.at(d_user_unit, dist.pair_u, live[:, None] * dist.item_unit[dist.pair_i])
    np.add.at(d_item_unit, dist.pair_i, live[:, None] * dist.user_unit[dist.pair_u])

    d_user = _unnormalize_grad(d_user_unit, dist.user_unit, dist.user_norms)
    d_item = _unnormalize_grad(d_item_unit, dist.item_unit, dist.item_norms)
    buf.add_rows(dist.user_rows, -d_user)
    buf.add_rows(dist.item_rows, -d_item)
    return -mi, buf


def ins_loss(
    trace: ForwardTrace,
    members: np.ndarray,
    contrast_layer: int,
    tau: float,
    side: str,
) -> tuple[float, GradBuffer]:
    """Cross-layer contrast between layer ``contrast_layer`` and layer 0.

    Each member's normalized layer-k vector is contrasted against the
    normalized layer-0 vectors of every member (itself included) of the
    same side.  ``members`` must be unique indices local to the side.
    Gradients reach the table through both the layer-0 rows and the
    pullback of the layer-k rows.
    """
    if not 1 <= contrast_layer <= trace.L:
        raise ConfigError(f"contrast_layer must be in [1, {trace.L}]")
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    if side not in ("user", "item"):
        raise ConfigError(f"side must be 'user' or 'item', got {side!r}")
    members = np.asarray(members, dtype=np.int64)
    n, d = trace.layers[0].shape
    buf = GradBuffer(n, d)
    if members.size == 0:
        return 0.0, buf
    if members.size == 1:
        logger.warning("instance contrast needs at least 2 members; loss set to 0")
        return 0.0, buf
    offset = 0 if side == "user" else trace.num_users
    rows = offset + members
    anchor_unit, anchor_norms = _unit_rows(trace.layers[contrast_layer][rows])
    base_unit, base_norms = _unit_rows(trace.layers[0][rows])
    logits = anchor_unit @ base_unit.T / tau
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1)
    lse = np.log(denom) + m[:, 0]
    idx = np.arange(members.size)
    loss = float(np.sum(lse - logits[idx, idx]))
    probs = e / denom[:, None]
    d_anchor_unit = (probs @ base_unit - base_unit) / tau
    probs_minus = probs.copy()
    probs_minus[idx, idx] -= 1.0
    d_base_unit = probs_minus.T @ anchor_unit / tau
    d_anchor = _unnormalize_grad(d_anchor_unit, anchor_unit, anchor_norms)
    d_base = _unnormalize_grad(d_base_unit, base_unit, base_norms)
    g0 = np.zeros((n, d))
    g0[rows] = d_base
    gk = np.zeros((n, d))
    gk[rows] = d_anchor
    grad = pullback(trace, trace.adj, {0: g0, contrast_layer: gk})
    buf.add_dense(grad)
    return loss, buf


def total_loss(
    parts: dict[str, tuple[float, GradBuffer | None]],
    hp: Hyperparameters,
    emb: EmbeddingTable,
    batch: Batch,
    warmup: bool = False,
) -> tuple[LossBreakdown, GradBuffer]:
    """Combine the per-term losses and gradients under the loss weights.

    ``parts`` maps term names (rec, ucl_user, ucl_item, mi, ins_user,
    ins_item) to (loss, gradient) pairs; missing terms count as zero.  In
    warm-up mode the intent terms are dropped (weights forced to 0).  The
    regularizer is ``lambda_reg`` times the squared norm of every table
    row the batch touches.
    """
    lam1 = 0.0 if warmup else hp.lambda1
    lam2 = 0.0 if warmup else hp.lambda2
    lam3 = hp.lambda3

    def part(name: str) -> tuple[float, GradBuffer | None]:
        return parts.get(name, (0.0, None))

    rec, rec_g = part("rec")
    ucl_u, ucl_u_g = part("ucl_user")
    ucl_i, ucl_i_g = part("ucl_item")
    mi, mi_g = part("mi")
    ins_u, ins_u_g = part("ins_user")
    ins_i, ins_i_g = part("ins_item")

    touched = batch.touched_rows(emb.num_users)
    reg = hp.lambda_reg * float(np.sum(emb.table[touched] ** 2))
    total = (
        rec
        + lam1 * (ucl_u + hp.alpha * ucl_i)
        + lam2 * mi
        + lam3 * (ins_u + hp.alpha * ins_i)
        + reg
    )
    buf = GradBuffer(emb.n, emb.d)
    for grad, coeff in (
        (rec_g, 1.0),
        (ucl_u_g, lam1),
        (ucl_i_g, lam1 * hp.alpha),
        (mi_g, lam2),
        (ins_u_g, lam3),
        (ins_i_g, lam3 * hp.alpha),
    ):
        if grad is not None:
            buf.add_scaled(grad, coeff)
    if hp.lambda_reg > 0:
        buf.add_rows(touched, 2.0 * hp.lambda_reg * emb.table[touched])
    breakdown = LossBreakdown(rec, ucl_u, ucl_i, mi, ins_u, ins_i, reg, total)
    return breakdown, buf
