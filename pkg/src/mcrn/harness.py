"""Training driver: alternate clustering/bank initialization with optimization epochs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .clustering import (
    DegenerateClusteringError,
    Domain,
    PseudoDataset,
    build_pseudo_dataset,
    corrupt_clusters,
    dbscan,
    labelled_dataset,
)
from .config import ExperimentConfig, Representation
from .datasim import RawDataset, augment, evaluation_split, generate_domains, pk_sample
from .encoder import Encoder, OptimizerState, adam_step, lr_at
from .evaluation import RetrievalProtocol, cluster_purity, domain_distance, map_cmc
from .losses import total_loss
from .memory import CentroidBank, init_bank, update_class

log = logging.getLogger(__name__)

CMC_RANKS = (1, 5, 10)


@dataclass
class MetricsRecord:
    epoch: int
    mean_loss: float | None
    mAP: float
    cmc1: float
    cmc5: float
    cmc10: float
    purity: float | None
    n_t: int | None
    domain_distance: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


@dataclass
class TrainingState:
    """Everything needed to resume after ``epoch`` completed epochs."""

    config: ExperimentConfig
    encoder: Encoder
    optimizer: OptimizerState
    rng: np.random.Generator
    epoch: int = 0
    bank: CentroidBank | None = None
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)


@dataclass
class Data:
    source: RawDataset
    target: RawDataset
    eval_query: np.ndarray
    eval_gallery: np.ndarray


def build_data(config: ExperimentConfig) -> Data:
    src_spec, tgt_spec = config.domain_specs()
    source, target = generate_domains(src_spec, tgt_spec)
    query, gallery = evaluation_split(target.identities, config.seed)
    return Data(source, target, query, gallery)


def new_state(config: ExperimentConfig) -> TrainingState:
    rng = np.random.default_rng(config.seed)
    encoder = Encoder.create(config.encoder_dims, rng, dtype=np.float32)
    optimizer = OptimizerState.for_params(
        encoder.params,
        lr=config.lr,
        weight_decay=config.weight_decay,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )
    return TrainingState(config, encoder, optimizer, rng)


def evaluate(encoder: Encoder, data: Data) -> dict:
    """Target retrieval metrics and the source/target domain distance."""
    src = encoder.encode(data.source.x)
    tgt = encoder.encode(data.target.x)
    ids = data.target.identities
    proto = RetrievalProtocol(tgt[data.eval_query], ids[data.eval_query], tgt[data.eval_gallery], ids[data.eval_gallery])
    m_ap, cmc = map_cmc(proto, max_rank=max(CMC_RANKS))
    return {
        "mAP": m_ap,
        **{f"cmc{r}": float(cmc[r - 1]) for r in CMC_RANKS},
        "domain_distance": domain_distance(src, tgt),
        "source_features": src,
        "target_features": tgt,
    }


def prepare_epoch(state: TrainingState, data: Data, src_feats, tgt_feats):
    """Cluster the target domain, apply configured corruption, rebuild the bank."""
    cfg = state.config
    labeling = dbscan(tgt_feats, cfg.eps, cfg.min_pts)
    try:
        target = build_pseudo_dataset(labeling, Domain.TARGET, data.target.identities)
    except DegenerateClusteringError as exc:
        raise DegenerateClusteringError(
            f"epoch {state.epoch}: DBSCAN(eps={cfg.eps}, min_pts={cfg.min_pts}) labelled all "
            f"{len(tgt_feats)} target samples as noise"
        ) from exc
    if cfg.merge_pairs or cfg.split_classes:
        target = corrupt_clusters(target, *_feasible(target, cfg.merge_pairs, cfg.split_classes), state.rng)
    source = labelled_dataset(data.source.identities, Domain.SOURCE)
    if cfg.source_merge_pairs or cfg.source_split_classes:
        source = corrupt_clusters(source, *_feasible(source, cfg.source_merge_pairs, cfg.source_split_classes), state.rng)
    bank = init_bank(source, target, cfg.n_centroids, src_feats, tgt_feats)
    return source, target, bank, labeling


def _feasible(dataset: PseudoDataset, merges: int, splits: int) -> tuple[int, int]:
    merges = min(merges, dataset.n_classes // 2)
    splits = min(splits, dataset.n_classes - 2 * merges)
    return merges, splits


def train_iteration(state: TrainingState, data: Data, source: PseudoDataset, target: PseudoDataset,
                    bank: CentroidBank, p_source: int, p_target: int, lr: float) -> float:
    cfg = state.config
    rng = state.rng
    sb = pk_sample(source, p_source, cfg.k, rng)
    tb = pk_sample(target, p_target, cfg.k, rng)
    x = np.vstack([data.source.x[source.indices[sb.positions]], data.target.x[target.indices[tb.positions]]])
    x = augment(x, rng, cfg.jitter)
    feats, cache = state.encoder.forward(x)
    n_s = len(sb)
    qs, qt = feats[:n_s], feats[n_s:]

    loss = total_loss(qs, sb.labels, qt, tb.labels, bank, cfg.loss_config, rng)
    grads = state.encoder.backward(cache, np.vstack([loss.source_grads, loss.target_grads]))
    state.optimizer.lr = lr
    adam_step(state.encoder, state.optimizer, grads)

    # memory update at the end of the iteration, one call per sampled class
    for domain, half, q in ((Domain.SOURCE, sb, qs), (Domain.TARGET, tb, qt)):
        for i, cls in enumerate(half.classes):
            block = q[half.class_block(i)]
            if bank.k == len(block):
                update_class(bank, domain, int(cls), block, cfg.momentum)
            else:
                for row in block:
                    update_class(bank, domain, int(cls), row[None, :], cfg.momentum)
    return loss.value


def run_epoch(state: TrainingState, data: Data, src_feats, tgt_feats) -> tuple[float, float, int]:
    cfg = state.config
    source, target, bank, _ = prepare_epoch(state, data, src_feats, tgt_feats)
    state.bank = bank
    purity = cluster_purity(target.labels, target.identities)
    p_s = min(cfg.p, source.n_classes)
    p_t = min(cfg.p, target.n_classes)
    if p_t < cfg.p:
        log.info("epoch %d: only %d pseudo classes, sampling P=%d", state.epoch, target.n_classes, p_t)
    n_iter = cfg.iterations or math.ceil(len(target) / (cfg.p * cfg.k))
    lr = lr_at(state.epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma)
    losses = [train_iteration(state, data, source, target, bank, p_s, p_t, lr) for _ in range(n_iter)]
    return math.fsum(losses) / max(len(losses), 1), purity, target.n_classes


def run_experiment(config: ExperimentConfig, state: TrainingState | None = None, stop_after: int | None = None,
                   on_epoch=None) -> TrainingState:
    """Train for ``config.epochs`` epochs (or resume ``state``) and collect metrics.

    Record 0 describes the untrained encoder; record ``e`` is taken after
    epoch ``e``. ``stop_after`` ends the run early after that many completed
    epochs so the state can be checkpointed.
    """
    data = build_data(config)
    if state is None:
        state = new_state(config)
    t0 = time.perf_counter()
    metrics = evaluate(state.encoder, data)
    if state.epoch == 0 and not state.records:
        state.records.append(_record(0, None, None, None, metrics))
        state.timings.append(time.perf_counter() - t0)
    last = config.epochs if stop_after is None else min(config.epochs, stop_after)
    while state.epoch < last:
        t0 = time.perf_counter()
        mean_loss, purity, n_t = run_epoch(state, data, metrics["source_features"], metrics["target_features"])
        state.epoch += 1
        metrics = evaluate(state.encoder, data)
        state.records.append(_record(state.epoch, mean_loss, purity, n_t, metrics))
        state.timings.append(time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(state)
    return state


def _record(epoch, mean_loss, purity, n_t, metrics) -> MetricsRecord:
    return MetricsRecord(
        epoch=epoch,
        mean_loss=mean_loss,
        mAP=metrics["mAP"],
        cmc1=metrics["cmc1"],
        cmc5=metrics["cmc5"],
        cmc10=metrics["cmc10"],
        purity=purity,
        n_t=n_t,
        domain_distance=metrics["domain_distance"],
    )


def metrics_jsonl(records) -> str:
    return "".join(r.to_json() + "\n" for r in records)


# --- sweeps and ablations ---------------------------------------------------

SUMMARY_FIELDS = ["mAP", "cmc1", "cmc5", "cmc10", "domain_distance", "purity", "n_t", "mean_loss"]


def final_metrics(records) -> dict:
    last = records[-1]
    return {k: getattr(last, k) for k in SUMMARY_FIELDS}


def sweep(config: ExperimentConfig, parameter: str, values) -> list[dict]:
    """One run per value of ``k`` or ``alpha`` with the config's seed."""
    if parameter not in ("k", "alpha"):
        raise ValueError(f"cannot sweep {parameter!r}; choose k or alpha")
    values = list(values)
    if not values:
        raise ValueError("no sweep values given")
    rows = []
    for v in values:
        cfg = config.with_(**{parameter: int(v) if parameter == "k" else float(v)})
        state = run_experiment(cfg)
        rows.append({"param": parameter, "value": getattr(cfg, parameter), **final_metrics(state.records)})
    return rows


ABLATIONS: dict[str, dict[str, dict]] = {
    "table1": {
        "baseline": dict(representation="uni", scope="ucl", synthesis="none"),
        "mcm": dict(representation="multi", scope="ucl", synthesis="none"),
        "mcm+dscl": dict(representation="multi", scope="dscl", synthesis="none"),
        "mcm+soni": dict(representation="multi", scope="ucl", synthesis="soni"),
        "mcrn": dict(representation="multi", scope="dscl", synthesis="soni"),
    },
    "table2": {
        "most/mean": dict(positive="most", negative="mean", scope="ucl", synthesis="none"),
        "least/mean": dict(positive="least", negative="mean", scope="ucl", synthesis="none"),
        "moderate/all": dict(positive="moderate", negative="all", scope="ucl", synthesis="none"),
        "moderate/mean": dict(positive="moderate", negative="mean", scope="ucl", synthesis="none"),
    },
    # with ~10 target classes, alpha = 0.03 gives a single anchor and SONI
    # emits nothing, so the synthesis comparison uses a larger alpha
    "table3": {
        "qnni": dict(synthesis="qnni", alpha=0.3),
        "rnni": dict(synthesis="rnni", alpha=0.3),
        "soni": dict(synthesis="soni", alpha=0.3),
    },
    "dscl": {
        "ucl": dict(scope="ucl", synthesis="none"),
        "dscl": dict(scope="dscl", synthesis="none"),
    },
}


def ablate(config: ExperimentConfig, preset: str, seeds) -> list[dict]:
    """Run every arm of a preset for each seed; append one median row per arm."""
    if preset not in ABLATIONS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(ABLATIONS)}")
    rows = []
    for arm, changes in ABLATIONS[preset].items():
        per_seed = []
        for seed in seeds:
            state = run_experiment(config.with_(seed=int(seed), **changes))
            row = {"arm": arm, "seed": int(seed), **final_metrics(state.records)}
            per_seed.append(row)
            rows.append(row)
        rows.append({"arm": arm, "seed": "median", **{k: statistics.median(r[k] for r in per_seed) for k in SUMMARY_FIELDS}})
    return rows


def rows_to_csv(rows) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
    return out.getvalue()
