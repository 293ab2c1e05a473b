"""The four detector variants and their routing, scoring, and persistence.

* ae:   one encoder + one decoder for all traffic (global baseline)
* moe:  one full autoencoder per context
* cae:  one shared encoder + one decoder per context
* gcae: one shared encoder + one decoder per context group

A window is always scored through the decoder its (claimed) context routes
to; scoring and verdicts never look at ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import thresholds as th
from .dataset import DatasetSplit, Window, indices_by_context, stack_tensors
from .errors import (EmptyValidationSet, IncompleteGrouping, MissingArtifact,
                     UnroutedContext)
from .net import (AutoencoderSpec, Sequential, TrainConfig, TrainReport,
                  load_checkpoint, save_checkpoint, score_windows,
                  train_autoencoder, train_multi_decoder)

SHARED = -1
KINDS = ("ae", "moe", "cae", "gcae")


@dataclass
class Detector:
    kind: str
    spec: AutoencoderSpec
    contexts: tuple[int, ...]
    encoders: dict[int, Sequential]
    decoders: dict[int, Sequential]
    grouping: dict[int, int] | None = None     # context -> decoder key (gcae)
    thresholds: th.ThresholdTable | None = None
    norm_stats_hash: str | None = None
    reports: dict[str, TrainReport] = field(default_factory=dict)

    def decoder_key(self, context_id: int) -> int:
        if self.kind == "ae":
            return SHARED
        if self.kind == "gcae":
            if context_id not in self.grouping:
                raise UnroutedContext(f"context {context_id} has no decoder group")
            return self.grouping[context_id]
        if context_id not in self.decoders:
            raise UnroutedContext(f"context {context_id} has no decoder")
        return context_id

    def route(self, context_id: int) -> tuple[Sequential, Sequential]:
        if self.kind == "moe" and context_id not in self.encoders:
            raise UnroutedContext(f"context {context_id} has no encoder")
        enc = self.encoders[context_id if self.kind == "moe" else SHARED]
        return enc, self.decoders[self.decoder_key(context_id)]

    def score(self, x: np.ndarray, context_id: int) -> np.ndarray:
        enc, dec = self.route(context_id)
        return score_windows(enc, dec, x)

    def score_mixed(self, x: np.ndarray, context_ids: np.ndarray) -> np.ndarray:
        """Score a mixed batch, dispatching each window by its context."""
        out = np.empty(x.shape[0])
        for cid in np.unique(context_ids):
            mask = context_ids == cid
            out[mask] = self.score(x[mask], int(cid))
        return out

    def detect(self, x: np.ndarray, context_ids: np.ndarray,
               mode: str = "context") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Scores, verdicts and severities under the fitted thresholds.

        mode 'context' applies tau_c of each window's context, 'global'
        applies the pooled threshold to every window.
        """
        if self.thresholds is None:
            raise MissingArtifact(f"{self.kind} detector has no fitted thresholds")
        scores = self.score_mixed(x, context_ids)
        if mode == "global":
            taus = np.full(scores.shape[0], self.thresholds.global_tau)
        elif mode == "context":
            taus = np.array([self.thresholds.tau(int(c)) for c in context_ids])
        else:
            raise ValueError(f"unknown detection mode {mode!r}")
        verdicts = scores > taus
        severities = (scores - taus) / taus
        return scores, verdicts, severities

    def param_count(self) -> int:
        return (sum(e.param_count() for e in self.encoders.values())
                + sum(d.param_count() for d in self.decoders.values()))

    @property
    def decoder_count(self) -> int:
        return len(self.decoders)


def _by_context(windows: list[Window]) -> dict[int, np.ndarray]:
    tensors = stack_tensors(windows)
    return {cid: tensors[idx]
            for cid, idx in indices_by_context(windows).items()}


def _weights_by_context(split: DatasetSplit) -> dict[int, np.ndarray]:
    return {cid: split.weights[idx]
            for cid, idx in indices_by_context(split.train).items()}


def train_ae(split: DatasetSplit, spec: AutoencoderSpec,
             config: TrainConfig) -> Detector:
    rng = np.random.default_rng([config.seed, 11])
    enc, dec = spec.build_encoder(rng), spec.build_decoder(rng)
    report = train_autoencoder(enc, dec, stack_tensors(split.train),
                               stack_tensors(split.val), config,
                               sample_weights=split.weights)
    return Detector(kind="ae", spec=spec, contexts=split.train_contexts,
                    encoders={SHARED: enc}, decoders={SHARED: dec},
                    reports={"ae": report})


def train_moe(split: DatasetSplit, spec: AutoencoderSpec,
              config: TrainConfig) -> Detector:
    """One independently trained autoencoder per context."""
    train_ctx = _by_context(split.train)
    val_ctx = _by_context(split.val)
    encoders, decoders, reports = {}, {}, {}
    for cid, x_train in train_ctx.items():
        if val_ctx.get(cid) is None or val_ctx[cid].shape[0] == 0:
            raise EmptyValidationSet(
                f"context {cid} has no validation windows; early stopping "
                "needs every trained context in the validation split")
        rng = np.random.default_rng([config.seed, 12, cid])
        enc, dec = spec.build_encoder(rng), spec.build_decoder(rng)
        reports[f"c{cid}"] = train_autoencoder(enc, dec, x_train, val_ctx[cid],
                                               config, sample_weights=None)
        encoders[cid], decoders[cid] = enc, dec
    return Detector(kind="moe", spec=spec, contexts=tuple(sorted(train_ctx)),
                    encoders=encoders, decoders=decoders, reports=reports)


def train_cae(split: DatasetSplit, spec: AutoencoderSpec,
              config: TrainConfig) -> Detector:
    rng = np.random.default_rng([config.seed, 13])
    enc = spec.build_encoder(rng)
    train_ctx = _by_context(split.train)
    decoders = {cid: spec.build_decoder(np.random.default_rng([config.seed, 14, cid]))
                for cid in train_ctx}
    report = train_multi_decoder(enc, decoders, train_ctx,
                                 _val_aligned(split, train_ctx), config,
                                 weights_by_key=_weights_by_context(split))
    return Detector(kind="cae", spec=spec, contexts=tuple(sorted(train_ctx)),
                    encoders={SHARED: enc}, decoders=decoders,
                    reports={"cae": report})


def train_gcae(split: DatasetSplit, spec: AutoencoderSpec, config: TrainConfig,
               grouping: dict[int, int]) -> Detector:
    """Shared encoder with one decoder per context group.

    grouping maps every trained context to its decoder key (the group's
    representative context id).
    """
    train_ctx = _by_context(split.train)
    missing = sorted(set(train_ctx) - set(grouping))
    if missing:
        raise IncompleteGrouping(f"contexts without a group: {missing}")

    weights_ctx = _weights_by_context(split)
    val_ctx = _val_aligned(split, train_ctx)
    train_by_key: dict[int, np.ndarray] = {}
    val_by_key: dict[int, np.ndarray] = {}
    weights_by_key: dict[int, np.ndarray] = {}
    for key in sorted(set(grouping[c] for c in train_ctx)):
        members = sorted(c for c in train_ctx if grouping[c] == key)
        train_by_key[key] = np.concatenate([train_ctx[c] for c in members])
        val_by_key[key] = np.concatenate([val_ctx[c] for c in members])
        weights_by_key[key] = np.concatenate([weights_ctx[c] for c in members])

    rng = np.random.default_rng([config.seed, 15])
    enc = spec.build_encoder(rng)
    decoders = {key: spec.build_decoder(np.random.default_rng([config.seed, 16, key]))
                for key in train_by_key}
    report = train_multi_decoder(enc, decoders, train_by_key, val_by_key,
                                 config, weights_by_key=weights_by_key)
    return Detector(kind="gcae", spec=spec, contexts=tuple(sorted(train_ctx)),
                    encoders={SHARED: enc}, decoders=decoders,
                    grouping={c: grouping[c] for c in sorted(train_ctx)},
                    reports={"gcae": report})


def _val_aligned(split: DatasetSplit, train_ctx: dict[int, np.ndarray]
                 ) -> dict[int, np.ndarray]:
    """Validation tensors keyed like the training contexts (may be empty)."""
    val_ctx = _by_context(split.val)
    empty = np.zeros((0,) + next(iter(train_ctx.values())).shape[1:])
    return {cid: val_ctx.get(cid, empty) for cid in train_ctx}


def fit_detector_thresholds(detector: Detector, split: DatasetSplit,
                            fit_split: str = "train",
                            lam: float = th.DEFAULT_LAMBDA) -> th.ThresholdTable:
    """Fit per-context and global thresholds from one split's losses."""
    windows = split.windows(fit_split)
    tensors = stack_tensors(windows)
    context_ids = np.array([w.context_id for w in windows])
    scores = detector.score_mixed(tensors, context_ids)
    losses = {int(cid): scores[context_ids == cid]
              for cid in np.unique(context_ids)}
    table = th.fit(losses, lam=lam, fit_split=fit_split)
    detector.thresholds = table
    return table


# --- persistence -----------------------------------------------------------------

def _ckpt_name(role: str, key: int) -> str:
    if key == SHARED:
        return f"{role}.ckpt"
    return f"{role}_k{key}.ckpt"


def save_detector(out_dir: Path, detector: Detector) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": detector.kind,
        "param_count": detector.param_count(),
        "decoder_count": detector.decoder_count,
        "contexts": list(detector.contexts),
        "grouping": ({str(c): g for c, g in detector.grouping.items()}
                     if detector.grouping else None),
        "spec": detector.spec.to_dict(),
        "norm_stats_hash": detector.norm_stats_hash,
        "encoders": {str(k): _ckpt_name("encoder", k) for k in detector.encoders},
        "decoders": {str(k): _ckpt_name("decoder", k) for k in detector.decoders},
        "thresholds": "thresholds.csv" if detector.thresholds else None,
        "training": {
            branch: {
                "best_epoch": r.best_epoch,
                "best_val_loss": r.best_val_loss,
                "stopped_epoch": r.stopped_epoch,
            }
            for branch, r in sorted(detector.reports.items())
        },
    }
    (out_dir / "detector.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for key, enc in detector.encoders.items():
        save_checkpoint(out_dir / _ckpt_name("encoder", key), enc,
                        meta={"role": "encoder", "key": key, "kind": detector.kind})
    for key, dec in detector.decoders.items():
        save_checkpoint(out_dir / _ckpt_name("decoder", key), dec,
                        meta={"role": "decoder", "key": key, "kind": detector.kind})
    if detector.thresholds is not None:
        th.save_table(out_dir / "thresholds.csv", detector.thresholds)


def load_detector(bundle_dir: Path) -> Detector:
    manifest_path = bundle_dir / "detector.json"
    if not manifest_path.exists():
        raise MissingArtifact(f"no detector manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    encoders = {int(k): load_checkpoint(bundle_dir / name)[0]
                for k, name in manifest["encoders"].items()}
    decoders = {int(k): load_checkpoint(bundle_dir / name)[0]
                for k, name in manifest["decoders"].items()}
    table = None
    if manifest.get("thresholds"):
        table = th.load_table(bundle_dir / manifest["thresholds"])
    grouping = manifest.get("grouping")
    return Detector(
        kind=manifest["kind"],
        spec=AutoencoderSpec.from_dict(manifest["spec"]),
        contexts=tuple(manifest["contexts"]),
        encoders=encoders,
        decoders=decoders,
        grouping={int(c): g for c, g in grouping.items()} if grouping else None,
        thresholds=table,
        norm_stats_hash=manifest.get("norm_stats_hash"),
    )
