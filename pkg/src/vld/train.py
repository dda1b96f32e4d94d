"""End-to-end training: sampling, both modalities through the shared
encoder, the five-part objective, Adam with cosine decay, per-epoch
retrieval evaluation, and checkpointing.

Metrics lines carry logical timestamps (step and epoch counters) rather
than wall-clock time so identical seeds reproduce identical logs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig
from .data import (Dataset, generate, load_dataset, sample_batch, INFRARED,
                   VISIBLE)
from .errors import DivergenceError
from .hub import VideoModel
from .losses import (IdentityHead, LossWeights, identity_cross_entropy,
                     total_loss, weighted_regularized_triplet)
from .optim import Adam, cosine_lr
from .prompts import (FrozenTextEncoder, PromptBank, build_prompts,
                      encode_prompts, make_logit_scale, visual_text_loss)
from .retrieval import evaluate, extract_features, save_report
from .rng import Rng
from .tensor import Tensor, set_default_dtype


def build_model(cfg: RunConfig, rng: Rng) -> VideoModel:
    return VideoModel(cfg.encoder_config(), frames=cfg["data.frames"],
                      rng=rng, use_hub=cfg["stp.enabled"],
                      insertion_layer=cfg["stp.insertion_layer"])


class TrainingHeads:
    """Loss-side modules: identity heads, prompt bank, frozen text encoder."""

    def __init__(self, cfg: RunConfig, num_train_identities: int, rng: Rng):
        dim = cfg["encoder.dim"]
        self.id_head_cls = IdentityHead(dim, num_train_identities,
                                        rng.split("head-cls"))
        self.id_head_hub = None
        if cfg["stp.enabled"]:
            self.id_head_hub = IdentityHead(dim, num_train_identities,
                                            rng.split("head-hub"))
        self.prompts: PromptBank | None = None
        self.text_encoder: FrozenTextEncoder | None = None
        self.logit_scale: Tensor | None = None
        if cfg["imlp.enabled"]:
            self.prompts = build_prompts(num_train_identities,
                                         cfg["imlp.tokens"],
                                         cfg["imlp.template"], dim,
                                         rng.split("prompts"))
            self.text_encoder = FrozenTextEncoder(dim, dim, self.prompts.length,
                                                  cfg["imlp.text_seed"])
            self.logit_scale = make_logit_scale()

    def named_parameters(self):
        yield from self.id_head_cls.named_parameters("head/cls")
        if self.id_head_hub is not None:
            yield from self.id_head_hub.named_parameters("head/hub")
        if self.prompts is not None:
            yield from self.prompts.named_parameters()
            yield "imlp/logit_scale", self.logit_scale


def build_optimizer(cfg: RunConfig, model: VideoModel,
                    heads: TrainingHeads) -> Adam:
    base_params = list(model.named_parameters())
    prompt_params = []
    for name, param in heads.named_parameters():
        if name == "imlp/prompts":
            prompt_params.append((name, param))
        else:
            base_params.append((name, param))
    groups = {"": (base_params, 1.0)}
    if prompt_params:
        groups["prompt"] = (prompt_params, cfg["optim.prompt_lr_multiplier"])
    return Adam(groups, base_lr=cfg["optim.base_lr"],
                betas=(cfg["optim.beta1"], cfg["optim.beta2"]),
                eps=cfg["optim.eps"])


def all_parameters(model: VideoModel, heads: TrainingHeads):
    yield from model.named_parameters()
    yield from heads.named_parameters()


def checkpoint_records(model: VideoModel, heads: TrainingHeads | None) -> dict:
    records = {name: p.data for name, p in model.named_parameters()}
    if heads is not None:
        records.update({name: p.data for name, p in heads.named_parameters()})
    return records


def load_into(model: VideoModel, heads: TrainingHeads | None, path) -> None:
    from .errors import ConfigError
    records = checkpoint.load(path)
    targets = dict(model.named_parameters())
    if heads is not None:
        targets.update(dict(heads.named_parameters()))
    for name, param in targets.items():
        if name not in records:
            raise ConfigError(f"checkpoint missing parameter {name}")
        if records[name].shape != param.data.shape:
            raise ConfigError(
                f"checkpoint parameter {name} has shape {records[name].shape}, "
                f"model expects {param.data.shape}"
            )
        param.data[...] = records[name]


def compute_losses(cfg: RunConfig, model: VideoModel, heads: TrainingHeads,
                   frames: np.ndarray, labels: np.ndarray) -> dict:
    """Forward one mixed-modality batch and return named loss parts."""
    seq, hub_seq, _ = model.forward(Tensor(frames))
    parts = {
        "id_cls": identity_cross_entropy(seq, labels, heads.id_head_cls),
        "wrt_cls": weighted_regularized_triplet(seq, labels),
        "v2t": None,
        "id_hub": None,
        "wrt_hub": None,
    }
    if heads.prompts is not None:
        prototypes = encode_prompts(heads.prompts, heads.text_encoder)
        parts["v2t"] = visual_text_loss(seq, labels, prototypes,
                                        heads.logit_scale)
    if hub_seq is not None and heads.id_head_hub is not None:
        parts["id_hub"] = identity_cross_entropy(hub_seq, labels,
                                                 heads.id_head_hub)
        parts["wrt_hub"] = weighted_regularized_triplet(hub_seq, labels)
    return parts


def evaluate_model(cfg: RunConfig, model: VideoModel, dataset: Dataset,
                   direction: str):
    """RetrievalReport(s) on the test split for one or both directions."""
    test = dataset.test
    vis = [t for t in test if t.modality == VISIBLE]
    ir = [t for t in test if t.modality == INFRARED]
    use_hub = cfg["eval.use_hub_feature"]
    vis_index = extract_features(model, dataset, vis, use_hub_feature=use_hub)
    ir_index = extract_features(model, dataset, ir, use_hub_feature=use_hub)
    reports = {}
    if direction in ("ir2vis", "both"):
        reports["ir2vis"] = evaluate(ir_index, vis_index, direction="ir2vis")
    if direction in ("vis2ir", "both"):
        reports["vis2ir"] = evaluate(vis_index, ir_index, direction="vis2ir")
    return reports


def _fmt(x: float) -> str:
    return repr(float(x))


def train(cfg: RunConfig, out_dir, log=None) -> dict:
    """Run the configured training; returns a summary of losses and metrics."""
    set_default_dtype(np.float32 if cfg["train.precision"] == "single"
                      else np.float64)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .config import write_config
    write_config(cfg, out / "resolved.cfg")

    seed = cfg["train.seed"]
    root = Path(cfg["data.root"])
    if not (root / "manifest.tsv").exists():
        generate(cfg.synthetic_spec(), seed, root)
    dataset = load_dataset(root)

    rng = Rng(seed)
    model = build_model(cfg, rng.split("init"))
    heads = TrainingHeads(cfg, dataset.num_train_identities, rng.split("init"))
    optimizer = build_optimizer(cfg, model, heads)
    sampler_rng = rng.split("sampler")

    plan = cfg.batch_plan()
    weights = cfg.loss_weights()
    train_tracklets = dataset.train
    # An epoch makes `epoch_passes` sweeps over the training tracklets.
    steps_per_epoch = cfg["train.epoch_passes"] * max(
        1, len(train_tracklets) // plan.batch_size)
    total_steps = cfg["train.epochs"] * steps_per_epoch
    direction = cfg["train.eval_direction"]

    metrics_path = out / "metrics.log"
    lines: list[str] = []

    def emit(line: str) -> None:
        lines.append(line)
        if log is not None:
            log(line)

    checkpoint.save(out / "last.vldt", checkpoint_records(model, heads))
    best_map = -1.0
    epoch_losses = []
    step = 0
    try:
        for epoch in range(cfg["train.epochs"]):
            epoch_total = 0.0
            for _ in range(steps_per_epoch):
                batch = sample_batch(plan, dataset, train_tracklets,
                                     sampler_rng,
                                     apply_augment=cfg["data.augment"],
                                     pad=cfg["data.pad"])
                parts = compute_losses(cfg, model, heads, batch.frames,
                                       batch.labels)
                loss = total_loss(parts["id_cls"], parts["wrt_cls"],
                                  parts["v2t"], parts["id_hub"],
                                  parts["wrt_hub"], weights)
                lr = cosine_lr(step, total_steps, cfg["optim.base_lr"])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step(lr=lr)
                pieces = [f"step={step}", f"epoch={epoch}", f"lr={_fmt(lr)}",
                          f"loss_total={_fmt(loss.item())}"]
                for name, part in parts.items():
                    if part is not None:
                        pieces.append(f"loss_{name}={_fmt(part.item())}")
                emit(" ".join(pieces))
                epoch_total += loss.item()
                step += 1
            epoch_losses.append(epoch_total / steps_per_epoch)

            reports = evaluate_model(cfg, model, dataset, direction)
            epoch_map = float(np.mean([r.mean_ap for r in reports.values()]))
            for name, report in reports.items():
                emit(f"eval epoch={epoch} direction={name} "
                     f"rank1={_fmt(report.rank(1))} rank5={_fmt(report.rank(5))} "
                     f"rank10={_fmt(report.rank(10))} map={_fmt(report.mean_ap)}")
            if epoch_map > best_map:
                best_map = epoch_map
                checkpoint.save(out / "best.vldt",
                                checkpoint_records(model, heads))
            checkpoint.save(out / "last.vldt", checkpoint_records(model, heads))
    except DivergenceError:
        metrics_path.write_text("\n".join(lines) + "\n")
        raise

    checkpoint.save(out / "final.vldt", checkpoint_records(model, heads))
    reports = evaluate_model(cfg, model, dataset, direction)
    for name, report in reports.items():
        save_report(report, out / f"report_{name}.json", out / f"cmc_{name}.csv")
    metrics_path.write_text("\n".join(lines) + "\n")
    return {
        "epoch_losses": epoch_losses,
        "best_map": best_map,
        "final_maps": {name: r.mean_ap for name, r in reports.items()},
        "steps": step,
        "out_dir": str(out),
    }
